use otrank::dataset::{
    content_indices, pad_context, read_corpus, tokenize, write_corpus, CandidateWindow, Role,
    Sentence, Split,
};
use otrank::embeddings::{build_frequency_table, marginal_distribution, EmbeddingStore};
use otrank::synthetic::{generate, SyntheticConfig};
use otrank::Corpus;
use proptest::prelude::*;

/// Short sentences over a small vocabulary with stopwords and punctuation.
fn text() -> impl Strategy<Value = String> {
    let words = prop::sample::select(vec![
        "the",
        "a",
        "of",
        "Paris",
        "river",
        "is",
        "capital",
        "1889",
        "tower",
        "?",
        "(built)",
        "\"tall\"",
        "\u{2014}",
        "it's",
        "Ünïcode",
        ",",
        "and",
    ]);
    prop::collection::vec(words, 0..9).prop_map(|w| w.join(" "))
}

fn small_synthetic(seed: u64) -> otrank::synthetic::SyntheticData {
    generate(&SyntheticConfig {
        train_questions: 6,
        dev_questions: 3,
        candidates: 3,
        dim: 4,
        seed,
        ..SyntheticConfig::default()
    })
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn tokenize_is_deterministic_and_lowercase(s in text()) {
        let a = tokenize(&s);
        prop_assert_eq!(&a, &tokenize(&s));
        for t in &a {
            prop_assert_eq!(&t.normalized, &t.surface.to_lowercase());
            prop_assert!(!t.surface.is_empty());
        }
    }

    #[test]
    fn content_tokens_are_an_ordered_subset(s in text()) {
        let sent = Sentence::new(s, Role::Candidate, Some(true));
        let idx = content_indices(&sent);
        prop_assert!(idx.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(idx.iter().all(|&i| i < sent.tokens.len()));
        let any_content = sent.tokens.iter().any(|t| t.is_content);
        if any_content {
            prop_assert!(idx.iter().all(|&i| sent.tokens[i].is_content));
            prop_assert_eq!(idx.len(), sent.tokens.iter().filter(|t| t.is_content).count());
        } else {
            // nothing survives filtering: every token is kept
            prop_assert_eq!(idx, (0..sent.tokens.len()).collect::<Vec<_>>());
        }
    }

    #[test]
    fn padding_is_idempotent(has_prev in any::<bool>(), has_next in any::<bool>(), s in text()) {
        let w = CandidateWindow::new(
            "w",
            Sentence::new(s.clone(), Role::Candidate, Some(false)),
            has_prev.then(|| Sentence::new(s.clone(), Role::Prev, None)),
            has_next.then(|| Sentence::new(s, Role::Next, Some(true))),
        )
        .unwrap();
        let once = pad_context(w);
        prop_assert!(once.sentences().is_ok());
        prop_assert_eq!(once.prev.as_ref().unwrap().is_padding, !has_prev);
        prop_assert_eq!(once.next.as_ref().unwrap().is_padding, !has_next);
        prop_assert_eq!(pad_context(once.clone()), once);
    }

    #[test]
    fn marginals_are_distributions(seed in 0u64..50, s in text()) {
        let data = small_synthetic(seed);
        let ft = build_frequency_table(&data.train).unwrap();
        let tokens = tokenize(&s);
        prop_assume!(!tokens.is_empty());
        let m = marginal_distribution(&tokens, &ft).unwrap();
        prop_assert_eq!(m.len(), tokens.len());
        prop_assert!(m.as_slice().iter().all(|v| *v > 0.0));
        prop_assert!((m.as_slice().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn frequency_table_ignores_question_order(seed in 0u64..50, rot in 0usize..6) {
        let data = small_synthetic(seed);
        let mut shuffled = data.train.instances.clone();
        shuffled.rotate_left(rot);
        shuffled.reverse();
        let other = Corpus::new(Split::Train, shuffled).unwrap();
        prop_assert_eq!(build_frequency_table(&data.train).unwrap(), build_frequency_table(&other).unwrap());
    }
}

#[test]
fn corpus_round_trips_through_jsonl() {
    for seed in 0..5 {
        let data = small_synthetic(seed);
        for c in [&data.train, &data.dev] {
            let mut buf = Vec::new();
            write_corpus(c, &mut buf).unwrap();
            let back = read_corpus(buf.as_slice(), c.split).unwrap();
            assert_eq!(&back, c);
            let mut again = Vec::new();
            write_corpus(&back, &mut again).unwrap();
            assert_eq!(buf, again);
        }
    }
}

#[test]
fn store_round_trips_bit_exactly() {
    let data = small_synthetic(11);
    let mut buf = Vec::new();
    data.store.write(&mut buf).unwrap();
    let back = EmbeddingStore::read(buf.as_slice()).unwrap();
    assert_eq!(back.dim(), data.store.dim());
    assert_eq!(back.count(), data.store.count());
    let mut again = Vec::new();
    back.write(&mut again).unwrap();
    assert_eq!(buf, again);
    back.check_covers(&data.train).unwrap();
    back.check_covers(&data.dev).unwrap();
}

#[test]
fn truncated_store_is_rejected() {
    let data = small_synthetic(12);
    let mut buf = Vec::new();
    data.store.write(&mut buf).unwrap();
    buf.truncate(buf.len() - 3);
    assert!(EmbeddingStore::read(buf.as_slice()).is_err());
}
