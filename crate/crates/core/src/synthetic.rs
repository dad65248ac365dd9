//! Generator for a small corpus with a planted answer signal.
//!
//! Every question gets a center near a shared question anchor. Tokens of
//! correct candidates are drawn around that center; distractor tokens around
//! a separate distractor anchor. Contexts of answer windows come from the
//! answer cluster, contexts of distractor windows from the distractor one.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{pad_context, CandidateWindow, Corpus, QAInstance, Role, Sentence, Split};
use crate::embeddings::{EmbeddingStore, SentenceKey};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub train_questions: usize,
    pub dev_questions: usize,
    pub candidates: usize,
    pub dim: usize,
    pub seed: u64,
    /// Emit labels on context sentences.
    pub context_labels: bool,
    /// Spread of question centers around the question anchor.
    pub center_noise: f64,
    /// Per-token spread around a sentence's cluster center.
    pub token_noise: f64,
    /// Probability that a distractor window's context slot is missing.
    pub missing_context: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            train_questions: 200,
            dev_questions: 50,
            candidates: 5,
            dim: 16,
            seed: 0,
            context_labels: true,
            center_noise: 0.3,
            token_noise: 0.5,
            missing_context: 0.2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub train: Corpus,
    pub dev: Corpus,
    pub store: EmbeddingStore,
}

struct Gen<'a> {
    cfg: &'a SyntheticConfig,
    rng: ChaCha8Rng,
    store: EmbeddingStore,
    distractor: Vec<f64>,
}

impl Gen<'_> {
    fn gaussian(&mut self, scale: f64) -> Vec<f64> {
        (0..self.cfg.dim)
            .map(|_| scale * self.rng.sample::<f64, _>(StandardNormal))
            .collect()
    }

    fn around(&mut self, center: &[f64], scale: f64) -> Vec<f64> {
        let noise = self.gaussian(scale);
        center.iter().zip(noise).map(|(c, n)| c + n).collect()
    }

    /// Sentence of 2 to 4 content words plus a stopword and trailing period;
    /// content tokens sit around `center`, the rest are pure noise.
    fn sentence(
        &mut self,
        prefix: &str,
        center: &[f64],
        key: SentenceKey,
        role: Role,
        label: Option<bool>,
    ) -> Result<Sentence> {
        let n = self.rng.random_range(2..=4);
        let words: Vec<String> = (0..n).map(|k| format!("{prefix}{k}")).collect();
        let text = format!("the {} .", words.join(" "));
        let sentence = Sentence::new(text, role, label);
        let mut vectors = Vec::with_capacity(sentence.tokens.len());
        for tok in &sentence.tokens {
            let v = if tok.is_content {
                self.around(center, self.cfg.token_noise)
            } else {
                self.gaussian(self.cfg.token_noise)
            };
            vectors.push(v.into_iter().map(|x| x as f32).collect());
        }
        self.store.insert_sentence(key, vectors)?;
        Ok(sentence)
    }

    fn context_label(&self, truth: bool) -> Option<bool> {
        self.cfg.context_labels.then_some(truth)
    }

    fn instance(&mut self, qid: &str, anchor: &[f64]) -> Result<QAInstance> {
        let center = self.around(anchor, self.cfg.center_noise);
        let question = self.sentence(
            "qw",
            &center,
            SentenceKey::question(qid),
            Role::Question,
            None,
        )?;
        let answer_at = self.rng.random_range(0..self.cfg.candidates);
        let mut windows = Vec::with_capacity(self.cfg.candidates);
        for k in 0..self.cfg.candidates {
            let wid = format!("c{k}");
            let key = |role| SentenceKey::new(qid, &wid, role);
            let good = k == answer_at;
            let distractor = self.distractor.clone();
            let cand_center = if good {
                center.clone()
            } else {
                self.around(&distractor, self.cfg.center_noise)
            };
            let cand = self.sentence(
                "cw",
                &cand_center,
                key(Role::Candidate),
                Role::Candidate,
                Some(good),
            )?;
            let (prev, next) = if good {
                let prev_label = self.context_label(true);
                let prev = self.sentence("pw", &center, key(Role::Prev), Role::Prev, prev_label)?;
                let next_good = self.rng.random_bool(0.5);
                let next_center = if next_good {
                    center.clone()
                } else {
                    distractor.clone()
                };
                let next_label = self.context_label(next_good);
                let next =
                    self.sentence("nw", &next_center, key(Role::Next), Role::Next, next_label)?;
                (Some(prev), Some(next))
            } else {
                let slot = |g: &mut Self, prefix: &str, role| -> Result<Option<Sentence>> {
                    if g.rng.random_bool(g.cfg.missing_context) {
                        return Ok(None);
                    }
                    let label = g.context_label(false);
                    g.sentence(prefix, &cand_center, key(role), role, label)
                        .map(Some)
                };
                let prev = slot(self, "pw", Role::Prev)?;
                let next = slot(self, "nw", Role::Next)?;
                (prev, next)
            };
            windows.push(pad_context(CandidateWindow::new(
                wid.clone(),
                cand,
                prev,
                next,
            )?));
        }
        Ok(QAInstance {
            question_id: qid.to_string(),
            question,
            windows,
        })
    }
}

/// Generate train and dev splits sharing one embedding store.
pub fn generate(cfg: &SyntheticConfig) -> Result<SyntheticData> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let store = EmbeddingStore::new(cfg.dim)?;
    let anchor: Vec<f64> = (0..cfg.dim).map(|_| rng.sample(StandardNormal)).collect();
    let distractor: Vec<f64> = (0..cfg.dim).map(|_| rng.sample(StandardNormal)).collect();
    let mut g = Gen {
        cfg,
        rng,
        store,
        distractor,
    };
    let split = |g: &mut Gen, name: &str, n: usize, split: Split| -> Result<Corpus> {
        let instances = (0..n)
            .map(|i| g.instance(&format!("{name}-q{i}"), &anchor))
            .collect::<Result<Vec<_>>>()?;
        Corpus::new(split, instances)
    };
    let train = split(&mut g, "train", cfg.train_questions, Split::Train)?;
    let dev = split(&mut g, "dev", cfg.dev_questions, Split::Dev)?;
    Ok(SyntheticData {
        train,
        dev,
        store: g.store,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SyntheticConfig {
        SyntheticConfig {
            train_questions: 6,
            dev_questions: 3,
            dim: 4,
            ..SyntheticConfig::default()
        }
    }

    #[test]
    fn shape_and_coverage() {
        let d = generate(&small()).unwrap();
        assert_eq!(d.train.instances.len(), 6);
        assert_eq!(d.dev.split, Split::Dev);
        for inst in d.train.instances.iter().chain(&d.dev.instances) {
            assert_eq!(inst.windows.len(), 5);
            assert_eq!(inst.windows.iter().filter(|w| w.label()).count(), 1);
        }
        d.store.check_covers(&d.train).unwrap();
        d.store.check_covers(&d.dev).unwrap();
    }

    #[test]
    fn seeded() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a.train, b.train);
        let (mut x, mut y) = (Vec::new(), Vec::new());
        a.store.write(&mut x).unwrap();
        b.store.write(&mut y).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn context_labels_can_be_withheld() {
        let d = generate(&SyntheticConfig {
            context_labels: false,
            ..small()
        })
        .unwrap();
        for w in d.train.instances.iter().flat_map(|i| &i.windows) {
            assert_eq!(&w.labels()[1..], &[None, None]);
        }
    }
}
