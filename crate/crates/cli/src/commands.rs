use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use otrank::dataset::{content_indices, load_corpus, save_corpus, NODE_ROLES};
use otrank::embeddings::{build_frequency_table, EmbeddingStore};
use otrank::metrics::{evaluate, per_question_tsv, rank_prepared};
use otrank::reranker::{prepare_instances, score_window};
use otrank::sinkhorn::{nonconverged_count, AlignmentResult};
use otrank::synthetic::{generate, SyntheticConfig};
use otrank::training::{gradcheck, train};
use otrank::{Checkpoint, Corpus, Exec, Split, TrainConfig};
use serde::Serialize;

use crate::args::*;
use crate::config::{self, CliConfig, ConfigPaths};
use crate::error::{CliError, Result};

pub fn run(cli: Cli) -> Result<()> {
    let exec = if cli.sequential {
        Exec::Sequential
    } else {
        Exec::default()
    };
    match cli.command {
        Command::BuildFreq(a) => build_freq(&a),
        Command::Train(a) => train_cmd(&a, exec),
        Command::Rerank(a) => rerank(&a, exec),
        Command::Eval(a) => eval(&a, exec),
        Command::Align(a) => align(&a),
        Command::Gradcheck(a) => gradcheck_cmd(&a),
        Command::Synth(a) => synth(&a),
    }
}

fn input_file(flag: &str, path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Validation(format!(
            "--{flag}: no such file: {}",
            path.display()
        )))
    }
}

fn output_file(flag: &str, path: &Path) -> Result<()> {
    let parent = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    if parent.is_dir() {
        Ok(())
    } else {
        Err(CliError::Validation(format!(
            "--{flag}: directory does not exist: {}",
            parent.display()
        )))
    }
}

fn write_output(flag: &str, path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes)
        .map_err(|e| CliError::Runtime(format!("--{flag}: cannot write {}: {e}", path.display())))
}

/// Write to `out` if given, otherwise stdout.
fn emit(out: Option<&PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(p) => write_output("out", p, text.as_bytes()),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Runtime(format!("stdout: {e}"))),
    }
}

fn pretty(v: &impl Serialize) -> String {
    serde_json::to_string_pretty(v).expect("report serializes") + "\n"
}

fn warn_nonconverged() {
    let n = nonconverged_count();
    if n > 0 {
        log::warn!("{n} transport problems stopped at max_iter before reaching tol");
    }
}

/// Checkpoint, store and one split, checked against each other.
fn load_model_inputs(checkpoint: &Path, embeddings: &Path) -> Result<(Checkpoint, EmbeddingStore)> {
    let ck = Checkpoint::load(checkpoint)?;
    let store = EmbeddingStore::load(embeddings)?;
    if store.dim() != ck.params.dim() {
        return Err(CliError::Validation(format!(
            "--embeddings: {} has dim {}, the checkpoint expects {}",
            embeddings.display(),
            store.dim(),
            ck.params.dim()
        )));
    }
    Ok((ck, store))
}

fn load_split(path: &Path, split: Split, store: &EmbeddingStore) -> Result<Corpus> {
    let c = load_corpus(path, split)?;
    store.check_covers(&c).map_err(|e| {
        CliError::Validation(format!("--embeddings do not cover {}: {e}", path.display()))
    })?;
    Ok(c)
}

fn build_freq(a: &BuildFreqArgs) -> Result<()> {
    input_file("train", &a.train)?;
    output_file("out", &a.out)?;
    let ft = build_frequency_table(&load_corpus(&a.train, Split::Train)?)?;
    log::info!(
        "{} questions, {} distinct words",
        ft.num_questions,
        ft.counts.len()
    );
    ft.save(&a.out)?;
    Ok(())
}

fn train_cmd(a: &TrainArgs, exec: Exec) -> Result<()> {
    if let Some(c) = &a.config {
        input_file("config", c)?;
    }
    let plan = config::resolve(a)?;
    input_file("train", &plan.train)?;
    if let Some(d) = &plan.dev {
        input_file("dev", d)?;
    }
    input_file("embeddings", &plan.embeddings)?;
    plan.config.validate()?;
    fs::create_dir_all(&plan.output_dir).map_err(|e| {
        CliError::Validation(format!(
            "--output-dir: cannot create {}: {e}",
            plan.output_dir.display()
        ))
    })?;
    log::info!(
        "effective config: {}",
        serde_json::to_string(&plan.config).expect("config serializes")
    );

    let store = EmbeddingStore::load(&plan.embeddings)?;
    let train_c = load_split(&plan.train, Split::Train, &store)?;
    let dev_c = plan
        .dev
        .as_ref()
        .map(|d| load_split(d, Split::Dev, &store))
        .transpose()?;
    let out = train(&train_c, dev_c.as_ref(), &store, &plan.config, exec)?;
    warn_nonconverged();

    let dir = &plan.output_dir;
    out.checkpoint.save(dir.join("model.ckpt"))?;
    let best_path = dir.join("model.best.ckpt");
    match &out.best {
        Some(b) => {
            log::info!("best dev MAP at epoch {}", b.epoch);
            b.save(&best_path)?;
        }
        None if best_path.exists() => {
            // left over from an earlier run with dev data
            fs::remove_file(&best_path)
                .map_err(|e| CliError::Runtime(format!("{}: {e}", best_path.display())))?;
        }
        None => {}
    }
    let mut log_text = String::new();
    for entry in &out.log {
        log_text.push_str(&serde_json::to_string(entry).expect("log serializes"));
        log_text.push('\n');
    }
    write_output(
        "output-dir",
        &dir.join("train_log.jsonl"),
        log_text.as_bytes(),
    )
}

#[derive(Serialize)]
struct RankedCandidate<'a> {
    id: &'a str,
    score: f64,
}

#[derive(Serialize)]
struct RankingLine<'a> {
    question_id: &'a str,
    ranking: Vec<RankedCandidate<'a>>,
}

fn rerank(a: &RerankArgs, exec: Exec) -> Result<()> {
    input_file("checkpoint", &a.checkpoint)?;
    input_file("split", &a.split)?;
    input_file("embeddings", &a.embeddings)?;
    output_file("out", &a.out)?;
    let (ck, store) = load_model_inputs(&a.checkpoint, &a.embeddings)?;
    let corpus = load_split(&a.split, Split::Test, &store)?;
    let prepared = prepare_instances(
        &corpus.instances,
        &store,
        &ck.freq,
        &ck.config.sinkhorn,
        exec,
    )?;
    warn_nonconverged();
    let rankings = exec.map(&prepared, |inst| rank_prepared(inst, &ck.params));
    let mut text = String::new();
    for (inst, r) in prepared.iter().zip(&rankings) {
        let line = RankingLine {
            question_id: &inst.question_id,
            ranking: r
                .entries
                .iter()
                .map(|(id, score)| RankedCandidate { id, score: *score })
                .collect(),
        };
        text.push_str(&serde_json::to_string(&line).expect("ranking serializes"));
        text.push('\n');
    }
    write_output("out", &a.out, text.as_bytes())
}

fn eval(a: &EvalArgs, exec: Exec) -> Result<()> {
    input_file("checkpoint", &a.checkpoint)?;
    for s in &a.split {
        input_file("split", s)?;
    }
    input_file("embeddings", &a.embeddings)?;
    if let Some(p) = &a.out {
        output_file("out", p)?;
    }
    if let Some(p) = &a.per_question {
        output_file("per-question", p)?;
    }
    if a.split.len() > 1 && !a.combine_dev_test {
        return Err(CliError::Validation(
            "several --split values given; add --combine-dev-test to pool them".into(),
        ));
    }
    let (ck, store) = load_model_inputs(&a.checkpoint, &a.embeddings)?;
    let parts = a
        .split
        .iter()
        .map(|s| load_split(s, Split::Test, &store))
        .collect::<Result<Vec<_>>>()?;
    let corpus = Corpus::concat(Split::Test, parts)?;
    let ev = evaluate(&corpus, &ck, &store, exec)?;
    warn_nonconverged();
    log::info!(
        "{} of {} questions have a correct candidate",
        ev.report.questions,
        corpus.instances.len()
    );
    if let Some(p) = &a.per_question {
        write_output(
            "per-question",
            p,
            per_question_tsv(&ev.questions).as_bytes(),
        )?;
    }
    emit(a.out.as_ref(), &pretty(&ev.report))
}

#[derive(Serialize)]
struct TokenRef {
    index: usize,
    surface: String,
}

#[derive(Serialize)]
struct NodeReport {
    role: &'static str,
    text: String,
    is_padding: bool,
    label: Option<bool>,
    cost: f64,
    epsilon: Option<f64>,
    converged: Option<bool>,
    iterations: Option<usize>,
    /// Rows follow the question tokens, columns the sentence tokens below.
    plan: Option<Vec<Vec<f64>>>,
    sentence_tokens: Vec<TokenRef>,
    relevant: Vec<TokenRef>,
    representation_norm: f64,
}

#[derive(Serialize)]
struct AlignReport {
    question_id: String,
    window_id: String,
    question_tokens: Vec<TokenRef>,
    score: f64,
    /// Edge weights, rows and columns in node order (candidate, prev, next).
    alpha: [[f64; 3]; 3],
    nodes: Vec<NodeReport>,
}

fn token_refs(s: &otrank::Sentence, idx: &[usize]) -> Vec<TokenRef> {
    idx.iter()
        .map(|&i| TokenRef {
            index: i,
            surface: s.tokens[i].surface.clone(),
        })
        .collect()
}

fn node_report(s: &otrank::Sentence, al: &AlignmentResult) -> NodeReport {
    let plan = al.plan.as_ref();
    NodeReport {
        role: s.role.as_str(),
        text: s.text.clone(),
        is_padding: s.is_padding,
        label: s.label,
        cost: al.cost,
        epsilon: plan.map(|p| p.epsilon),
        converged: plan.map(|p| p.converged),
        iterations: plan.map(|p| p.iterations_used),
        plan: plan.map(|p| p.plan.to_rows()),
        sentence_tokens: token_refs(s, &content_indices(s)),
        relevant: if s.is_padding {
            Vec::new()
        } else {
            token_refs(s, &al.relevant_tokens())
        },
        representation_norm: al.representation.iter().map(|v| v * v).sum::<f64>().sqrt(),
    }
}

fn align(a: &AlignArgs) -> Result<()> {
    input_file("checkpoint", &a.checkpoint)?;
    input_file("split", &a.split)?;
    input_file("embeddings", &a.embeddings)?;
    if let Some(p) = &a.out {
        output_file("out", p)?;
    }
    let (ck, store) = load_model_inputs(&a.checkpoint, &a.embeddings)?;
    let corpus = load_corpus(&a.split, Split::Test)?;
    let inst = corpus
        .instances
        .iter()
        .find(|i| i.question_id == a.question_id)
        .ok_or_else(|| {
            CliError::Validation(format!(
                "--question-id: no question {:?} in {}",
                a.question_id,
                a.split.display()
            ))
        })?;
    let w = inst
        .windows
        .iter()
        .find(|w| w.id == a.window_id)
        .ok_or_else(|| {
            CliError::Validation(format!(
                "--window-id: question {:?} has no candidate {:?}",
                a.question_id, a.window_id
            ))
        })?;
    let scored = score_window(inst, w, &store, &ck.freq, &ck.params, &ck.config.sinkhorn)?;
    let sentences = w.sentences()?;
    debug_assert_eq!(sentences.map(|s| s.role), NODE_ROLES);
    let report = AlignReport {
        question_id: inst.question_id.clone(),
        window_id: w.id.clone(),
        question_tokens: token_refs(&inst.question, &content_indices(&inst.question)),
        score: scored.score,
        alpha: scored.alpha,
        nodes: sentences
            .iter()
            .zip(&scored.alignments)
            .map(|(s, al)| node_report(s, al))
            .collect(),
    };
    emit(a.out.as_ref(), &pretty(&report))
}

fn gradcheck_cmd(a: &GradcheckArgs) -> Result<()> {
    if let Some(p) = &a.out {
        output_file("out", p)?;
    }
    let report = gradcheck(a.seed)?;
    for t in &report.tensors {
        log::debug!("{}: max relative error {:.3e}", t.name, t.max_rel_error);
    }
    emit(a.out.as_ref(), &pretty(&report))?;
    if report.passed {
        Ok(())
    } else {
        let worst = report
            .tensors
            .iter()
            .max_by(|x, y| x.max_rel_error.total_cmp(&y.max_rel_error))
            .expect("at least one tensor");
        Err(CliError::Runtime(format!(
            "gradient check failed: {} has relative error {:.3e} (tolerance {:.0e})",
            worst.name, worst.max_rel_error, report.tolerance
        )))
    }
}

fn synth(a: &SynthArgs) -> Result<()> {
    fs::create_dir_all(&a.out_dir).map_err(|e| {
        CliError::Validation(format!(
            "--out-dir: cannot create {}: {e}",
            a.out_dir.display()
        ))
    })?;
    let data = generate(&SyntheticConfig {
        train_questions: a.train_questions,
        dev_questions: a.dev_questions,
        candidates: a.candidates,
        dim: a.dim,
        seed: a.seed,
        ..SyntheticConfig::default()
    })?;
    save_corpus(&data.train, a.out_dir.join("train.jsonl"))?;
    save_corpus(&data.dev, a.out_dir.join("dev.jsonl"))?;
    data.store.save(a.out_dir.join("embeddings.otrk"))?;
    // settings that fit the synthetic task in a few seconds
    let cfg = CliConfig {
        paths: ConfigPaths {
            train: Some("train.jsonl".into()),
            dev: Some("dev.jsonl".into()),
            embeddings: Some("embeddings.otrk".into()),
            output_dir: Some("run".into()),
        },
        train: TrainConfig {
            learning_rate: 1e-3,
            batch_size: 16,
            epochs: 10,
            hidden: 64,
            seed: a.seed,
            ..TrainConfig::default()
        },
    };
    write_output(
        "out-dir",
        &a.out_dir.join("config.json"),
        pretty(&config::to_json(&cfg)).as_bytes(),
    )
}
