//! Ranking and the P@1 / MAP / MRR evaluation metrics.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::dataset::Corpus;
use crate::embeddings::EmbeddingStore;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::reranker::{prepare_instances, ModelParams, PreparedInstance};
use crate::training::Checkpoint;

/// Candidates sorted by descending score; ties keep input order.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    pub entries: Vec<(String, f64)>,
}

impl Ranking {
    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(id, _)| id.as_str())
    }

    /// Relevance flags in ranked order. Ids without a label count as
    /// non-relevant.
    pub fn relevance(&self, labels: &HashMap<String, bool>) -> Vec<bool> {
        self.ids()
            .map(|id| labels.get(id).copied().unwrap_or(false))
            .collect()
    }
}

pub fn rank_candidates(scores: &[(String, f64)]) -> Ranking {
    let mut entries = scores.to_vec();
    entries.sort_by(|a, b| b.1.total_cmp(&a.1));
    Ranking { entries }
}

/// 1 if the top-ranked item is relevant.
pub fn precision_at_1(relevance: &[bool]) -> f64 {
    if relevance.first().copied().unwrap_or(false) {
        1.0
    } else {
        0.0
    }
}

pub fn average_precision(relevance: &[bool]) -> Result<f64> {
    let total = relevance.iter().filter(|r| **r).count();
    if total == 0 {
        return Err(Error::EmptyInput("relevant items"));
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (k, &rel) in relevance.iter().enumerate() {
        if rel {
            hits += 1;
            sum += hits as f64 / (k + 1) as f64;
        }
    }
    Ok(sum / total as f64)
}

pub fn reciprocal_rank(relevance: &[bool]) -> Result<f64> {
    relevance
        .iter()
        .position(|r| *r)
        .map(|k| 1.0 / (k + 1) as f64)
        .ok_or(Error::EmptyInput("relevant items"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionMetrics {
    pub question_id: String,
    pub p_at_1: f64,
    pub ap: f64,
    pub rr: f64,
    pub num_candidates: usize,
    pub num_relevant: usize,
}

/// Metrics for one question, or `None` when it has no relevant candidate
/// (such questions are left out of the aggregate).
pub fn question_metrics(
    question_id: &str,
    ranking: &Ranking,
    labels: &HashMap<String, bool>,
) -> Option<QuestionMetrics> {
    let rel = ranking.relevance(labels);
    let ap = average_precision(&rel).ok()?;
    Some(QuestionMetrics {
        question_id: question_id.to_string(),
        p_at_1: precision_at_1(&rel),
        ap,
        rr: reciprocal_rank(&rel).ok()?,
        num_candidates: rel.len(),
        num_relevant: rel.iter().filter(|r| **r).count(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub p_at_1: f64,
    pub map: f64,
    pub mrr: f64,
    /// Questions that entered the averages.
    pub questions: usize,
}

/// Average per-question metrics in input order.
pub fn aggregate(per_question: &[QuestionMetrics]) -> Result<MetricsReport> {
    if per_question.is_empty() {
        return Err(Error::EmptyInput("evaluable questions"));
    }
    let n = per_question.len() as f64;
    let mean = |f: fn(&QuestionMetrics) -> f64| per_question.iter().map(f).sum::<f64>() / n;
    Ok(MetricsReport {
        p_at_1: mean(|q| q.p_at_1),
        map: mean(|q| q.ap),
        mrr: mean(|q| q.rr),
        questions: per_question.len(),
    })
}

/// Tab-separated per-question table with a header row.
pub fn per_question_tsv(rows: &[QuestionMetrics]) -> String {
    let mut out = String::from("question_id\tp_at_1\tap\trr\tcandidates\trelevant\n");
    for r in rows {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            r.question_id, r.p_at_1, r.ap, r.rr, r.num_candidates, r.num_relevant
        ));
    }
    out
}

/// Aggregate report plus the per-question rows behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: MetricsReport,
    pub questions: Vec<QuestionMetrics>,
}

/// Score every window of a prepared question and rank them.
pub fn rank_prepared(instance: &PreparedInstance, params: &ModelParams) -> Ranking {
    let scores: Vec<(String, f64)> = instance
        .windows
        .iter()
        .map(|w| (w.window_id.clone(), params.forward(&w.input).score))
        .collect();
    rank_candidates(&scores)
}

pub fn evaluate_prepared(
    instances: &[PreparedInstance],
    params: &ModelParams,
    exec: Exec,
) -> Result<Evaluation> {
    let rows = exec.map(instances, |inst| {
        let labels: HashMap<String, bool> = inst
            .windows
            .iter()
            .map(|w| (w.window_id.clone(), w.label()))
            .collect();
        question_metrics(&inst.question_id, &rank_prepared(inst, params), &labels)
    });
    let questions: Vec<QuestionMetrics> = rows.into_iter().flatten().collect();
    Ok(Evaluation {
        report: aggregate(&questions)?,
        questions,
    })
}

/// Align, score and rank every question of `corpus` with a trained model.
pub fn evaluate(
    corpus: &Corpus,
    checkpoint: &Checkpoint,
    store: &EmbeddingStore,
    exec: Exec,
) -> Result<Evaluation> {
    if store.dim() != checkpoint.params.dim() {
        return Err(Error::DimensionMismatch {
            expected: checkpoint.params.dim(),
            found: store.dim(),
        });
    }
    let prepared = prepare_instances(
        &corpus.instances,
        store,
        &checkpoint.freq,
        &checkpoint.config.sinkhorn,
        exec,
    )?;
    evaluate_prepared(&prepared, &checkpoint.params, exec)
}
