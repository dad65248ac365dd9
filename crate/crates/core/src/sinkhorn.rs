//! Entropic optimal transport between a question and one paragraph sentence.
//!
//! Each sentence is a point set of content-word embeddings weighted by
//! question frequency. The transport plan is found with log-domain
//! Sinkhorn-Knopp scaling; its row-wise argmaxes select the sentence words
//! the question aligns to, and the mean of their embeddings becomes the
//! sentence representation.
//!
//! Plans are treated as constants downstream: nothing here is differentiated.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};

use serde::{Deserialize, Serialize};

use crate::dataset::{content_indices, Sentence, Token};
use crate::embeddings::{marginal_distribution, FrequencyTable, ProbVector};
use crate::error::{Error, Result};
use crate::linalg::{logsumexp_by, Matrix};

static NONCONVERGED: AtomicU64 = AtomicU64::new(0);

/// Number of Sinkhorn solves (process-wide) that hit `max_iter` without
/// meeting the marginal tolerance.
pub fn nonconverged_count() -> u64 {
    NONCONVERGED.load(AtomicOrdering::Relaxed)
}

/// Pairwise Euclidean distances between two embedding lists.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    pub entries: Matrix,
    /// Token index (in the unfiltered sentence) of each row.
    pub row_tokens: Vec<usize>,
    /// Token index (in the unfiltered sentence) of each column.
    pub col_tokens: Vec<usize>,
}

pub fn cost_matrix(x: &[Vec<f64>], y: &[Vec<f64>]) -> Result<CostMatrix> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::EmptyInput("point set"));
    }
    let d = x[0].len();
    for v in x.iter().chain(y) {
        if v.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: v.len(),
            });
        }
    }
    let entries = Matrix::from_fn(x.len(), y.len(), |i, j| {
        x[i].iter()
            .zip(&y[j])
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    });
    Ok(CostMatrix {
        entries,
        row_tokens: (0..x.len()).collect(),
        col_tokens: (0..y.len()).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SinkhornConfig {
    /// Regularization strength as a multiple of the mean cost entry.
    pub eps_scale: f64,
    pub max_iter: usize,
    /// Max-norm tolerance on both marginals.
    pub tol: f64,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self {
            eps_scale: 0.1,
            max_iter: 500,
            tol: 1e-6,
        }
    }
}

impl SinkhornConfig {
    /// `eps_scale × mean(D)`; an all-zero cost matrix uses `eps_scale` itself
    /// (the plan is the independent coupling for any eps).
    pub fn epsilon_for(&self, cost: &Matrix) -> f64 {
        let mean = cost.mean();
        if mean > 0.0 {
            self.eps_scale * mean
        } else {
            self.eps_scale
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub plan: Matrix,
    pub epsilon: f64,
    pub iterations_used: usize,
    pub converged: bool,
    /// Max-norm marginal violation of the returned plan.
    pub marginal_error: f64,
}

struct Solved {
    plan: Matrix,
    iterations: usize,
    error: f64,
}

fn marginal_error(plan: &Matrix, p: &[f64], q: &[f64]) -> f64 {
    let rows = plan
        .row_sums()
        .iter()
        .zip(p)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let cols = plan
        .col_sums()
        .iter()
        .zip(q)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    rows.max(cols)
}

fn plan_from_potentials(f: &[f64], g: &[f64], d: &Matrix, eps: f64) -> Matrix {
    Matrix::from_fn(f.len(), g.len(), |i, j| {
        ((f[i] + g[j] - d.get(i, j)) / eps).exp()
    })
}

/// Log-domain alternating updates of the dual potentials, keeping the iterate
/// with the smallest marginal violation.
fn solve_log_domain(
    p: &[f64],
    q: &[f64],
    d: &Matrix,
    eps: f64,
    max_iter: usize,
    tol: f64,
) -> Solved {
    let (n, m) = (p.len(), q.len());
    let log_p: Vec<f64> = p.iter().map(|v| v.ln()).collect();
    let log_q: Vec<f64> = q.iter().map(|v| v.ln()).collect();
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; m];

    let mut best_plan = plan_from_potentials(&f, &g, d, eps);
    let mut best_err = marginal_error(&best_plan, p, q);
    let mut iterations = 0;

    while iterations < max_iter && !(best_err <= tol) {
        iterations += 1;
        for i in 0..n {
            f[i] = if log_p[i] == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                eps * (log_p[i] - logsumexp_by(m, |j| (g[j] - d.get(i, j)) / eps))
            };
        }
        for j in 0..m {
            g[j] = if log_q[j] == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                eps * (log_q[j] - logsumexp_by(n, |i| (f[i] - d.get(i, j)) / eps))
            };
        }
        let plan = plan_from_potentials(&f, &g, d, eps);
        let err = marginal_error(&plan, p, q);
        if err < best_err || best_err.is_nan() {
            best_err = err;
            best_plan = plan;
        }
    }
    Solved {
        plan: best_plan,
        iterations,
        error: best_err,
    }
}

fn lex_cmp(a: impl Iterator<Item = f64>, b: impl Iterator<Item = f64>) -> Ordering {
    for (x, y) in a.zip(b) {
        match x.total_cmp(&y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    Ordering::Equal
}

/// Compare the problem `(p, q, D)` with its transpose `(q, p, Dᵀ)`.
fn orientation(p: &[f64], q: &[f64], d: &Matrix) -> Ordering {
    let (n, m) = (p.len(), q.len());
    n.cmp(&m)
        .then_with(|| lex_cmp(p.iter().copied(), q.iter().copied()))
        .then_with(|| {
            lex_cmp(
                d.as_slice().iter().copied(),
                (0..m)
                    .flat_map(|i| (0..n).map(move |j| (i, j)))
                    .map(|(i, j)| d.get(j, i)),
            )
        })
}

/// Entropic OT plan for marginals `p`, `q` and cost `d`.
///
/// The problem is solved in a canonical orientation so that swapping the two
/// sides returns exactly the transposed plan.
pub fn sinkhorn_plan(
    p: &ProbVector,
    q: &ProbVector,
    d: &Matrix,
    eps: f64,
    max_iter: usize,
    tol: f64,
) -> Result<TransportPlan> {
    if p.len() != d.rows() || q.len() != d.cols() {
        return Err(Error::ShapeMismatch(format!(
            "marginals {}x{} vs cost {}x{}",
            p.len(),
            q.len(),
            d.rows(),
            d.cols()
        )));
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidEpsilon(eps));
    }
    if d.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("cost matrix"));
    }
    let (p, q) = (p.as_slice(), q.as_slice());
    let solved = match orientation(p, q, d) {
        Ordering::Less => solve_log_domain(p, q, d, eps, max_iter, tol),
        Ordering::Greater => {
            let t = solve_log_domain(q, p, &d.transpose(), eps, max_iter, tol);
            Solved {
                plan: t.plan.transpose(),
                ..t
            }
        }
        Ordering::Equal => {
            // Self-transposed instance: the exact solution is symmetric.
            let s = solve_log_domain(p, q, d, eps, max_iter, tol);
            let t = s.plan.transpose();
            let plan = Matrix::from_fn(p.len(), q.len(), |i, j| {
                0.5 * (s.plan.get(i, j) + t.get(i, j))
            });
            let error = marginal_error(&plan, p, q);
            Solved { plan, error, ..s }
        }
    };
    let converged = solved.error <= tol;
    if !converged {
        NONCONVERGED.fetch_add(1, AtomicOrdering::Relaxed);
        log::warn!(
            "sinkhorn did not converge in {} iterations (marginal error {:.3e}, eps {:.3e})",
            solved.iterations,
            solved.error,
            eps
        );
    }
    Ok(TransportPlan {
        plan: solved.plan,
        epsilon: eps,
        iterations_used: solved.iterations,
        converged,
        marginal_error: solved.error,
    })
}

/// `Σ_ij D_ij π_ij`
pub fn transport_cost(plan: &Matrix, d: &Matrix) -> Result<f64> {
    if plan.rows() != d.rows() || plan.cols() != d.cols() {
        return Err(Error::ShapeMismatch(format!(
            "plan {}x{} vs cost {}x{}",
            plan.rows(),
            plan.cols(),
            d.rows(),
            d.cols()
        )));
    }
    Ok(plan
        .as_slice()
        .iter()
        .zip(d.as_slice())
        .map(|(a, b)| a * b)
        .sum())
}

/// Transport cost plus `eps · KL(π ‖ p qᵀ)`.
pub fn regularized_cost(
    plan: &Matrix,
    d: &Matrix,
    p: &ProbVector,
    q: &ProbVector,
    eps: f64,
) -> Result<f64> {
    let linear = transport_cost(plan, d)?;
    let (p, q) = (p.as_slice(), q.as_slice());
    let mut kl = 0.0;
    for i in 0..plan.rows() {
        for j in 0..plan.cols() {
            let v = plan.get(i, j);
            if v > 0.0 {
                kl += v * (v / (p[i] * q[j])).ln();
            }
        }
    }
    Ok(linear + eps * kl)
}

/// Union of the row-wise argmax columns (ties go to the smallest index),
/// ascending.
pub fn relevant_context(plan: &Matrix) -> Vec<usize> {
    let mut out = BTreeSet::new();
    for i in 0..plan.rows() {
        let row = plan.row(i);
        let mut best = 0;
        for (j, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = j;
            }
        }
        out.insert(best);
    }
    out.into_iter().collect()
}

/// Mean of the selected embeddings.
pub fn sentence_representation(embeddings: &[Vec<f64>], relevant: &[usize]) -> Result<Vec<f64>> {
    let first = relevant
        .first()
        .ok_or(Error::EmptyInput("relevant context"))?;
    let dim = embeddings
        .get(*first)
        .ok_or_else(|| Error::ShapeMismatch(format!("index {first} out of range")))?
        .len();
    let mut acc = vec![0.0; dim];
    for &j in relevant {
        let v = embeddings
            .get(j)
            .ok_or_else(|| Error::ShapeMismatch(format!("index {j} out of range")))?;
        if v.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: v.len(),
            });
        }
        for (a, x) in acc.iter_mut().zip(v) {
            *a += x;
        }
    }
    let k = relevant.len() as f64;
    Ok(acc.into_iter().map(|a| a / k).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentResult {
    /// `None` for padding (and empty) sentences.
    pub plan: Option<TransportPlan>,
    pub cost_matrix: Option<CostMatrix>,
    /// Transport cost to the question.
    pub cost: f64,
    /// Selected columns, as indices into the filtered sentence tokens.
    pub relevant: Vec<usize>,
    pub representation: Vec<f64>,
}

impl AlignmentResult {
    fn padding(dim: usize) -> Self {
        Self {
            plan: None,
            cost_matrix: None,
            cost: 0.0,
            relevant: vec![0],
            representation: vec![0.0; dim],
        }
    }

    /// Token index (in the unfiltered sentence) of each relevant column.
    pub fn relevant_tokens(&self) -> Vec<usize> {
        match &self.cost_matrix {
            Some(c) => self.relevant.iter().map(|&j| c.col_tokens[j]).collect(),
            None => self.relevant.clone(),
        }
    }
}

/// Align the content words of `sentence` to those of `question`.
///
/// Padding sentences (and sentences with no tokens) get cost 0, a zero
/// representation and relevant context `{0}`.
pub fn align_sentence(
    question: &Sentence,
    question_vectors: &[Vec<f64>],
    sentence: &Sentence,
    sentence_vectors: &[Vec<f64>],
    ft: &FrequencyTable,
    cfg: &SinkhornConfig,
) -> Result<AlignmentResult> {
    let dim = question_vectors
        .first()
        .or(sentence_vectors.first())
        .map(Vec::len)
        .ok_or(Error::EmptyInput("embeddings"))?;
    let s_idx = content_indices(sentence);
    if sentence.is_padding || s_idx.is_empty() {
        return Ok(AlignmentResult::padding(dim));
    }
    let q_idx = content_indices(question);
    if q_idx.is_empty() {
        return Err(Error::EmptyInput("question tokens"));
    }
    let pick = |idx: &[usize], vs: &[Vec<f64>]| -> Result<Vec<Vec<f64>>> {
        idx.iter()
            .map(|&i| {
                vs.get(i)
                    .cloned()
                    .ok_or_else(|| Error::ShapeMismatch(format!("no embedding for token {i}")))
            })
            .collect()
    };
    let x = pick(&q_idx, question_vectors)?;
    let y = pick(&s_idx, sentence_vectors)?;
    let mut cost = cost_matrix(&x, &y)?;
    cost.row_tokens = q_idx.clone();
    cost.col_tokens = s_idx.clone();

    let tokens = |idx: &[usize], s: &Sentence| -> Vec<Token> {
        idx.iter().map(|&i| s.tokens[i].clone()).collect()
    };
    let p = marginal_distribution(&tokens(&q_idx, question), ft)?;
    let q = marginal_distribution(&tokens(&s_idx, sentence), ft)?;
    let eps = cfg.epsilon_for(&cost.entries);
    let plan = sinkhorn_plan(&p, &q, &cost.entries, eps, cfg.max_iter, cfg.tol)?;
    let total = transport_cost(&plan.plan, &cost.entries)?;
    let relevant = relevant_context(&plan.plan);
    let representation = sentence_representation(&y, &relevant)?;
    Ok(AlignmentResult {
        plan: Some(plan),
        cost_matrix: Some(cost),
        cost: total,
        relevant,
        representation,
    })
}
