//! Mutual-information regularizer over the final sentence vectors.
//!
//! A discriminator `U` scores ordered pairs `[h_i; h_j]`. Pairs of answer
//! sentences should score high and (answer, non-answer) pairs low:
//!
//! ```text
//! L_MI = − Σ_{(i,j) ∈ I+} log U([h_i; h_j]) − Σ_{(i,j) ∈ I−} log(1 − U([h_i; h_j]))
//! ```
//!
//! Node indices are 0-based in node order: 0 = candidate, 1 = prev, 2 = next.

use crate::error::{Error, Result};
use crate::linalg::{sigmoid, softplus};
use crate::reranker::{Ffn, NODES};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PairIndexSets {
    /// Ordered pairs of distinct answer sentences.
    pub positive: Vec<(usize, usize)>,
    /// Ordered (answer, non-answer) pairs.
    pub negative: Vec<(usize, usize)>,
}

impl PairIndexSets {
    pub fn is_empty(&self) -> bool {
        self.positive.is_empty() && self.negative.is_empty()
    }
}

/// Build the pair sets from node labels. Unknown labels count as non-answers.
pub fn build_pair_sets(labels: &[Option<bool>; NODES]) -> PairIndexSets {
    let answer: [bool; NODES] = std::array::from_fn(|k| labels[k] == Some(true));
    let mut sets = PairIndexSets::default();
    for i in 0..NODES {
        if !answer[i] {
            continue;
        }
        for j in 0..NODES {
            if i == j {
                continue;
            }
            if answer[j] {
                sets.positive.push((i, j));
            } else {
                sets.negative.push((i, j));
            }
        }
    }
    sets
}

fn pair_input(h_i: &[f64], h_j: &[f64]) -> Vec<f64> {
    let mut x = Vec::with_capacity(h_i.len() + h_j.len());
    x.extend_from_slice(h_i);
    x.extend_from_slice(h_j);
    x
}

/// `U([h_i; h_j])`, a probability. Order matters.
pub fn discriminator(h_i: &[f64], h_j: &[f64], disc: &Ffn) -> Result<f64> {
    if h_i.len() != h_j.len() || h_i.len() + h_j.len() != disc.input_dim() {
        return Err(Error::ShapeMismatch(format!(
            "pair of lengths {} and {} for a discriminator with input {}",
            h_i.len(),
            h_j.len(),
            disc.input_dim()
        )));
    }
    Ok(sigmoid(disc.forward(&pair_input(h_i, h_j))))
}

/// The pair loss for one window. Terms are evaluated from logits
/// (`-log σ(s) = softplus(-s)`), so they stay finite.
pub fn mi_loss(h: &[Vec<f64>], sets: &PairIndexSets, disc: &Ffn) -> f64 {
    let term = |i: usize, j: usize| disc.forward(&pair_input(&h[i], &h[j]));
    let pos: f64 = sets
        .positive
        .iter()
        .map(|&(i, j)| softplus(-term(i, j)))
        .sum();
    let neg: f64 = sets
        .negative
        .iter()
        .map(|&(i, j)| softplus(term(i, j)))
        .sum();
    pos + neg
}

/// Evaluate the loss and accumulate `weight × ∂loss` into `grad` (the
/// discriminator) and `d_h` (the node vectors). Returns the unweighted loss.
pub fn mi_loss_backward(
    h: &[Vec<f64>],
    sets: &PairIndexSets,
    disc: &Ffn,
    weight: f64,
    grad: &mut Ffn,
    d_h: &mut [Vec<f64>],
) -> f64 {
    let dim = h[0].len();
    let mut loss = 0.0;
    let pairs = sets
        .positive
        .iter()
        .map(|p| (p, true))
        .chain(sets.negative.iter().map(|p| (p, false)));
    for (&(i, j), positive) in pairs {
        let (cache, s) = disc.forward_cached(&pair_input(&h[i], &h[j]));
        let ds = if positive {
            loss += softplus(-s);
            sigmoid(s) - 1.0
        } else {
            loss += softplus(s);
            sigmoid(s)
        };
        let dx = disc.backward(&cache, weight * ds, grad);
        for (a, b) in d_h[i].iter_mut().zip(&dx[..dim]) {
            *a += b;
        }
        for (a, b) in d_h[j].iter_mut().zip(&dx[dim..]) {
            *a += b;
        }
    }
    loss
}
