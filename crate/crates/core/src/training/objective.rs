//! Batch objective `mean(L_AS2) + γ · mean(L_MI)` and its exact gradient.
//!
//! Each window's forward/backward pass is independent, so the batch is mapped
//! through [`Exec`] and the per-window results are summed in batch order.

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::linalg::sigmoid;
use crate::mine::{build_pair_sets, mi_loss, mi_loss_backward};
use crate::reranker::{bce_with_logit, ModelParams, PreparedWindow, NODES};

/// Partial derivatives of the batch loss, shaped like [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet(pub ModelParams);

impl GradientSet {
    pub fn zeros_like(params: &ModelParams) -> Self {
        GradientSet(params.zeros_like())
    }

    pub fn is_finite(&self) -> bool {
        self.0.is_finite()
    }
}

/// Batch loss split into its two terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    /// Mean binary cross-entropy of the candidate scores.
    pub as2: f64,
    /// Mean pair loss of the discriminator.
    pub mi: f64,
    /// `as2 + gamma · mi`
    pub total: f64,
}

struct WindowTerms {
    as2: f64,
    mi: f64,
    grad: Option<ModelParams>,
}

fn window_terms(
    params: &ModelParams,
    w: &PreparedWindow,
    gamma: f64,
    batch: f64,
    want_grad: bool,
) -> WindowTerms {
    let fwd = params.forward(&w.input);
    let label = w.label();
    let as2 = bce_with_logit(fwd.logit, label);
    let sets = build_pair_sets(&w.labels);
    if !want_grad {
        return WindowTerms {
            as2,
            mi: mi_loss(&fwd.h, &sets, &params.disc),
            grad: None,
        };
    }

    let mut grad = params.zeros_like();
    let mut d_h: [Vec<f64>; NODES] = std::array::from_fn(|_| vec![0.0; params.dim()]);
    let mi = if gamma != 0.0 {
        mi_loss_backward(
            &fwd.h,
            &sets,
            &params.disc,
            gamma / batch,
            &mut grad.disc,
            &mut d_h,
        )
    } else {
        mi_loss(&fwd.h, &sets, &params.disc)
    };
    let y = if label { 1.0 } else { 0.0 };
    let d_logit = (sigmoid(fwd.logit) - y) / batch;
    params.backward(&fwd, d_logit, d_h, &mut grad);
    WindowTerms {
        as2,
        mi,
        grad: Some(grad),
    }
}

fn reduce(terms: &[WindowTerms], gamma: f64) -> Result<LossParts> {
    if terms.is_empty() {
        return Err(Error::EmptyInput("batch"));
    }
    let n = terms.len() as f64;
    let as2 = terms.iter().map(|t| t.as2).sum::<f64>() / n;
    let mi = terms.iter().map(|t| t.mi).sum::<f64>() / n;
    let total = as2 + gamma * mi;
    if !total.is_finite() {
        return Err(Error::NonFinite("loss"));
    }
    Ok(LossParts { as2, mi, total })
}

/// Joint batch loss.
pub fn joint_loss(
    batch: &[&PreparedWindow],
    params: &ModelParams,
    gamma: f64,
    exec: Exec,
) -> Result<LossParts> {
    let n = batch.len() as f64;
    let terms = exec.map(batch, |w| window_terms(params, w, gamma, n, false));
    reduce(&terms, gamma)
}

/// Joint batch loss and its gradient with respect to every parameter tensor.
/// Transport plans, costs and embeddings are constants.
pub fn gradients(
    batch: &[&PreparedWindow],
    params: &ModelParams,
    gamma: f64,
    exec: Exec,
) -> Result<(LossParts, GradientSet)> {
    let n = batch.len() as f64;
    let mut terms = exec.map(batch, |w| window_terms(params, w, gamma, n, true));
    let loss = reduce(&terms, gamma)?;
    let mut total = params.zeros_like();
    for t in terms.iter_mut() {
        total.add_assign(t.grad.as_ref().expect("gradient requested"));
    }
    let grads = GradientSet(total);
    if !grads.is_finite() {
        return Err(Error::NonFinite("gradient"));
    }
    Ok((loss, grads))
}

/// Batch loss without the finiteness check, for diagnostics.
pub(crate) fn raw_total(batch: &[&PreparedWindow], params: &ModelParams, gamma: f64) -> f64 {
    let n = batch.len() as f64;
    let terms: Vec<WindowTerms> = batch
        .iter()
        .map(|w| window_terms(params, w, gamma, n, false))
        .collect();
    let k = terms.len() as f64;
    terms.iter().map(|t| t.as2).sum::<f64>() / k
        + gamma * terms.iter().map(|t| t.mi).sum::<f64>() / k
}

/// Mean pair loss over windows (no gradient).
pub fn mi_loss_mean(windows: &[&PreparedWindow], params: &ModelParams, exec: Exec) -> Result<f64> {
    Ok(joint_loss(windows, params, 0.0, exec)?.mi)
}
