//! Finite-difference audit of the analytic gradients on a small random model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::exec::Exec;
use crate::reranker::{GraphInput, ModelParams, ModelShape, PreparedWindow, NODES};

use super::{gradients, joint_loss, GradientSet};

pub const GRADCHECK_STEP: f64 = 1e-4;
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

/// Denominator floor for the relative error, so components that are zero
/// up to rounding do not blow it up.
const REL_FLOOR: f64 = 1e-6;

/// Required distance between any ReLU pre-activation and zero.
pub const KINK_MARGIN: f64 = 1e-3;

const DIM: usize = 6;
const HIDDEN: usize = 8;
const GCN_LAYERS: usize = 2;
const GAMMA: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorCheck {
    pub name: String,
    pub len: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// Index of the component with the largest relative error.
    pub worst_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub seed: u64,
    pub step: f64,
    pub tolerance: f64,
    pub max_rel_error: f64,
    pub passed: bool,
    pub tensors: Vec<TensorCheck>,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Micro-model and batch used by the audit.
///
/// Draws are repeated (from the same generator) until every ReLU
/// pre-activation is at least [`KINK_MARGIN`] away from zero, so that the
/// loss is smooth within one step of the sampled point.
pub fn micro_problem(seed: u64) -> (ModelParams, Vec<PreparedWindow>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let (params, windows) = draw(&mut rng);
        if relu_margin(&params, &windows) >= KINK_MARGIN {
            return (params, windows);
        }
    }
}

/// Minimum distance to a ReLU kink over the batch, discriminator included.
pub fn relu_margin(params: &ModelParams, windows: &[PreparedWindow]) -> f64 {
    let mut margin = f64::INFINITY;
    for w in windows {
        let fwd = params.forward(&w.input);
        margin = margin.min(fwd.relu_margin());
        for i in 0..NODES {
            for j in 0..NODES {
                if i != j {
                    let x: Vec<f64> = fwd.h[i].iter().chain(&fwd.h[j]).copied().collect();
                    margin = margin.min(params.disc.relu_margin(&x));
                }
            }
        }
    }
    margin
}

fn draw(rng: &mut ChaCha8Rng) -> (ModelParams, Vec<PreparedWindow>) {
    let mut params = ModelParams::init(ModelShape::new(DIM, HIDDEN, GCN_LAYERS), rng);
    // Nonzero biases so ReLU units are not all switched by the same inputs.
    let names: Vec<String> = params.tensors().into_iter().map(|(n, _)| n).collect();
    for (name, t) in names.iter().zip(params.tensors_mut()) {
        if name.ends_with("bias") {
            t.iter_mut().for_each(|b| *b = rng.random_range(-0.2..0.2));
        }
    }
    let label_sets = [
        [Some(true), Some(true), Some(false)],
        [Some(true), None, Some(true)],
        [Some(false), Some(true), Some(false)],
        [Some(true), Some(true), Some(true)],
    ];
    let windows = label_sets
        .iter()
        .enumerate()
        .map(|(k, labels)| PreparedWindow {
            window_id: format!("w{k}"),
            input: GraphInput {
                reps: std::array::from_fn(|_| {
                    (0..DIM).map(|_| rng.random_range(-0.5..1.5)).collect()
                }),
                costs: std::array::from_fn::<f64, NODES, _>(|_| rng.random_range(0.2..2.0)),
            },
            labels: *labels,
        })
        .collect();
    (params, windows)
}

pub fn gradcheck(seed: u64) -> Result<GradcheckReport> {
    gradcheck_with(seed, |_| {})
}

/// Like [`gradcheck`], with a hook that may tamper with the analytic
/// gradient before comparison.
pub fn gradcheck_with(seed: u64, fault: impl Fn(&mut GradientSet)) -> Result<GradcheckReport> {
    let (params, windows) = micro_problem(seed);
    let batch: Vec<&PreparedWindow> = windows.iter().collect();
    let (_, mut analytic) = gradients(&batch, &params, GAMMA, Exec::Sequential)?;
    fault(&mut analytic);

    let loss_at = |p: &ModelParams| joint_loss(&batch, p, GAMMA, Exec::Sequential).map(|l| l.total);
    let mut probe = params.clone();
    let mut tensors = Vec::new();
    for (ti, (name, grad)) in analytic.0.tensors().into_iter().enumerate() {
        let mut check = TensorCheck {
            name,
            len: grad.len(),
            max_rel_error: 0.0,
            max_abs_error: 0.0,
            worst_index: 0,
        };
        for (k, &a) in grad.iter().enumerate() {
            let orig = probe.tensors_mut()[ti][k];
            probe.tensors_mut()[ti][k] = orig + GRADCHECK_STEP;
            let up = loss_at(&probe)?;
            probe.tensors_mut()[ti][k] = orig - GRADCHECK_STEP;
            let down = loss_at(&probe)?;
            probe.tensors_mut()[ti][k] = orig;
            let numeric = (up - down) / (2.0 * GRADCHECK_STEP);
            let rel = relative_error(a, numeric);
            check.max_abs_error = check.max_abs_error.max((a - numeric).abs());
            if rel > check.max_rel_error {
                check.max_rel_error = rel;
                check.worst_index = k;
            }
        }
        tensors.push(check);
    }
    let max_rel_error = tensors.iter().map(|t| t.max_rel_error).fold(0.0, f64::max);
    Ok(GradcheckReport {
        seed,
        step: GRADCHECK_STEP,
        tolerance: GRADCHECK_TOLERANCE,
        max_rel_error,
        passed: max_rel_error <= GRADCHECK_TOLERANCE,
        tensors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn healthy_gradients_pass() {
        let r = gradcheck(0).unwrap();
        assert!(r.passed, "{r:#?}");
        assert!(r.tensors.iter().any(|t| t.name.starts_with("disc")));
        assert!(r.tensors.iter().any(|t| t.name.starts_with("gcn.1")));
    }

    #[test]
    fn injected_fault_is_caught() {
        let r = gradcheck_with(0, |g| g.0.head.layers[0].bias[2] += 1e-2).unwrap();
        assert!(!r.passed);
        let bad: Vec<_> = r
            .tensors
            .iter()
            .filter(|t| t.max_rel_error > GRADCHECK_TOLERANCE)
            .collect();
        assert_eq!(bad.len(), 1);
        assert_eq!(bad[0].worst_index, 2);
    }

    #[test]
    fn micro_problem_avoids_kinks() {
        for seed in 0..5 {
            let (p, w) = micro_problem(seed);
            assert!(relu_margin(&p, &w) >= KINK_MARGIN);
        }
    }

    #[test]
    fn same_seed_same_report() {
        assert_eq!(gradcheck(3).unwrap(), gradcheck(3).unwrap());
    }
}
