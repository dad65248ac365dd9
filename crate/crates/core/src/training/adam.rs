use crate::error::{Error, Result};
use crate::reranker::ModelParams;

use super::GradientSet;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

/// First/second moment estimates and the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: ModelParams,
    pub v: ModelParams,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        Self {
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }
}

/// One bias-corrected Adam update; increments `state.step` first.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &GradientSet,
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    let shape = params.shape();
    if grads.0.shape() != shape || state.m.shape() != shape || state.v.shape() != shape {
        return Err(Error::ShapeMismatch(format!(
            "adam: params {shape:?}, grads {:?}",
            grads.0.shape()
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    let g = grads.0.tensors();
    let ms = state.m.tensors_mut();
    let vs = state.v.tensors_mut();
    for (((p, (_, g)), m), v) in params.tensors_mut().into_iter().zip(g).zip(ms).zip(vs) {
        for k in 0..p.len() {
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
            let m_hat = m[k] / c1;
            let v_hat = v[k] / c2;
            p[k] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reranker::ModelShape;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const CFG: AdamConfig = AdamConfig {
        learning_rate: 1e-3,
        beta1: 0.9,
        beta2: 0.999,
        eps: 1e-8,
    };

    fn params() -> ModelParams {
        ModelParams::init(ModelShape::new(2, 3, 1), &mut ChaCha8Rng::seed_from_u64(2))
    }

    fn filled(p: &ModelParams, v: f64) -> GradientSet {
        let mut g = p.zeros_like();
        for t in g.tensors_mut() {
            t.fill(v);
        }
        GradientSet(g)
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut p = params();
        let before = p.clone();
        let mut s = AdamState::new(&p);
        adam_step(&mut p, &filled(&before, 0.0), &mut s, &CFG).unwrap();
        assert_eq!(p, before);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn zero_gradient_decays_moments() {
        let mut p = params();
        let zero = filled(&p, 0.0);
        let mut s = AdamState::new(&p);
        s.m.tensors_mut()[0][0] = 0.5;
        s.v.tensors_mut()[0][0] = 0.25;
        adam_step(&mut p, &zero, &mut s, &CFG).unwrap();
        assert_eq!(s.m.tensors()[0].1[0], 0.9 * 0.5);
        assert_eq!(s.v.tensors()[0].1[0], 0.999 * 0.25);
    }

    #[test]
    fn single_step_matches_hand_formula() {
        let mut p = params();
        let before = p.clone();
        let g = 0.02;
        let mut s = AdamState::new(&p);
        adam_step(&mut p, &filled(&before, g), &mut s, &CFG).unwrap();
        // m̂ = g, v̂ = g², Δ = −lr·g/(|g| + eps)
        let expected = -1e-3 * 0.02 / (0.02 + 1e-8);
        let delta = p.tensors()[0].1[0] - before.tensors()[0].1[0];
        assert!((delta - expected).abs() < 1e-15, "{delta} vs {expected}");
    }

    #[test]
    fn constant_gradient_steps_approach_learning_rate() {
        let mut p = params();
        let g = filled(&p, -3.0);
        let mut s = AdamState::new(&p);
        let mut last = 0.0;
        for _ in 0..2000 {
            let before = p.tensors()[0].1[0];
            adam_step(&mut p, &g, &mut s, &CFG).unwrap();
            last = p.tensors()[0].1[0] - before;
        }
        assert!((last - 1e-3).abs() < 1e-8, "{last}");
    }

    #[test]
    fn shape_mismatch() {
        let mut p = params();
        let other = ModelParams::zeros(ModelShape::new(3, 3, 1));
        let mut s = AdamState::new(&p);
        assert!(adam_step(&mut p, &GradientSet(other), &mut s, &CFG).is_err());
    }
}
