use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reranker::ModelShape;
use crate::sinkhorn::SinkhornConfig;

use super::AdamConfig;

/// Training hyperparameters. Missing JSON fields take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Candidate windows per batch.
    pub batch_size: usize,
    /// Weight of the mutual-information term.
    pub gamma: f64,
    pub epochs: usize,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub sinkhorn: SinkhornConfig,
    /// Hidden width of every feed-forward network.
    pub hidden: usize,
    pub gcn_layers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-5,
            batch_size: 64,
            gamma: 0.3,
            epochs: 20,
            seed: 0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            sinkhorn: SinkhornConfig::default(),
            hidden: 400,
            gcn_layers: 2,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad("gamma must be nonnegative");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("adam betas must lie in [0, 1)");
        }
        if !(self.adam_eps > 0.0) {
            return bad("adam_eps must be positive");
        }
        if !(self.sinkhorn.eps_scale > 0.0 && self.sinkhorn.eps_scale.is_finite()) {
            return bad("sinkhorn.eps_scale must be positive");
        }
        if !(self.sinkhorn.tol > 0.0) {
            return bad("sinkhorn.tol must be positive");
        }
        if self.hidden == 0 || self.gcn_layers == 0 {
            return bad("hidden and gcn_layers must be positive");
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }

    pub fn shape(&self, dim: usize) -> ModelShape {
        ModelShape::new(dim, self.hidden, self.gcn_layers)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = TrainConfig::default();
        assert_eq!(c.learning_rate, 1e-5);
        assert_eq!(c.batch_size, 64);
        assert_eq!(c.gamma, 0.3);
        assert_eq!(c.hidden, 400);
        assert_eq!(c.gcn_layers, 2);
        c.validate().unwrap();
    }

    #[test]
    fn partial_json_fills_defaults() {
        let c: TrainConfig =
            serde_json::from_str(r#"{"gamma": 0.0, "sinkhorn": {"eps_scale": 0.05}}"#).unwrap();
        assert_eq!(c.gamma, 0.0);
        assert_eq!(c.sinkhorn.eps_scale, 0.05);
        assert_eq!(c.sinkhorn.max_iter, 500);
        assert_eq!(c.batch_size, 64);
        assert!(serde_json::from_str::<TrainConfig>(r#"{"gama": 1}"#).is_err());
    }

    #[test]
    fn validation() {
        let bad = [
            TrainConfig {
                learning_rate: 0.0,
                ..TrainConfig::default()
            },
            TrainConfig {
                gamma: -1.0,
                ..TrainConfig::default()
            },
            TrainConfig {
                batch_size: 0,
                ..TrainConfig::default()
            },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }
}
