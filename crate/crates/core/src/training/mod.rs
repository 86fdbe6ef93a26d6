//! Large-margin objective, its gradients, and the gradient-descent trainer.

mod gradcheck;
mod objective;
mod trainer;

pub use gradcheck::{gradcheck, GradCheckConfig, GradCheckReport};
pub use objective::{
    gradients, gradients_with, logistic, logistic_derivative, objective, objective_with, residual, GradientSet,
    LayerGrad, ObjectiveValue,
};
pub use trainer::{pretrain, sgd_step, train, IterationRecord, PretrainStage, StopReason, TrainReport, Trainer};

pub use crate::network::LayerDims;

use alloc::format;

use crate::clustering::SigmaRule;
use crate::error::{Error, Result};
use crate::network::Activation;

/// Every scalar knob of the model and optimiser.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    /// Number of local regions / local networks.
    pub k: usize,
    /// Weight of the global network distance.
    pub beta: f64,
    /// Weight-decay coefficient.
    pub lambda: f64,
    /// Sharpness of the smoothed hinge.
    pub gamma: f64,
    /// Decision threshold on the composite distance.
    pub tau: f64,
    /// Half-width of the margin around `tau`.
    pub margin: f64,
    /// Learning rate of the main descent loop.
    pub mu: f64,
    pub pretrain_mu: f64,
    /// Iterations per greedy layer-wise stage; 0 disables pretraining.
    pub pretrain_iters: usize,
    pub max_iters: usize,
    /// Stop once `|J_t − J_{t−1}| < epsilon` (from the second iteration on).
    pub epsilon: f64,
    pub seed: u64,
    /// Re-run k-means every this many iterations; 0 keeps the clusters fixed.
    pub recluster_every: usize,
    pub layer_dims: LayerDims,
    pub activation: Activation,
    pub sigma_rule: SigmaRule,
    pub kmeans_iters: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            k: 4,
            beta: 1.0,
            lambda: 0.01,
            gamma: 1.0,
            tau: 2.0,
            margin: 1.0,
            mu: 0.004,
            pretrain_mu: 0.004,
            pretrain_iters: 50,
            max_iters: 500,
            epsilon: 0.1,
            seed: 0,
            recluster_every: 0,
            layer_dims: LayerDims::default(),
            activation: Activation::Tanh,
            sigma_rule: SigmaRule::MeanDist,
            kmeans_iters: 100,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &'static str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(name, format!("must be finite and positive, got {v}")))
            }
        };
        positive("beta", self.beta)?;
        positive("gamma", self.gamma)?;
        positive("mu", self.mu)?;
        positive("pretrain_mu", self.pretrain_mu)?;
        positive("epsilon", self.epsilon)?;
        positive("c", self.margin)?;
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::invalid("lambda", format!("must be non-negative, got {}", self.lambda)));
        }
        if !self.tau.is_finite() || self.tau <= self.margin {
            return Err(Error::invalid(
                "tau",
                format!("must exceed the margin c = {}, got {}", self.margin, self.tau),
            ));
        }
        if let SigmaRule::Fixed(v) = self.sigma_rule {
            positive("sigma", v)?;
        }
        for n in 0..=self.k {
            if let LayerDims::PerNetwork(_) = self.layer_dims {
                self.layer_dims.for_network(n, self.k)?;
            }
        }
        match &self.layer_dims {
            LayerDims::Shared(v) if v.is_empty() => Err(Error::invalid("layer_dims", "no layers")),
            LayerDims::PerNetwork(all) if all.iter().any(|v| v.is_empty()) => {
                Err(Error::invalid("layer_dims", "a network has no layers"))
            }
            _ => Ok(()),
        }
    }
}

/// Model family: the full method and its two ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Variant {
    #[default]
    Full,
    /// Global network only (`K = 0`).
    GlobalOnly,
    /// Every network a single linear layer of width `out_dim`: a Mahalanobis metric `WᵀW`.
    Mahalanobis { out_dim: usize },
}

impl Variant {
    /// Rewrites `hp` for this variant. `Full` leaves it untouched.
    pub fn configure(self, hp: &Hyperparams) -> Hyperparams {
        let mut hp = hp.clone();
        match self {
            Variant::Full => {}
            Variant::GlobalOnly => hp.k = 0,
            Variant::Mahalanobis { out_dim } => {
                hp.layer_dims = LayerDims::Shared(alloc::vec![out_dim]);
                hp.activation = Activation::Linear;
            }
        }
        hp
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        Hyperparams::default().validate().unwrap();
    }

    #[test]
    fn validation_names_the_field() {
        let hp = Hyperparams {
            lambda: -1.0,
            ..Default::default()
        };
        assert!(matches!(hp.validate(), Err(Error::InvalidParam { name: "lambda", .. })));
        let hp = Hyperparams {
            tau: 1.0,
            margin: 1.0,
            ..Default::default()
        };
        assert!(matches!(hp.validate(), Err(Error::InvalidParam { name: "tau", .. })));
        let hp = Hyperparams {
            gamma: 0.0,
            ..Default::default()
        };
        assert!(matches!(hp.validate(), Err(Error::InvalidParam { name: "gamma", .. })));
    }

    #[test]
    fn variants_rewrite_config() {
        let hp = Hyperparams::default();
        assert_eq!(Variant::GlobalOnly.configure(&hp).k, 0);
        let m = Variant::Mahalanobis { out_dim: 7 }.configure(&hp);
        assert_eq!(m.layer_dims, LayerDims::Shared(alloc::vec![7]));
        assert_eq!(m.activation, Activation::Linear);
        assert_eq!(Variant::Full.configure(&hp), hp);
    }
}
