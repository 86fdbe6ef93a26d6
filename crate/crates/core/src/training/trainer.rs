use alloc::vec::Vec;

use crate::clustering::{fit_sigma, kmeans_with, ClusterModel};
use crate::dataspace::{FeatureMatrix, PairSet};
use crate::error::{Error, Result};
use crate::exec::{Clock, Executor, NoClock, Sequential};
use crate::metric::NlmlModel;
use crate::network::NetworkBank;
use crate::rng;

use super::objective::{backward, evaluate, GradientSet, ObjectiveValue, Problem};
use super::Hyperparams;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Converged,
    MaxIters,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::Converged => "converged",
            StopReason::MaxIters => "max_iters",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    /// 1-based iteration index.
    pub t: usize,
    pub j: f64,
    pub j1: f64,
    pub j2: f64,
    pub wall_ms: f64,
}

/// Objective of one greedy layer-wise stage, before and after its updates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PretrainStage {
    pub depth: usize,
    pub before: ObjectiveValue,
    pub after: ObjectiveValue,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Objective at the identity initialisation (after pretraining, if any).
    pub initial: ObjectiveValue,
    pub pretrain: Vec<PretrainStage>,
    pub iterations: Vec<IterationRecord>,
    pub stop: StopReason,
}

impl TrainReport {
    pub fn final_objective(&self) -> f64 {
        self.iterations.last().map(|r| r.j).unwrap_or(self.initial.j)
    }
}

/// `W ← W − μ dW`, `b ← b − μ db` on every layer.
///
/// Panics if the gradient shapes do not mirror the bank.
pub fn sgd_step(bank: &mut NetworkBank, grads: &GradientSet, mu: f64) {
    assert!(grads.matches(bank), "gradient shapes do not match the bank");
    for (net, g) in bank.networks_mut().iter_mut().zip(&grads.networks) {
        for (layer, g) in net.layers_mut().iter_mut().zip(g) {
            for (w, d) in layer.w.as_mut_slice().iter_mut().zip(g.dw.as_slice()) {
                *w -= mu * d;
            }
            for (b, d) in layer.b.iter_mut().zip(&g.db) {
                *b -= mu * d;
            }
        }
    }
}

/// Full-batch trainer with a pluggable executor and clock.
pub struct Trainer<'a, E: Executor = Sequential> {
    hp: &'a Hyperparams,
    exec: &'a E,
    clock: &'a dyn Clock,
}

impl<'a> Trainer<'a, Sequential> {
    pub fn new(hp: &'a Hyperparams) -> Self {
        Self {
            hp,
            exec: &Sequential,
            clock: &NoClock,
        }
    }
}

impl<'a, E: Executor> Trainer<'a, E> {
    pub fn with_executor<F: Executor>(self, exec: &'a F) -> Trainer<'a, F> {
        Trainer {
            hp: self.hp,
            exec,
            clock: self.clock,
        }
    }

    pub fn with_clock(mut self, clock: &'a dyn Clock) -> Self {
        self.clock = clock;
        self
    }

    pub fn hyperparams(&self) -> &Hyperparams {
        self.hp
    }

    /// Identity init, k-means regions, σ, optional layer-wise pretraining,
    /// then gradient descent until `|J_t − J_{t−1}| < ε` or `T` iterations.
    pub fn train(&self, x: &FeatureMatrix, pairs: &PairSet) -> Result<(NlmlModel, TrainReport)> {
        self.hp.validate()?;
        check_pairs(pairs)?;
        let clusters = self.fit_clusters(x, self.hp.seed)?;
        self.train_with_clusters(x, pairs, clusters)
    }

    /// As [`Trainer::train`] with the local regions supplied by the caller.
    pub fn train_with_clusters(
        &self,
        x: &FeatureMatrix,
        pairs: &PairSet,
        clusters: ClusterModel,
    ) -> Result<(NlmlModel, TrainReport)> {
        let hp = self.hp;
        hp.validate()?;
        check_pairs(pairs)?;
        let bank = NetworkBank::identity(x.dim(), &hp.layer_dims, clusters.k_regions(), hp.activation)?;
        let (bank, stages) = self.pretrain(bank, &clusters, x, pairs)?;
        let (bank, clusters, report) = self.descend(bank, clusters, x, pairs, stages)?;
        let model = NlmlModel::new(bank, clusters, hp.beta, None)?;
        Ok((model, report))
    }

    /// Greedy layer-wise pretraining: for depth `m = 1..=M`, trains the
    /// networks truncated to their first `m` layers for `pretrain_iters`
    /// steps at `pretrain_mu`, writing the trained layers back.
    pub fn pretrain(
        &self,
        mut bank: NetworkBank,
        clusters: &ClusterModel,
        x: &FeatureMatrix,
        pairs: &PairSet,
    ) -> Result<(NetworkBank, Vec<PretrainStage>)> {
        let hp = self.hp;
        if hp.pretrain_iters == 0 {
            return Ok((bank, Vec::new()));
        }
        let problem = Problem::new(x, pairs, clusters, hp)?;
        let mut stages = Vec::new();
        for depth in 1..=bank.max_depth() {
            let mut stage = bank.truncated(depth);
            let mut eval = evaluate(&stage, &problem, self.exec)?;
            let before = eval.value;
            for t in 1..=hp.pretrain_iters {
                let grads = backward(&stage, &problem, &eval, self.exec);
                sgd_step(&mut stage, &grads, hp.pretrain_mu);
                eval = evaluate(&stage, &problem, self.exec)?;
                if !eval.value.j.is_finite() {
                    log::error!("pretraining stage {depth} diverged at step {t}");
                    return Err(Error::Diverged(t));
                }
            }
            log::debug!("pretrain depth {depth}: J {} -> {}", before.j, eval.value.j);
            stages.push(PretrainStage {
                depth,
                before,
                after: eval.value,
            });
            for (full, trained) in bank.networks_mut().iter_mut().zip(stage.networks()) {
                let m = trained.depth();
                full.layers_mut()[..m].clone_from_slice(trained.layers());
            }
        }
        Ok((bank, stages))
    }

    fn fit_clusters(&self, x: &FeatureMatrix, seed: u64) -> Result<ClusterModel> {
        if self.hp.k == 0 {
            return Ok(ClusterModel::empty(x.dim()));
        }
        let fit = kmeans_with(x, self.hp.k, seed, self.hp.kmeans_iters, self.exec)?;
        fit_sigma(x, fit.model, self.hp.sigma_rule)
    }

    fn descend(
        &self,
        mut bank: NetworkBank,
        mut clusters: ClusterModel,
        x: &FeatureMatrix,
        pairs: &PairSet,
        pretrain: Vec<PretrainStage>,
    ) -> Result<(NetworkBank, ClusterModel, TrainReport)> {
        let hp = self.hp;
        let mut problem = Problem::new(x, pairs, &clusters, hp)?;
        let start = self.clock.now_ms();
        let mut eval = evaluate(&bank, &problem, self.exec)?;
        let initial = eval.value;
        let mut iterations: Vec<IterationRecord> = Vec::new();
        let mut stop = StopReason::MaxIters;

        for t in 1..=hp.max_iters {
            let grads = backward(&bank, &problem, &eval, self.exec);
            sgd_step(&mut bank, &grads, hp.mu);
            if hp.recluster_every > 0 && t % hp.recluster_every == 0 && hp.k > 0 {
                clusters = self.fit_clusters(x, rng::mix(hp.seed, t as u64))?;
                problem.set_clusters(&clusters)?;
            }
            eval = evaluate(&bank, &problem, self.exec)?;
            let v = eval.value;
            if !v.j.is_finite() {
                log::error!("objective diverged at iteration {t}");
                return Err(Error::Diverged(t));
            }
            iterations.push(IterationRecord {
                t,
                j: v.j,
                j1: v.j1,
                j2: v.j2,
                wall_ms: self.clock.now_ms() - start,
            });
            log::debug!("iter {t}: J = {} (J1 = {}, J2 = {})", v.j, v.j1, v.j2);
            if t > 1 && (v.j - iterations[t - 2].j).abs() < hp.epsilon {
                stop = StopReason::Converged;
                break;
            }
        }
        log::info!(
            "training stopped after {} iterations ({})",
            iterations.len(),
            stop.as_str()
        );
        Ok((
            bank,
            clusters,
            TrainReport {
                initial,
                pretrain,
                iterations,
                stop,
            },
        ))
    }
}

fn check_pairs(pairs: &PairSet) -> Result<()> {
    if pairs.positives() == 0 {
        return Err(Error::NoPositivePairs);
    }
    if pairs.negatives() == 0 {
        return Err(Error::NoNegativePairs);
    }
    Ok(())
}

/// Sequential [`Trainer::train`].
pub fn train(x: &FeatureMatrix, pairs: &PairSet, hp: &Hyperparams) -> Result<(NlmlModel, TrainReport)> {
    Trainer::new(hp).train(x, pairs)
}

/// Sequential [`Trainer::pretrain`].
pub fn pretrain(
    bank: NetworkBank,
    clusters: &ClusterModel,
    x: &FeatureMatrix,
    pairs: &PairSet,
    hp: &Hyperparams,
) -> Result<(NetworkBank, Vec<PretrainStage>)> {
    Trainer::new(hp).pretrain(bank, clusters, x, pairs)
}
