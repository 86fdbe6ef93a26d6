//! Central finite-difference check of the analytic gradient on a random
//! small problem with fixed cluster weights.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::clustering::{fit_sigma, ClusterModel, SigmaRule};
use crate::dataspace::{FeatureMatrix, IdentityLabels, Pair, PairSet};
use crate::error::{Error, Result};
use crate::exec::Sequential;
use crate::linalg::Matrix;
use crate::network::{Activation, Layer, Network, NetworkBank};
use crate::rng::{self, Stream};

use super::objective::{backward, evaluate, Problem};
use super::Hyperparams;

/// Gradients smaller than this are compared in absolute terms.
pub const REL_FLOOR: f64 = 1e-3;

/// Minimum `|z|` of every ReLU pre-activation, so that a finite-difference
/// step never crosses the kink.
const KINK_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckConfig {
    pub input_dim: usize,
    pub k: usize,
    pub layer_dims: Vec<usize>,
    pub activation: Activation,
    pub samples: usize,
    pub pairs: usize,
    pub step: f64,
    pub seed: u64,
    /// Loss and regulariser settings; `k`, `layer_dims` and `activation` above take precedence.
    pub hp: Hyperparams,
    /// Negative control: perturbs one analytic gradient entry by `1e-3`.
    pub corrupt: bool,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            input_dim: 6,
            k: 2,
            layer_dims: vec![5, 4, 3],
            activation: Activation::Tanh,
            samples: 12,
            pairs: 10,
            step: 1e-5,
            seed: 0,
            hp: Hyperparams::default(),
            corrupt: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    /// `max |a − n| / max(|a|, |n|, REL_FLOOR)` over all parameters.
    pub max_rel: f64,
    pub mean_rel: f64,
    pub max_abs: f64,
    /// `‖a − n‖₂ / max(‖a‖₂, ‖n‖₂)` over the whole gradient vector.
    pub vector_rel: f64,
    pub params: usize,
}

/// Compares the analytic gradient against `(J(θ + h) − J(θ − h)) / 2h` for every parameter.
pub fn gradcheck(config: &GradCheckConfig) -> Result<GradCheckReport> {
    if config.samples < 2 || config.input_dim == 0 || config.layer_dims.is_empty() {
        return Err(Error::invalid("gradcheck", "needs at least two samples and one layer"));
    }
    if !(config.step.is_finite() && config.step > 0.0) {
        return Err(Error::invalid("step", "must be positive"));
    }
    let mut rng = rng::stream_rng(config.seed, Stream::GradCheck);

    let mut networks = Vec::with_capacity(config.k + 1);
    for _ in 0..=config.k {
        let mut p_in = config.input_dim;
        let mut layers = Vec::new();
        for &p_out in &config.layer_dims {
            // unit gain per layer keeps J moderate, and with it the
            // finite-difference roundoff ε·J/h
            let scale = 1.0 / libm::sqrt(p_in as f64);
            let w = Matrix::from_fn(p_out, p_in, |_, _| normal(&mut rng, scale));
            let b = (0..p_out).map(|_| normal(&mut rng, 0.1)).collect();
            layers.push(Layer::new(w, b)?);
            p_in = p_out;
        }
        networks.push(Network::new(layers, config.activation)?);
    }
    let mut bank = NetworkBank::new(networks)?;

    let mut x = random_inputs(config, &mut rng)?;
    if config.activation == Activation::Relu {
        let mut attempts = 0;
        while !clear_of_kinks(&bank, &x) {
            attempts += 1;
            if attempts > 1000 {
                return Err(Error::invalid("gradcheck", "could not sample inputs away from ReLU kinks"));
            }
            x = random_inputs(config, &mut rng)?;
        }
    }

    let identities = (config.samples / 2).max(1);
    let labels = IdentityLabels::new((0..config.samples).map(|i| (i % identities) as i64).collect(), None)?;
    let mut all = Vec::new();
    for i in 0..config.samples {
        for j in i + 1..config.samples {
            let y = if labels.id(i) == labels.id(j) { 1 } else { -1 };
            all.push(Pair { i, j, y });
        }
    }
    let take = config.pairs.min(all.len());
    let mut picked = index::sample(&mut rng, all.len(), take).into_vec();
    picked.sort_unstable();
    let pairs = PairSet::new(picked.into_iter().map(|p| all[p]).collect(), &labels)?;

    let clusters = if config.k == 0 {
        ClusterModel::empty(config.input_dim)
    } else {
        let mut centers = Vec::with_capacity(config.k * config.input_dim);
        for _ in 0..config.k {
            let s = rng.random_range(0..config.samples);
            for &v in x.sample(s) {
                centers.push(v + normal(&mut rng, 0.3));
            }
        }
        fit_sigma(&x, ClusterModel::new(config.input_dim, centers, 1.0)?, SigmaRule::MeanDist)?
    };

    let mut hp = config.hp.clone();
    hp.k = config.k;
    hp.activation = config.activation;
    let problem = Problem::new(&x, &pairs, &clusters, &hp)?;
    let eval = evaluate(&bank, &problem, &Sequential)?;
    let mut analytic = backward(&bank, &problem, &eval, &Sequential).flatten();
    if config.corrupt {
        let idx = analytic.len() / 2;
        analytic[idx] += 1e-3;
    }

    let h = config.step;
    let mut max_rel: f64 = 0.0;
    let mut max_abs: f64 = 0.0;
    let mut sum_rel = 0.0;
    let (mut diff_sq, mut analytic_sq, mut numeric_sq) = (0.0, 0.0, 0.0);
    let mut offset = 0;
    for net in 0..bank.len() {
        for layer in 0..bank.networks()[net].depth() {
            let count = {
                let l = &bank.networks()[net].layers()[layer];
                l.w.as_slice().len() + l.b.len()
            };
            for local in 0..count {
                let original = *param(&mut bank, net, layer, local);
                *param(&mut bank, net, layer, local) = original + h;
                let plus = evaluate(&bank, &problem, &Sequential)?.value.j;
                *param(&mut bank, net, layer, local) = original - h;
                let minus = evaluate(&bank, &problem, &Sequential)?.value.j;
                *param(&mut bank, net, layer, local) = original;

                let numeric = (plus - minus) / (2.0 * h);
                let a = analytic[offset + local];
                let abs = (a - numeric).abs();
                let rel = abs / a.abs().max(numeric.abs()).max(REL_FLOOR);
                max_rel = max_rel.max(rel);
                max_abs = max_abs.max(abs);
                sum_rel += rel;
                diff_sq += abs * abs;
                analytic_sq += a * a;
                numeric_sq += numeric * numeric;
            }
            offset += count;
        }
    }
    Ok(GradCheckReport {
        max_rel,
        mean_rel: sum_rel / offset.max(1) as f64,
        max_abs,
        vector_rel: libm::sqrt(diff_sq) / libm::sqrt(analytic_sq.max(numeric_sq)).max(f64::MIN_POSITIVE),
        params: offset,
    })
}

fn normal<R: Rng>(rng: &mut R, scale: f64) -> f64 {
    let v: f64 = StandardNormal.sample(rng);
    v * scale
}

fn random_inputs<R: Rng>(config: &GradCheckConfig, rng: &mut R) -> Result<FeatureMatrix> {
    let data = (0..config.samples * config.input_dim).map(|_| normal(rng, 0.7)).collect();
    FeatureMatrix::from_columns(config.input_dim, config.samples, data)
}

fn clear_of_kinks(bank: &NetworkBank, x: &FeatureMatrix) -> bool {
    x.samples().all(|s| {
        bank.networks()
            .iter()
            .all(|n| n.forward_unchecked(s).pre.iter().flatten().all(|z| z.abs() >= KINK_MARGIN))
    })
}

fn param(bank: &mut NetworkBank, net: usize, layer: usize, local: usize) -> &mut f64 {
    let l = &mut bank.networks_mut()[net].layers_mut()[layer];
    let nw = l.w.as_slice().len();
    if local < nw {
        &mut l.w.as_mut_slice()[local]
    } else {
        &mut l.b[local - nw]
    }
}
