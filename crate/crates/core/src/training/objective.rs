//! Objective `J = J1 + J2` and its analytic gradient.
//!
//! `J1 = ½ Σ_pairs g(e)` with residual `e = c − y(τ − D)` and `g` the smoothed
//! hinge; `J2 = λ/2 Σ (‖W‖²_F + ‖b‖²)` over every layer of every network.
//!
//! For a pair `(i, j)` the derivative of `J1` w.r.t. the top activation of
//! network `k` at sample `i` is `y · g′(e) · w_k · (f_k(x_i) − f_k(x_j))`: the
//! `½` cancels the `2` from the squared distance, and `y` comes from `∂e/∂D`.
//! Those signals are summed per sample over all of its pairs and then
//! backpropagated once per sample, which by linearity equals summing the
//! per-pair backpropagated errors. Pair weights `w_k` are constants here.

use alloc::vec;
use alloc::vec::Vec;

use crate::clustering::{ClusterModel, PairWeights};
use crate::dataspace::{FeatureMatrix, PairSet};
use crate::error::{check_dim, Error, Result};
use crate::exec::{chunk_ranges, Executor, Sequential};
use crate::linalg::{sq_dist, Matrix};
use crate::network::{ForwardTrace, NetworkBank};

use super::Hyperparams;

const SAMPLE_CHUNK: usize = 16;
const PAIR_CHUNK: usize = 2048;
const ROW_CHUNK: usize = 32;

/// `g(z) = (1/γ) log(1 + exp(γz))`, evaluated as `max(z, 0) + log1p(exp(−γ|z|))/γ`.
pub fn logistic(z: f64, gamma: f64) -> f64 {
    z.max(0.0) + libm::log1p(libm::exp(-gamma * z.abs())) / gamma
}

/// `g′(z) = 1 / (1 + exp(−γz))`
pub fn logistic_derivative(z: f64, gamma: f64) -> f64 {
    let t = gamma * z;
    if t >= 0.0 {
        1.0 / (1.0 + libm::exp(-t))
    } else {
        let e = libm::exp(t);
        e / (1.0 + e)
    }
}

/// Margin residual `e = c − y(τ − D)`; the pair satisfies its constraint when `e < 0`.
#[inline]
pub fn residual(y: f64, tau: f64, margin: f64, distance: f64) -> f64 {
    margin - y * (tau - distance)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveValue {
    pub j: f64,
    pub j1: f64,
    pub j2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub dw: Matrix,
    pub db: Vec<f64>,
}

/// `∂J/∂W` and `∂J/∂b` for every layer of every network, shaped like the bank.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub networks: Vec<Vec<LayerGrad>>,
}

impl GradientSet {
    pub fn zeros_like(bank: &NetworkBank) -> Self {
        Self {
            networks: bank
                .networks()
                .iter()
                .map(|n| {
                    n.layers()
                        .iter()
                        .map(|l| LayerGrad {
                            dw: Matrix::zeros(l.w.rows(), l.w.cols()),
                            db: vec![0.0; l.b.len()],
                        })
                        .collect()
                })
                .collect(),
        }
    }

    pub fn matches(&self, bank: &NetworkBank) -> bool {
        self.networks.len() == bank.len()
            && self.networks.iter().zip(bank.networks()).all(|(g, n)| {
                g.len() == n.depth()
                    && g.iter().zip(n.layers()).all(|(g, l)| {
                        g.dw.rows() == l.w.rows() && g.dw.cols() == l.w.cols() && g.db.len() == l.b.len()
                    })
            })
    }

    /// All entries in bank order: per network, per layer, `W` row-major then `b`.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for layers in &self.networks {
            for g in layers {
                out.extend_from_slice(g.dw.as_slice());
                out.extend_from_slice(&g.db);
            }
        }
        out
    }

    pub fn flat_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.networks
            .iter_mut()
            .flat_map(|layers| layers.iter_mut())
            .flat_map(|g| g.dw.as_mut_slice().iter_mut().chain(g.db.iter_mut()))
    }
}

/// Fixed inputs of one optimisation problem: samples, pairs and their cached
/// log-similarities to the cluster centres.
pub(crate) struct Problem<'a> {
    pub x: &'a FeatureMatrix,
    pub pairs: &'a PairSet,
    pub hp: &'a Hyperparams,
    /// `[sample][k]`, empty rows when `K = 0`.
    pub log_sims: Vec<Vec<f64>>,
    /// `[sample] → (pair index, sample is the pair's first element)`
    incidence: Vec<Vec<(usize, bool)>>,
    k: usize,
}

impl<'a> Problem<'a> {
    pub fn new(x: &'a FeatureMatrix, pairs: &'a PairSet, clusters: &ClusterModel, hp: &'a Hyperparams) -> Result<Self> {
        let k = clusters.k_regions();
        if k > 0 {
            check_dim(x.dim(), clusters.dim())?;
        }
        let mut incidence = vec![Vec::new(); x.count()];
        for (p, pair) in pairs.iter().enumerate() {
            if pair.i >= x.count() || pair.j >= x.count() {
                return Err(Error::invalid("pairs", "pair index beyond the sample count"));
            }
            incidence[pair.i].push((p, true));
            incidence[pair.j].push((p, false));
        }
        let mut problem = Self {
            x,
            pairs,
            hp,
            log_sims: Vec::new(),
            incidence,
            k,
        };
        problem.set_clusters(clusters)?;
        Ok(problem)
    }

    pub fn set_clusters(&mut self, clusters: &ClusterModel) -> Result<()> {
        self.k = clusters.k_regions();
        self.log_sims = if self.k == 0 {
            vec![Vec::new(); self.x.count()]
        } else {
            self.x
                .samples()
                .map(|s| clusters.log_similarity(s))
                .collect::<Result<_>>()?
        };
        Ok(())
    }

    fn check_bank(&self, bank: &NetworkBank) -> Result<()> {
        check_dim(self.x.dim(), bank.in_dim())?;
        if bank.k_regions() != self.k {
            return Err(Error::Shape(alloc::format!(
                "bank has {} local networks but the clusters define {} regions",
                bank.k_regions(),
                self.k
            )));
        }
        Ok(())
    }

    pub fn weights(&self, i: usize, j: usize) -> PairWeights {
        PairWeights::from_log_similarities(self.hp.beta, &self.log_sims[i], &self.log_sims[j])
    }
}

/// Forward traces plus per-pair loss coefficients at one parameter point.
pub(crate) struct Evaluation {
    /// `[sample][network]`
    traces: Vec<Vec<ForwardTrace>>,
    /// `y · g′(e) · w_k`, row-major `[pair][network]`.
    coefs: Vec<f64>,
    pub value: ObjectiveValue,
}

pub(crate) fn evaluate<E: Executor>(bank: &NetworkBank, problem: &Problem<'_>, exec: &E) -> Result<Evaluation> {
    problem.check_bank(bank)?;
    let x = problem.x;
    let nets = bank.len();
    let hp = problem.hp;

    let sample_ranges = chunk_ranges(x.count(), SAMPLE_CHUNK);
    let traces: Vec<Vec<ForwardTrace>> = exec
        .map(sample_ranges.len(), |c| {
            sample_ranges[c]
                .clone()
                .map(|i| {
                    bank.networks()
                        .iter()
                        .map(|n| n.forward_unchecked(x.sample(i)))
                        .collect::<Vec<_>>()
                })
                .collect::<Vec<_>>()
        })
        .into_iter()
        .flatten()
        .collect();

    let pairs = problem.pairs.as_slice();
    let pair_ranges = chunk_ranges(pairs.len(), PAIR_CHUNK);
    let parts = exec.map(pair_ranges.len(), |c| {
        let mut loss = 0.0;
        let mut coefs = Vec::with_capacity(pair_ranges[c].len() * nets);
        for pair in &pairs[pair_ranges[c].clone()] {
            let w = problem.weights(pair.i, pair.j);
            let (ti, tj) = (&traces[pair.i], &traces[pair.j]);
            let d: f64 = (0..nets)
                .map(|k| w.w[k] * sq_dist(ti[k].embedding(), tj[k].embedding()))
                .sum();
            let y = pair.sign();
            let e = residual(y, hp.tau, hp.margin, d);
            loss += logistic(e, hp.gamma);
            let gp = logistic_derivative(e, hp.gamma);
            coefs.extend(w.w.iter().map(|wk| y * gp * wk));
        }
        (loss, coefs)
    });
    let mut loss = 0.0;
    let mut coefs = Vec::with_capacity(pairs.len() * nets);
    for (l, c) in parts {
        loss += l;
        coefs.extend(c);
    }
    let j1 = 0.5 * loss;
    let j2 = 0.5 * hp.lambda * bank.squared_norm();
    Ok(Evaluation {
        traces,
        coefs,
        value: ObjectiveValue { j: j1 + j2, j1, j2 },
    })
}

pub(crate) fn backward<E: Executor>(
    bank: &NetworkBank,
    problem: &Problem<'_>,
    eval: &Evaluation,
    exec: &E,
) -> GradientSet {
    let nets = bank.len();
    let n = problem.x.count();
    let pairs = problem.pairs.as_slice();

    // Error signal Ψ of every layer, per sample and network; `None` for samples in no pair.
    let sample_ranges = chunk_ranges(n, SAMPLE_CHUNK);
    let psi: Vec<Vec<Option<Vec<Vec<f64>>>>> = exec
        .map(sample_ranges.len(), |c| {
            sample_ranges[c]
                .clone()
                .map(|i| {
                    if problem.incidence[i].is_empty() {
                        return vec![None; nets];
                    }
                    (0..nets)
                        .map(|k| {
                            let net = &bank.networks()[k];
                            let own = eval.traces[i][k].embedding();
                            let mut top = vec![0.0; own.len()];
                            for &(p, first) in &problem.incidence[i] {
                                let other = if first { pairs[p].j } else { pairs[p].i };
                                let coef = eval.coefs[p * nets + k];
                                if coef == 0.0 {
                                    continue;
                                }
                                let theirs = eval.traces[other][k].embedding();
                                for ((t, a), b) in top.iter_mut().zip(own).zip(theirs) {
                                    *t += coef * (a - b);
                                }
                            }
                            Some(backprop(net, &eval.traces[i][k], top))
                        })
                        .collect()
                })
                .collect::<Vec<_>>()
        })
        .into_iter()
        .flatten()
        .collect();

    struct Task {
        net: usize,
        layer: usize,
        rows: core::ops::Range<usize>,
    }
    let mut tasks = Vec::new();
    for (k, net) in bank.networks().iter().enumerate() {
        for (m, layer) in net.layers().iter().enumerate() {
            for rows in chunk_ranges(layer.out_dim(), ROW_CHUNK) {
                tasks.push(Task { net: k, layer: m, rows });
            }
        }
    }
    let lambda = problem.hp.lambda;
    let blocks = exec.map(tasks.len(), |t| {
        let task = &tasks[t];
        let layer = &bank.networks()[task.net].layers()[task.layer];
        let cols = layer.in_dim();
        let mut dw = vec![0.0; task.rows.len() * cols];
        let mut db = vec![0.0; task.rows.len()];
        for (sample, trace) in psi.iter().zip(&eval.traces).take(n) {
            let Some(signals) = &sample[task.net] else { continue };
            let signal = &signals[task.layer];
            let input = trace[task.net].layer_input(task.layer);
            for (local, r) in task.rows.clone().enumerate() {
                let s = signal[r];
                if s != 0.0 {
                    db[local] += s;
                    for (acc, h) in dw[local * cols..(local + 1) * cols].iter_mut().zip(input) {
                        *acc += s * h;
                    }
                }
            }
        }
        for (local, r) in task.rows.clone().enumerate() {
            for (acc, w) in dw[local * cols..(local + 1) * cols].iter_mut().zip(layer.w.row(r)) {
                *acc += lambda * w;
            }
            db[local] += lambda * layer.b[r];
        }
        (dw, db)
    });

    let mut grads = GradientSet::zeros_like(bank);
    for (task, (dw, db)) in tasks.iter().zip(blocks) {
        let g = &mut grads.networks[task.net][task.layer];
        let cols = g.dw.cols();
        g.dw.as_mut_slice()[task.rows.start * cols..task.rows.end * cols].copy_from_slice(&dw);
        g.db[task.rows.clone()].copy_from_slice(&db);
    }
    grads
}

/// Ψ of every layer, output layer last, from `∂J/∂h` at the top.
fn backprop(net: &crate::network::Network, trace: &ForwardTrace, top: Vec<f64>) -> Vec<Vec<f64>> {
    let act = net.activation();
    let depth = net.depth();
    let mut signals = vec![Vec::new(); depth];
    let mut psi: Vec<f64> = top
        .iter()
        .zip(&trace.pre[depth - 1])
        .map(|(g, z)| g * act.derivative(*z))
        .collect();
    for m in (0..depth).rev() {
        if m > 0 {
            let back = net.layers()[m].w.tr_mul_vec(&psi);
            let next: Vec<f64> = back
                .iter()
                .zip(&trace.pre[m - 1])
                .map(|(g, z)| g * act.derivative(*z))
                .collect();
            signals[m] = core::mem::replace(&mut psi, next);
        } else {
            signals[0] = core::mem::take(&mut psi);
        }
    }
    signals
}

/// `(J, J1, J2)` with the pair weights taken from `clusters`.
pub fn objective(
    bank: &NetworkBank,
    clusters: &ClusterModel,
    x: &FeatureMatrix,
    pairs: &PairSet,
    hp: &Hyperparams,
) -> Result<ObjectiveValue> {
    objective_with(bank, clusters, x, pairs, hp, &Sequential)
}

pub fn objective_with<E: Executor>(
    bank: &NetworkBank,
    clusters: &ClusterModel,
    x: &FeatureMatrix,
    pairs: &PairSet,
    hp: &Hyperparams,
    exec: &E,
) -> Result<ObjectiveValue> {
    let problem = Problem::new(x, pairs, clusters, hp)?;
    Ok(evaluate(bank, &problem, exec)?.value)
}

/// Analytic `∂J/∂W`, `∂J/∂b` for every layer of every network.
pub fn gradients(
    bank: &NetworkBank,
    clusters: &ClusterModel,
    x: &FeatureMatrix,
    pairs: &PairSet,
    hp: &Hyperparams,
) -> Result<GradientSet> {
    gradients_with(bank, clusters, x, pairs, hp, &Sequential)
}

pub fn gradients_with<E: Executor>(
    bank: &NetworkBank,
    clusters: &ClusterModel,
    x: &FeatureMatrix,
    pairs: &PairSet,
    hp: &Hyperparams,
    exec: &E,
) -> Result<GradientSet> {
    let problem = Problem::new(x, pairs, clusters, hp)?;
    let eval = evaluate(bank, &problem, exec)?;
    Ok(backward(bank, &problem, &eval, exec))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataspace::{IdentityLabels, Pair};
    use crate::network::{Activation, LayerDims};

    #[test]
    fn logistic_values() {
        assert!((logistic(0.0, 1.0) - core::f64::consts::LN_2).abs() < 1e-15);
        assert!((logistic(50.0, 10.0) - 50.0).abs() < 1e-12);
        assert!(logistic(-800.0, 5.0) >= 0.0);
        assert_eq!(logistic_derivative(0.0, 3.0), 0.5);
        assert!(logistic_derivative(1e4, 1.0) == 1.0 && logistic_derivative(-1e4, 1.0) == 0.0);
    }

    fn one_identity_layer() -> NetworkBank {
        NetworkBank::identity(2, &LayerDims::Shared(vec![2]), 0, Activation::Linear).unwrap()
    }

    #[test]
    fn regulariser_only_without_pairs() {
        let x = FeatureMatrix::from_samples(&[[0.5, 1.0], [1.0, 2.0]]).unwrap();
        let hp = Hyperparams {
            lambda: 0.01,
            ..Default::default()
        };
        let bank = one_identity_layer();
        let empty = PairSet::default();
        let v = objective(&bank, &ClusterModel::empty(2), &x, &empty, &hp).unwrap();
        assert!((v.j - 0.01).abs() < 1e-15 && v.j1 == 0.0 && v.j == v.j2);
        let g = gradients(&bank, &ClusterModel::empty(2), &x, &empty, &hp).unwrap();
        assert_eq!(g.networks[0][0].dw, Matrix::from_row_major(2, 2, vec![0.01, 0.0, 0.0, 0.01]));
        assert_eq!(g.networks[0][0].db, vec![0.0, 0.0]);
    }

    #[test]
    fn coincident_positive_pair() {
        let x = FeatureMatrix::from_samples(&[[0.3, -0.7], [0.3, -0.7]]).unwrap();
        let labels = IdentityLabels::new(vec![5, 5], None).unwrap();
        let pairs = PairSet::new(vec![Pair { i: 0, j: 1, y: 1 }], &labels).unwrap();
        let hp = Hyperparams {
            lambda: 0.0,
            beta: 1.0,
            tau: 2.0,
            margin: 1.0,
            gamma: 1.0,
            ..Default::default()
        };
        let bank = one_identity_layer();
        let v = objective(&bank, &ClusterModel::empty(2), &x, &pairs, &hp).unwrap();
        // e = 1 − (2 − 0) = −1, J = ½ ln(1 + e^{−1})
        let expected = 0.5 * libm::log(1.0 + libm::exp(-1.0));
        assert!((v.j - expected).abs() < 1e-15);
        assert!((v.j - 0.156631).abs() < 1e-6);
        let g = gradients(&bank, &ClusterModel::empty(2), &x, &pairs, &hp).unwrap();
        assert!(g.flatten().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn mismatched_bank_is_rejected() {
        let x = FeatureMatrix::from_samples(&[[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let clusters = ClusterModel::new(2, vec![0.0, 0.0], 1.0).unwrap();
        let hp = Hyperparams::default();
        let err = objective(&one_identity_layer(), &clusters, &x, &PairSet::default(), &hp).unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
    }
}
