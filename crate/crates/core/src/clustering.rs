//! Local regions: k-means centres, an RBF bandwidth, and the per-pair weights
//! they induce.
//!
//! Local weights are normalised to sum to one per pair. They are computed from
//! log-similarities (`−‖x − v_k‖² / 2σ²`) with the maximum subtracted, so a
//! pair far from every centre still gets well-defined weights instead of
//! `0 / 0`.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::dataspace::FeatureMatrix;
use crate::error::{check_dim, Error, Result};
use crate::exec::{chunk_ranges, Executor, Sequential};
use crate::linalg::sq_dist;
use crate::rng::{self, Stream};

pub const SIGMA_FLOOR: f64 = 1e-8;

const ASSIGN_CHUNK: usize = 256;

/// `K` centres in `R^d` plus the RBF bandwidth σ. `K = 0` is a valid model
/// with no local regions.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    dim: usize,
    /// Column-major `d × K`: centre `k` is `centers[k * dim..(k + 1) * dim]`.
    centers: Vec<f64>,
    sigma: f64,
}

impl ClusterModel {
    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            centers: Vec::new(),
            sigma: 1.0,
        }
    }

    pub fn new(dim: usize, centers: Vec<f64>, sigma: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Empty("cluster dimension"));
        }
        if !centers.len().is_multiple_of(dim) {
            return Err(Error::Shape(alloc::format!(
                "{} centre values do not divide into dimension {}",
                centers.len(),
                dim
            )));
        }
        if let Some(pos) = centers.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos % dim,
                col: pos / dim,
            });
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::invalid("sigma", "must be finite and positive"));
        }
        Ok(Self { dim, centers, sigma })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn k_regions(&self) -> usize {
        self.centers.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn center(&self, k: usize) -> &[f64] {
        &self.centers[k * self.dim..(k + 1) * self.dim]
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn with_sigma(mut self, sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::invalid("sigma", "must be finite and positive"));
        }
        self.sigma = sigma;
        Ok(self)
    }

    /// `s_k(x) = exp(−‖x − v_k‖² / 2σ²)` for every region.
    pub fn similarity(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.log_similarity(x)?.into_iter().map(libm::exp).collect())
    }

    /// `−‖x − v_k‖² / 2σ²` for every region.
    pub fn log_similarity(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, x.len())?;
        let denom = 2.0 * self.sigma * self.sigma;
        Ok((0..self.k_regions())
            .map(|k| -sq_dist(x, self.center(k)) / denom)
            .collect())
    }

    pub fn pair_weights(&self, beta: f64, xi: &[f64], xj: &[f64]) -> Result<PairWeights> {
        let si = self.log_similarity(xi)?;
        let sj = self.log_similarity(xj)?;
        Ok(PairWeights::from_log_similarities(beta, &si, &sj))
    }
}

/// `w_0 = β` followed by the `K` normalised local weights.
#[derive(Debug, Clone, PartialEq)]
pub struct PairWeights {
    pub w: Vec<f64>,
}

impl PairWeights {
    /// Local weights `∝ s_k(x_i) s_k(x_j)`, scaled to sum to 1.
    pub fn from_log_similarities(beta: f64, log_si: &[f64], log_sj: &[f64]) -> Self {
        debug_assert_eq!(log_si.len(), log_sj.len());
        let mut w = Vec::with_capacity(log_si.len() + 1);
        w.push(beta);
        if !log_si.is_empty() {
            let exps: Vec<f64> = log_si.iter().zip(log_sj).map(|(a, b)| a + b).collect();
            let top = exps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let raw: Vec<f64> = exps.iter().map(|e| libm::exp(e - top)).collect();
            let total: f64 = raw.iter().sum();
            w.extend(raw.iter().map(|r| r / total));
        }
        Self { w }
    }

    pub fn global(&self) -> f64 {
        self.w[0]
    }

    pub fn local(&self) -> &[f64] {
        &self.w[1..]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub model: ClusterModel,
    pub assignments: Vec<usize>,
    /// Within-cluster sum of squares after the seeding assignment and after every Lloyd step.
    pub sse_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Lloyd's algorithm from k-means++ seeds. σ is left at 1; see [`fit_sigma`].
pub fn kmeans(x: &FeatureMatrix, k: usize, seed: u64, max_iters: usize) -> Result<KMeansFit> {
    kmeans_with(x, k, seed, max_iters, &Sequential)
}

pub fn kmeans_with<E: Executor>(
    x: &FeatureMatrix,
    k: usize,
    seed: u64,
    max_iters: usize,
    exec: &E,
) -> Result<KMeansFit> {
    let n = x.count();
    let d = x.dim();
    if k == 0 {
        return Err(Error::invalid("k", "k-means needs at least one cluster"));
    }
    if k > n {
        return Err(Error::TooManyClusters { k, n });
    }
    let mut rng = rng::stream_rng(seed, Stream::KMeans);
    let mut centers = plus_plus_seeds(x, k, &mut rng);

    let (mut assignments, mut dists) = assign(x, &centers, k, exec);
    let mut sse_history = vec![dists.iter().sum::<f64>()];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < max_iters {
        iterations += 1;
        update_centers(x, &assignments, &dists, k, &mut centers);
        let (next, next_dists) = assign(x, &centers, k, exec);
        sse_history.push(next_dists.iter().sum());
        let fixpoint = next == assignments;
        assignments = next;
        dists = next_dists;
        if fixpoint {
            converged = true;
            break;
        }
    }
    Ok(KMeansFit {
        model: ClusterModel {
            dim: d,
            centers,
            sigma: 1.0,
        },
        assignments,
        sse_history,
        iterations,
        converged,
    })
}

fn plus_plus_seeds<R: Rng>(x: &FeatureMatrix, k: usize, rng: &mut R) -> Vec<f64> {
    let n = x.count();
    let mut centers = Vec::with_capacity(k * x.dim());
    let mut chosen = Vec::with_capacity(k);
    let first = rng.random_range(0..n);
    centers.extend_from_slice(x.sample(first));
    chosen.push(first);
    let mut nearest: Vec<f64> = x.samples().map(|s| sq_dist(s, x.sample(first))).collect();

    while chosen.len() < k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in nearest.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // rounding can leave `target` just above the final partial sum
            pick.unwrap_or_else(|| nearest.iter().rposition(|&w| w > 0.0).unwrap_or(0))
        } else {
            // every sample coincides with a chosen centre; take an unused index
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        centers.extend_from_slice(x.sample(pick));
        chosen.push(pick);
        for (i, s) in x.samples().enumerate() {
            nearest[i] = nearest[i].min(sq_dist(s, x.sample(pick)));
        }
    }
    centers
}

/// Nearest centre (lowest index on ties) and squared distance for every sample.
fn assign<E: Executor>(x: &FeatureMatrix, centers: &[f64], k: usize, exec: &E) -> (Vec<usize>, Vec<f64>) {
    let d = x.dim();
    let ranges = chunk_ranges(x.count(), ASSIGN_CHUNK);
    let parts = exec.map(ranges.len(), |c| {
        ranges[c]
            .clone()
            .map(|i| nearest_center(x.sample(i), centers, d, k))
            .collect::<Vec<_>>()
    });
    parts.into_iter().flatten().unzip()
}

fn nearest_center(s: &[f64], centers: &[f64], d: usize, k: usize) -> (usize, f64) {
    let mut best = (0, sq_dist(s, &centers[..d]));
    for c in 1..k {
        let dist = sq_dist(s, &centers[c * d..(c + 1) * d]);
        if dist < best.1 {
            best = (c, dist);
        }
    }
    best
}

/// Moves each centre to the mean of its members. A centre with no members is
/// moved onto the sample farthest from its own centre, skipping samples
/// already used for a reseed in this step.
fn update_centers(x: &FeatureMatrix, assignments: &[usize], dists: &[f64], k: usize, centers: &mut [f64]) {
    let d = x.dim();
    let mut counts = vec![0usize; k];
    let mut sums = vec![0.0; k * d];
    for (s, &a) in x.samples().zip(assignments) {
        counts[a] += 1;
        for (acc, v) in sums[a * d..(a + 1) * d].iter_mut().zip(s) {
            *acc += v;
        }
    }
    let mut taken: Vec<usize> = Vec::new();
    for c in 0..k {
        let dst = &mut centers[c * d..(c + 1) * d];
        if counts[c] > 0 {
            let inv = counts[c] as f64;
            for (v, s) in dst.iter_mut().zip(&sums[c * d..(c + 1) * d]) {
                *v = s / inv;
            }
        } else {
            let far = (0..x.count())
                .filter(|i| !taken.contains(i))
                .fold(None, |best: Option<usize>, i| match best {
                    Some(b) if dists[b] >= dists[i] => Some(b),
                    _ => Some(i),
                });
            if let Some(i) = far {
                taken.push(i);
                dst.copy_from_slice(x.sample(i));
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum SigmaRule {
    #[default]
    MeanDist,
    MedianDist,
    Fixed(f64),
}

/// Sets σ from the Euclidean distance of every sample to its nearest centre.
pub fn fit_sigma(x: &FeatureMatrix, model: ClusterModel, rule: SigmaRule) -> Result<ClusterModel> {
    let k = model.k_regions();
    if k == 0 {
        return Err(Error::invalid("k", "σ needs at least one centre"));
    }
    check_dim(model.dim, x.dim())?;
    let sigma = match rule {
        SigmaRule::Fixed(v) => {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid("sigma", "fixed σ must be finite and positive"));
            }
            v
        }
        SigmaRule::MeanDist | SigmaRule::MedianDist => {
            let mut dists: Vec<f64> = x
                .samples()
                .map(|s| libm::sqrt(nearest_center(s, &model.centers, model.dim, k).1))
                .collect();
            let value = if rule == SigmaRule::MeanDist {
                dists.iter().sum::<f64>() / dists.len() as f64
            } else {
                dists.sort_by(f64::total_cmp);
                let m = dists.len() / 2;
                if dists.len() % 2 == 1 {
                    dists[m]
                } else {
                    0.5 * (dists[m - 1] + dists[m])
                }
            };
            if value < SIGMA_FLOOR {
                log::warn!("samples sit on their centres; σ floored at {SIGMA_FLOOR}");
                SIGMA_FLOOR
            } else {
                value
            }
        }
    };
    model.with_sigma(sigma)
}
