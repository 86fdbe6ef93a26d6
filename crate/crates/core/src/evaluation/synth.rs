//! Heterogeneous synthetic re-identification data.
//!
//! Identities live in `regions` well-separated regions. Each identity has a
//! latent vector `z ~ N(0, spread² I)`; view `v` of it is
//!
//! ```text
//! x = c_r + A_{r,v} z + noise · n_r ⊙ ε,     ε ~ N(0, I)
//! ```
//!
//! where `c_r` is the region centre, `A_{r,0} = I`, `A_{r,v} = I + distortion · G`
//! for a fixed random Gaussian `G` per region and view, and `n_r` is 1 except
//! on the region's own block of "nuisance" dimensions where it equals
//! `nuisance_gain`. Which dimensions are unreliable therefore depends on the
//! region, something a single global metric cannot express.

use alloc::vec;
use alloc::vec::Vec;

use rand_distr::{Distribution, StandardNormal};

use crate::dataspace::{FeatureMatrix, IdentityLabels};
use crate::error::{Error, Result};
use crate::linalg::{sq_dist, Matrix};
use crate::network::{Activation, LayerDims};
use crate::rng::{self, Stream};
use crate::training::Hyperparams;

use super::ProtocolOptions;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub regions: usize,
    pub identities_per_region: usize,
    pub samples_per_identity: usize,
    pub dim: usize,
    pub seed: u64,
    /// Distance between any two region centres.
    pub region_separation: f64,
    /// Standard deviation of the latent identity vectors.
    pub identity_spread: f64,
    /// Base per-dimension noise standard deviation.
    pub noise: f64,
    /// Noise multiplier on each region's nuisance block.
    pub nuisance_gain: f64,
    /// Strength of the per-view linear distortion.
    pub distortion: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            regions: 2,
            identities_per_region: 20,
            samples_per_identity: 2,
            dim: 20,
            seed: 7,
            region_separation: 10.0,
            identity_spread: 0.4,
            noise: 0.08,
            nuisance_gain: 12.0,
            distortion: 0.1,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let count = |name: &'static str, v: usize| {
            if v == 0 {
                Err(Error::invalid(name, "must be at least 1"))
            } else {
                Ok(())
            }
        };
        count("regions", self.regions)?;
        count("identities_per_region", self.identities_per_region)?;
        count("samples_per_identity", self.samples_per_identity)?;
        count("dim", self.dim)?;
        if self.regions > self.dim {
            return Err(Error::invalid("regions", "cannot exceed dim"));
        }
        for (name, v) in [
            ("region_separation", self.region_separation),
            ("identity_spread", self.identity_spread),
            ("noise", self.noise),
            ("nuisance_gain", self.nuisance_gain),
            ("distortion", self.distortion),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(name, "must be finite and non-negative"));
            }
        }
        Ok(())
    }

    pub fn total_identities(&self) -> usize {
        self.regions * self.identities_per_region
    }

    /// Half-open block of nuisance dimensions for region `r`.
    pub fn nuisance_block(&self, r: usize) -> core::ops::Range<usize> {
        let start = r * self.dim / self.regions;
        let end = (r + 1) * self.dim / self.regions;
        start..end
    }
}

/// Samples ordered identity-major; identity `r · identities_per_region + i`
/// belongs to region `r`, and sample `v` of an identity carries view `v`.
pub fn synth_generate(spec: &SynthSpec) -> Result<(FeatureMatrix, IdentityLabels)> {
    spec.validate()?;
    let d = spec.dim;
    let mut rng = rng::stream_rng(spec.seed, Stream::Synth);
    let mut gauss = move || -> f64 { StandardNormal.sample(&mut rng) };

    // centres on distinct axes, pairwise distance `region_separation`
    let axis = spec.region_separation / core::f64::consts::SQRT_2;
    let centres: Vec<Vec<f64>> = (0..spec.regions)
        .map(|r| {
            let mut c = vec![0.0; d];
            c[r] = axis;
            c
        })
        .collect();
    let scale = spec.distortion / libm::sqrt(d as f64);
    let maps: Vec<Vec<Matrix>> = (0..spec.regions)
        .map(|_| {
            (0..spec.samples_per_identity)
                .map(|v| {
                    let mut a = Matrix::eye(d, d);
                    if v > 0 {
                        for x in a.as_mut_slice() {
                            *x += scale * gauss();
                        }
                    }
                    a
                })
                .collect()
        })
        .collect();

    let mut data = Vec::with_capacity(spec.total_identities() * spec.samples_per_identity * d);
    let mut ids = Vec::new();
    let mut views = Vec::new();
    for r in 0..spec.regions {
        let block = spec.nuisance_block(r);
        for i in 0..spec.identities_per_region {
            let z: Vec<f64> = (0..d).map(|_| spec.identity_spread * gauss()).collect();
            for (v, map) in maps[r].iter().enumerate() {
                let mut x = map.mul_vec(&z);
                for (k, x) in x.iter_mut().enumerate() {
                    let gain = if block.contains(&k) { spec.nuisance_gain } else { 1.0 };
                    *x += centres[r][k] + spec.noise * gain * gauss();
                }
                data.extend(x);
                ids.push((r * spec.identities_per_region + i) as i64);
                views.push(v as i32);
            }
        }
    }
    let count = ids.len();
    Ok((
        FeatureMatrix::from_columns(d, count, data)?,
        IdentityLabels::new(ids, Some(views))?,
    ))
}

/// Training and protocol settings shipped with the default synthetic
/// benchmark: one small network per region plus the global one, PCA fitted
/// on each training half, ten repeats of a half/half identity split.
pub fn benchmark_config(spec: &SynthSpec) -> (Hyperparams, ProtocolOptions) {
    let hp = Hyperparams {
        k: spec.regions,
        layer_dims: LayerDims::Shared(vec![spec.dim]),
        activation: Activation::ScaledTanh,
        mu: 0.01,
        pretrain_mu: 0.01,
        pretrain_iters: 20,
        max_iters: 1000,
        epsilon: 1e-6,
        seed: spec.seed,
        ..Default::default()
    };
    let opts = ProtocolOptions {
        train_identities: spec.total_identities() / 2,
        repeats: 10,
        seed: spec.seed,
        pca_dim: Some(spec.dim),
        ..Default::default()
    };
    (hp, opts)
}

/// Measured properties of a generated data set.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthStats {
    /// Smallest distance between empirical region means.
    pub min_region_separation: f64,
    /// RMS per-dimension deviation of a view from its identity mean.
    pub noise_sigma: f64,
}

impl SynthStats {
    pub fn measure(spec: &SynthSpec, x: &FeatureMatrix, labels: &IdentityLabels) -> Self {
        let d = x.dim();
        let mut means = vec![vec![0.0; d]; spec.regions];
        let mut counts = vec![0usize; spec.regions];
        for (s, id) in x.samples().zip(labels.ids()) {
            let r = *id as usize / spec.identities_per_region;
            counts[r] += 1;
            means[r].iter_mut().zip(s).for_each(|(m, v)| *m += v);
        }
        for (m, c) in means.iter_mut().zip(&counts) {
            m.iter_mut().for_each(|v| *v /= *c as f64);
        }
        let mut min_sep = f64::INFINITY;
        for a in 0..spec.regions {
            for b in a + 1..spec.regions {
                min_sep = min_sep.min(libm::sqrt(sq_dist(&means[a], &means[b])));
            }
        }

        let mut sum_sq = 0.0;
        let mut terms = 0usize;
        for members in labels.groups().values() {
            if members.len() < 2 {
                continue;
            }
            let mut centre = vec![0.0; d];
            for &i in members {
                centre.iter_mut().zip(x.sample(i)).for_each(|(c, v)| *c += v);
            }
            centre.iter_mut().for_each(|c| *c /= members.len() as f64);
            for &i in members {
                sum_sq += sq_dist(x.sample(i), &centre);
            }
            // unbiased: each group loses one degree of freedom per dimension
            terms += (members.len() - 1) * d;
        }
        Self {
            min_region_separation: min_sep,
            noise_sigma: if terms == 0 { 0.0 } else { libm::sqrt(sum_sq / terms as f64) },
        }
    }
}
