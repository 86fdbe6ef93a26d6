//! Re-identification evaluation: CMC curves, the repeated random-split
//! protocol, baselines and the synthetic benchmark.

mod cmc;
mod protocol;
mod synth;

pub use cmc::{aggregate_min_by_identity, cmc, match_ranks, CmcCurve, CmcSummary};
pub use protocol::{probe_gallery, run_protocol, Method, ProbeGallery, ProtocolOptions, ProtocolResult};
pub use synth::{benchmark_config, synth_generate, SynthSpec, SynthStats};

use crate::dataspace::FeatureMatrix;
use crate::error::{check_dim, Result};
use crate::linalg::{sq_dist, Matrix};

/// Squared Euclidean distance between every probe and gallery sample.
pub fn baseline_euclidean(probes: &FeatureMatrix, gallery: &FeatureMatrix) -> Result<Matrix> {
    check_dim(probes.dim(), gallery.dim())?;
    Ok(Matrix::from_fn(probes.count(), gallery.count(), |p, g| {
        sq_dist(probes.sample(p), gallery.sample(g))
    }))
}
