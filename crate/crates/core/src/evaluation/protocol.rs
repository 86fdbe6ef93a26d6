use alloc::vec::Vec;

use crate::dataspace::{make_pairs, split_by_identity, FeatureMatrix, IdentityLabels, PairMode, SplitSpec};
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::linalg::Matrix;
use crate::preprocess::{fit_pca, fit_pca_standardized};
use crate::rng;
use crate::training::{Hyperparams, TrainReport, Trainer, Variant};

use super::cmc::{aggregate_min_by_identity, cmc, CmcCurve, CmcSummary};
use super::baseline_euclidean;

/// What produces the probe × gallery distances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    #[default]
    Nlml,
    /// Global network only.
    GlobalOnly,
    /// Single square linear layer per network.
    Mahalanobis,
    /// Squared Euclidean distance on the (projected) features; no training.
    Euclidean,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Nlml => "nlml",
            Method::GlobalOnly => "nlml1",
            Method::Mahalanobis => "nlml2",
            Method::Euclidean => "euclidean",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Method::Nlml, Method::GlobalOnly, Method::Mahalanobis, Method::Euclidean]
            .into_iter()
            .find(|m| m.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolOptions {
    /// Identities drawn for training in each repeat; the rest are tested.
    pub train_identities: usize,
    pub repeats: usize,
    pub seed: u64,
    /// PCA output dimension fitted on each training split; `None` skips PCA.
    pub pca_dim: Option<usize>,
    pub standardize: bool,
    pub pair_mode: PairMode,
    /// Gallery keeps every remaining image of an identity and scores it by
    /// its closest one.
    pub multi_shot: bool,
    pub method: Method,
}

impl Default for ProtocolOptions {
    fn default() -> Self {
        Self {
            train_identities: 316,
            repeats: 10,
            seed: 0,
            pca_dim: None,
            standardize: false,
            pair_mode: PairMode::All,
            multi_shot: false,
            method: Method::Nlml,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolResult {
    pub curves: Vec<CmcCurve>,
    pub summary: CmcSummary,
    pub reports: Vec<TrainReport>,
}

/// Test-set partition into probe and gallery sample indices.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeGallery {
    pub probes: Vec<usize>,
    pub gallery: Vec<usize>,
}

/// Per identity, the first sample of its lowest view becomes the probe. The
/// gallery gets the first sample from another view (or simply the next
/// sample when views are absent or identical); with `multi_shot` it gets all
/// remaining samples. Identities with a single sample are gallery-only
/// distractors.
pub fn probe_gallery(labels: &IdentityLabels, indices: &[usize], multi_shot: bool) -> ProbeGallery {
    let mut probes = Vec::new();
    let mut gallery = Vec::new();
    let mut groups: alloc::collections::BTreeMap<i64, Vec<usize>> = Default::default();
    for &i in indices {
        groups.entry(labels.id(i)).or_default().push(i);
    }
    for members in groups.values() {
        if members.len() == 1 {
            gallery.push(members[0]);
            continue;
        }
        let view = |i: usize| labels.view(i).unwrap_or(0);
        let probe = *members
            .iter()
            .min_by_key(|&&i| (view(i), i))
            .expect("non-empty group");
        probes.push(probe);
        if multi_shot {
            gallery.extend(members.iter().copied().filter(|&i| i != probe));
        } else {
            let other = members
                .iter()
                .copied()
                .find(|&i| i != probe && view(i) != view(probe))
                .or_else(|| members.iter().copied().find(|&i| i != probe))
                .expect("group has two members");
            gallery.push(other);
        }
    }
    gallery.sort_unstable();
    ProbeGallery { probes, gallery }
}

/// Repeated random identity splits: fit PCA on the training half, train,
/// rank the test half, and average the CMC curves.
pub fn run_protocol<E: Executor>(
    x: &FeatureMatrix,
    labels: &IdentityLabels,
    hp: &Hyperparams,
    opts: &ProtocolOptions,
    exec: &E,
) -> Result<ProtocolResult> {
    if opts.repeats == 0 {
        return Err(Error::invalid("repeats", "must be at least 1"));
    }
    if labels.len() != x.count() {
        return Err(Error::DimensionMismatch {
            expected: x.count(),
            got: labels.len(),
        });
    }
    let mut curves = Vec::with_capacity(opts.repeats);
    let mut reports = Vec::new();
    for r in 0..opts.repeats {
        let split_seed = rng::mix(opts.seed, r as u64);
        let mut spec = SplitSpec::random(labels, opts.train_identities, split_seed)?;
        spec.repeats = opts.repeats;
        let (train_idx, test_idx) = split_by_identity(labels, &spec)?;
        let raw_train = x.select(&train_idx)?;

        let pca = match opts.pca_dim {
            Some(dim) if opts.standardize => Some(fit_pca_standardized(&raw_train, dim)?),
            Some(dim) => Some(fit_pca(&raw_train, dim)?),
            None => None,
        };
        let project = |m: &FeatureMatrix| match &pca {
            Some(p) => p.transform(m),
            None => Ok(m.clone()),
        };

        let split = probe_gallery(labels, &test_idx, opts.multi_shot);
        let probes = project(&x.select(&split.probes)?)?;
        let gallery = project(&x.select(&split.gallery)?)?;
        let probe_ids: Vec<i64> = split.probes.iter().map(|&i| labels.id(i)).collect();
        let gallery_ids: Vec<i64> = split.gallery.iter().map(|&i| labels.id(i)).collect();

        let dist: Matrix = match opts.method {
            Method::Euclidean => baseline_euclidean(&probes, &gallery)?,
            method => {
                let train = project(&raw_train)?;
                let variant = match method {
                    Method::GlobalOnly => Variant::GlobalOnly,
                    Method::Mahalanobis => Variant::Mahalanobis { out_dim: train.dim() },
                    _ => Variant::Full,
                };
                let train_labels = labels.select(&train_idx)?;
                let pairs = make_pairs(&train_labels, opts.pair_mode, split_seed)?;
                let hp = variant.configure(hp);
                let (model, report) = Trainer::new(&hp)
                    .with_executor(exec)
                    .train(&train, &pairs)?;
                log::info!(
                    "repeat {}: {} after {} iterations, J = {}",
                    r + 1,
                    report.stop.as_str(),
                    report.iterations.len(),
                    report.final_objective()
                );
                reports.push(report);
                model.distance_matrix_with(&probes, &gallery, exec)?
            }
        };
        let curve = if opts.multi_shot {
            let (agg, ids) = aggregate_min_by_identity(&dist, &gallery_ids)?;
            cmc(&agg, &probe_ids, &ids)?
        } else {
            cmc(&dist, &probe_ids, &gallery_ids)?
        };
        log::info!("repeat {}: rank-1 = {:.4}", r + 1, curve.rank(1));
        curves.push(curve);
    }
    let summary = CmcSummary::from_curves(&curves)?;
    Ok(ProtocolResult {
        curves,
        summary,
        reports,
    })
}
