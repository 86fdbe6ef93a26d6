//! Feature matrices, identity labels, labelled pairs and identity-disjoint splits.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::{index, SliceRandom};

use crate::error::{check_dim, Error, Result};
use crate::rng::{self, Stream};

/// `count` samples of dimension `dim`, stored column-major: sample `i`
/// occupies `data[i * dim..(i + 1) * dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    dim: usize,
    count: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    /// Validates shape and finiteness. A non-finite entry is reported as
    /// `row` = feature index, `col` = sample index.
    pub fn from_columns(dim: usize, count: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Empty("feature dimension"));
        }
        if count == 0 {
            return Err(Error::Empty("sample set"));
        }
        check_dim(dim * count, data.len())?;
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos % dim,
                col: pos / dim,
            });
        }
        Ok(Self { dim, count, data })
    }

    pub fn from_samples<S: AsRef<[f64]>>(samples: &[S]) -> Result<Self> {
        let dim = samples.first().map(|s| s.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(dim * samples.len());
        for s in samples {
            check_dim(dim, s.as_ref().len())?;
            data.extend_from_slice(s.as_ref());
        }
        Self::from_columns(dim, samples.len(), data)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn count(&self) -> usize {
        self.count
    }

    #[inline]
    pub fn sample(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn samples(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    /// Column-major buffer.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.sample(i));
        }
        Self::from_columns(self.dim, indices.len(), data)
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim];
        for s in self.samples() {
            for (m, v) in mean.iter_mut().zip(s) {
                *m += v;
            }
        }
        let n = self.count as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }
}

/// Per-sample identity and optional camera view.
///
/// Raw identities are arbitrary integers; [`IdentityLabels::class`] maps them
/// onto `0..C` in ascending raw-id order.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityLabels {
    ids: Vec<i64>,
    views: Option<Vec<i32>>,
    classes: Vec<usize>,
    distinct: Vec<i64>,
}

impl IdentityLabels {
    pub fn new(ids: Vec<i64>, views: Option<Vec<i32>>) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::Empty("identity labels"));
        }
        if let Some(v) = &views {
            check_dim(ids.len(), v.len())?;
        }
        let distinct: Vec<i64> = ids.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
        let classes = ids
            .iter()
            .map(|id| distinct.binary_search(id).expect("id collected above"))
            .collect();
        Ok(Self {
            ids,
            views,
            classes,
            distinct,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[i64] {
        &self.ids
    }

    pub fn id(&self, i: usize) -> i64 {
        self.ids[i]
    }

    pub fn views(&self) -> Option<&[i32]> {
        self.views.as_deref()
    }

    pub fn view(&self, i: usize) -> Option<i32> {
        self.views.as_ref().map(|v| v[i])
    }

    /// Contiguous class index of sample `i`.
    pub fn class(&self, i: usize) -> usize {
        self.classes[i]
    }

    /// Sorted distinct raw identities.
    pub fn identities(&self) -> &[i64] {
        &self.distinct
    }

    pub fn num_identities(&self) -> usize {
        self.distinct.len()
    }

    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let ids = indices.iter().map(|&i| self.ids[i]).collect();
        let views = self
            .views
            .as_ref()
            .map(|v| indices.iter().map(|&i| v[i]).collect());
        Self::new(ids, views)
    }

    /// Sample indices grouped by raw identity, in ascending identity order.
    pub fn groups(&self) -> BTreeMap<i64, Vec<usize>> {
        let mut groups: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
        for (i, &id) in self.ids.iter().enumerate() {
            groups.entry(id).or_default().push(i);
        }
        groups
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Pair {
    pub i: usize,
    pub j: usize,
    /// `+1` for a same-identity pair, `-1` otherwise.
    pub y: i8,
}

impl Pair {
    #[inline]
    pub fn sign(&self) -> f64 {
        f64::from(self.y)
    }

    #[inline]
    pub fn is_positive(&self) -> bool {
        self.y > 0
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PairSet {
    pairs: Vec<Pair>,
}

impl PairSet {
    /// Checks `i != j`, index bounds and label consistency of every pair.
    pub fn new(pairs: Vec<Pair>, labels: &IdentityLabels) -> Result<Self> {
        for p in &pairs {
            if p.i == p.j {
                return Err(Error::invalid("pairs", alloc::format!("self-pair at index {}", p.i)));
            }
            if p.i >= labels.len() || p.j >= labels.len() {
                return Err(Error::invalid("pairs", "pair index out of range"));
            }
            let expected = if labels.id(p.i) == labels.id(p.j) { 1 } else { -1 };
            if p.y != expected {
                return Err(Error::invalid(
                    "pairs",
                    alloc::format!("label of pair ({}, {}) disagrees with identities", p.i, p.j),
                ));
            }
        }
        Ok(Self { pairs })
    }

    pub fn as_slice(&self) -> &[Pair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.pairs.iter().filter(|p| p.is_positive()).count()
    }

    pub fn negatives(&self) -> usize {
        self.len() - self.positives()
    }

    pub fn iter(&self) -> core::slice::Iter<'_, Pair> {
        self.pairs.iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PairMode {
    /// Every unordered pair.
    All,
    /// All positives plus `round(ratio · positives)` negatives drawn without replacement.
    Balanced(f64),
}

/// Builds labelled pairs `(i, j)` with `i < j`, in lexicographic order.
///
/// With [`PairMode::All`] and no same-identity samples the negatives are
/// still returned and a warning is logged; [`PairMode::Balanced`] has nothing
/// to balance against and fails with [`Error::NoPositivePairs`].
pub fn make_pairs(labels: &IdentityLabels, mode: PairMode, seed: u64) -> Result<PairSet> {
    let n = labels.len();
    if n < 2 {
        return Err(Error::Empty("pair generation needs at least two samples"));
    }
    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if labels.id(i) == labels.id(j) {
                positives.push(Pair { i, j, y: 1 });
            } else {
                negatives.push(Pair { i, j, y: -1 });
            }
        }
    }
    let pairs = match mode {
        PairMode::All => {
            if positives.is_empty() {
                log::warn!("no positive pairs: every identity has a single sample");
            }
            let mut all = positives;
            all.extend(negatives);
            all.sort_unstable();
            all
        }
        PairMode::Balanced(ratio) => {
            if !(ratio.is_finite() && ratio >= 0.0) {
                return Err(Error::invalid("ratio", "must be finite and non-negative"));
            }
            if positives.is_empty() {
                return Err(Error::NoPositivePairs);
            }
            let wanted = libm::round(ratio * positives.len() as f64) as usize;
            let take = wanted.min(negatives.len());
            let mut rng = rng::stream_rng(seed, Stream::Pairs);
            let mut picked = index::sample(&mut rng, negatives.len(), take).into_vec();
            picked.sort_unstable();
            let mut all = positives;
            all.extend(picked.into_iter().map(|k| negatives[k]));
            all.sort_unstable();
            all
        }
    };
    Ok(PairSet { pairs })
}

/// Identity sets for one train/test partition.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitSpec {
    pub train_ids: BTreeSet<i64>,
    pub test_ids: BTreeSet<i64>,
    pub seed: u64,
    pub repeats: usize,
}

impl SplitSpec {
    /// Draws `n_train` identities for training, the rest for testing.
    pub fn random(labels: &IdentityLabels, n_train: usize, seed: u64) -> Result<Self> {
        let ids = labels.identities();
        if n_train > ids.len() {
            return Err(Error::invalid(
                "train identities",
                alloc::format!("{} requested but only {} exist", n_train, ids.len()),
            ));
        }
        let mut shuffled = ids.to_vec();
        shuffled.shuffle(&mut rng::stream_rng(seed, Stream::Split));
        Ok(Self {
            train_ids: shuffled[..n_train].iter().copied().collect(),
            test_ids: shuffled[n_train..].iter().copied().collect(),
            seed,
            repeats: 1,
        })
    }
}

/// Assigns every sample to the train or test side by its identity.
pub fn split_by_identity(labels: &IdentityLabels, spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    if let Some(&id) = spec.train_ids.intersection(&spec.test_ids).next() {
        return Err(Error::OverlappingSplit(id));
    }
    let known = labels.identities();
    for &id in spec.train_ids.iter().chain(&spec.test_ids) {
        if known.binary_search(&id).is_err() {
            return Err(Error::UnknownIdentity(id));
        }
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, id) in labels.ids().iter().enumerate() {
        if spec.train_ids.contains(id) {
            train.push(i);
        } else if spec.test_ids.contains(id) {
            test.push(i);
        } else {
            return Err(Error::UnassignedIdentity(*id));
        }
    }
    Ok((train, test))
}
