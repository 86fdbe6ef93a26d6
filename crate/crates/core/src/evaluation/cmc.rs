use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_dim, Error, Result};
use crate::linalg::Matrix;

/// Cumulative matching characteristic: `rates[r − 1]` is the fraction of
/// probes whose true match ranks within the top `r` gallery entries.
#[derive(Debug, Clone, PartialEq)]
pub struct CmcCurve {
    pub rates: Vec<f64>,
}

impl CmcCurve {
    /// Rate at 1-based rank `r`, clamped to the gallery size.
    pub fn rank(&self, r: usize) -> f64 {
        let idx = r.clamp(1, self.rates.len()) - 1;
        self.rates[idx]
    }

    pub fn gallery_size(&self) -> usize {
        self.rates.len()
    }
}

/// 1-based rank of each probe's best-ranked true match. Gallery entries are
/// ordered by ascending distance, ties broken by gallery index.
pub fn match_ranks(dist: &Matrix, probe_ids: &[i64], gallery_ids: &[i64]) -> Result<Vec<usize>> {
    check_dim(dist.rows(), probe_ids.len())?;
    check_dim(dist.cols(), gallery_ids.len())?;
    let mut ranks = Vec::with_capacity(probe_ids.len());
    for (p, &pid) in probe_ids.iter().enumerate() {
        let row = dist.row(p);
        let mut order: Vec<usize> = (0..row.len()).collect();
        order.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
        let rank = order
            .iter()
            .position(|&g| gallery_ids[g] == pid)
            .ok_or(Error::ProbeWithoutMatch { probe: p, identity: pid })?;
        ranks.push(rank + 1);
    }
    Ok(ranks)
}

pub fn cmc(dist: &Matrix, probe_ids: &[i64], gallery_ids: &[i64]) -> Result<CmcCurve> {
    if probe_ids.is_empty() || gallery_ids.is_empty() {
        return Err(Error::Empty("probe or gallery set"));
    }
    let ranks = match_ranks(dist, probe_ids, gallery_ids)?;
    let mut hits = vec![0usize; gallery_ids.len()];
    for r in ranks {
        hits[r - 1] += 1;
    }
    let n = probe_ids.len() as f64;
    let mut acc = 0;
    let rates = hits
        .into_iter()
        .map(|h| {
            acc += h;
            acc as f64 / n
        })
        .collect();
    Ok(CmcCurve { rates })
}

/// Collapses gallery columns by identity, keeping the smallest distance;
/// identities come out in ascending order.
pub fn aggregate_min_by_identity(dist: &Matrix, gallery_ids: &[i64]) -> Result<(Matrix, Vec<i64>)> {
    check_dim(dist.cols(), gallery_ids.len())?;
    let mut columns: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (g, &id) in gallery_ids.iter().enumerate() {
        columns.entry(id).or_default().push(g);
    }
    let ids: Vec<i64> = columns.keys().copied().collect();
    let groups: Vec<&Vec<usize>> = columns.values().collect();
    let out = Matrix::from_fn(dist.rows(), ids.len(), |p, c| {
        groups[c].iter().map(|&g| dist[(p, g)]).fold(f64::INFINITY, f64::min)
    });
    Ok((out, ids))
}

/// Mean and (population) standard deviation of several curves, rank by rank.
#[derive(Debug, Clone, PartialEq)]
pub struct CmcSummary {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub repeats: usize,
}

impl CmcSummary {
    /// Curves of different gallery sizes are truncated to the shortest.
    pub fn from_curves(curves: &[CmcCurve]) -> Result<Self> {
        let len = curves
            .iter()
            .map(CmcCurve::gallery_size)
            .min()
            .ok_or(Error::Empty("CMC curves"))?;
        let n = curves.len() as f64;
        let mean: Vec<f64> = (0..len)
            .map(|r| curves.iter().map(|c| c.rates[r]).sum::<f64>() / n)
            .collect();
        let std = (0..len)
            .map(|r| {
                let var = curves
                    .iter()
                    .map(|c| {
                        let d = c.rates[r] - mean[r];
                        d * d
                    })
                    .sum::<f64>()
                    / n;
                libm::sqrt(var)
            })
            .collect();
        Ok(Self {
            mean,
            std,
            repeats: curves.len(),
        })
    }

    pub fn rank(&self, r: usize) -> f64 {
        self.mean[r.clamp(1, self.mean.len()) - 1]
    }
}
