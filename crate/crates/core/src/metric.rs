//! The composite learned distance `D(x_i, x_j) = Σ_k w_k(x_i, x_j) ‖f_k(x_i) − f_k(x_j)‖²`.

use alloc::vec::Vec;

use crate::clustering::{ClusterModel, PairWeights};
use crate::dataspace::FeatureMatrix;
use crate::error::{check_dim, Error, Result};
use crate::exec::{Executor, Sequential};
use crate::linalg::{sq_dist, Matrix};
use crate::network::NetworkBank;
use crate::preprocess::PcaModel;
use crate::training::{Hyperparams, Variant};

/// A trained (or freshly initialised) metric. Inputs to [`NlmlModel::distance`]
/// live in the network input space, i.e. after the optional PCA projection;
/// use [`NlmlModel::project`] to get there from raw features.
#[derive(Debug, Clone, PartialEq)]
pub struct NlmlModel {
    bank: NetworkBank,
    clusters: ClusterModel,
    beta: f64,
    pca: Option<PcaModel>,
}

impl NlmlModel {
    pub fn new(bank: NetworkBank, clusters: ClusterModel, beta: f64, pca: Option<PcaModel>) -> Result<Self> {
        if bank.k_regions() != clusters.k_regions() {
            return Err(Error::Shape(alloc::format!(
                "{} networks for {} regions",
                bank.len(),
                clusters.k_regions()
            )));
        }
        if clusters.k_regions() > 0 {
            check_dim(bank.in_dim(), clusters.dim())?;
        }
        if let Some(p) = &pca {
            check_dim(bank.in_dim(), p.out_dim())?;
        }
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::invalid("beta", "must be finite and positive"));
        }
        Ok(Self {
            bank,
            clusters,
            beta,
            pca,
        })
    }

    /// Identity-initialised model for `variant` over `input_dim` features.
    /// `clusters` must define `hp.k` regions unless the variant drops them.
    pub fn initial(input_dim: usize, hp: &Hyperparams, variant: Variant, clusters: ClusterModel) -> Result<Self> {
        let hp = variant.configure(hp);
        let clusters = if hp.k == 0 {
            ClusterModel::empty(input_dim)
        } else {
            clusters
        };
        let bank = NetworkBank::identity(input_dim, &hp.layer_dims, clusters.k_regions(), hp.activation)?;
        Self::new(bank, clusters, hp.beta, None)
    }

    /// Global-network-only model (`K = 0`).
    pub fn nlml1(input_dim: usize, hp: &Hyperparams) -> Result<Self> {
        Self::initial(input_dim, hp, Variant::GlobalOnly, ClusterModel::empty(input_dim))
    }

    /// Every network a single square linear layer: a Mahalanobis metric per region.
    pub fn nlml2(input_dim: usize, hp: &Hyperparams, clusters: ClusterModel) -> Result<Self> {
        Self::initial(input_dim, hp, Variant::Mahalanobis { out_dim: input_dim }, clusters)
    }

    pub fn bank(&self) -> &NetworkBank {
        &self.bank
    }

    pub fn clusters(&self) -> &ClusterModel {
        &self.clusters
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn pca(&self) -> Option<&PcaModel> {
        self.pca.as_ref()
    }

    pub fn with_pca(self, pca: Option<PcaModel>) -> Result<Self> {
        Self::new(self.bank, self.clusters, self.beta, pca)
    }

    pub fn with_beta(self, beta: f64) -> Result<Self> {
        Self::new(self.bank, self.clusters, beta, self.pca)
    }

    /// Dimension of raw features accepted by [`NlmlModel::project`].
    pub fn raw_dim(&self) -> usize {
        self.pca.as_ref().map(PcaModel::in_dim).unwrap_or(self.bank.in_dim())
    }

    pub fn input_dim(&self) -> usize {
        self.bank.in_dim()
    }

    /// Applies the attached PCA, if any.
    pub fn project(&self, raw: &FeatureMatrix) -> Result<FeatureMatrix> {
        match &self.pca {
            Some(p) => p.transform(raw),
            None => {
                check_dim(self.bank.in_dim(), raw.dim())?;
                Ok(raw.clone())
            }
        }
    }

    pub fn weights(&self, xi: &[f64], xj: &[f64]) -> Result<PairWeights> {
        self.clusters.pair_weights(self.beta, xi, xj)
    }

    pub fn distance(&self, xi: &[f64], xj: &[f64]) -> Result<f64> {
        let d = self.bank.in_dim();
        check_dim(d, xi.len())?;
        check_dim(d, xj.len())?;
        let w = if self.clusters.k_regions() == 0 {
            PairWeights { w: alloc::vec![self.beta] }
        } else {
            self.weights(xi, xj)?
        };
        let mut total = 0.0;
        for (net, wk) in self.bank.networks().iter().zip(&w.w) {
            total += wk * net.distance(xi, xj)?;
        }
        Ok(total)
    }

    /// `probes.count() × gallery.count()` matrix of [`NlmlModel::distance`].
    pub fn distance_matrix(&self, probes: &FeatureMatrix, gallery: &FeatureMatrix) -> Result<Matrix> {
        self.distance_matrix_with(probes, gallery, &Sequential)
    }

    /// Embeddings and log-similarities are computed once per sample; rows are
    /// filled independently.
    pub fn distance_matrix_with<E: Executor>(
        &self,
        probes: &FeatureMatrix,
        gallery: &FeatureMatrix,
        exec: &E,
    ) -> Result<Matrix> {
        let d = self.bank.in_dim();
        check_dim(d, probes.dim())?;
        check_dim(d, gallery.dim())?;
        let p_cache = self.cache(probes, exec)?;
        let g_cache = self.cache(gallery, exec)?;
        let nets = self.bank.len();
        let rows = exec.map(probes.count(), |p| {
            (0..gallery.count())
                .map(|g| {
                    let w = PairWeights::from_log_similarities(self.beta, &p_cache[p].1, &g_cache[g].1);
                    (0..nets)
                        .map(|k| w.w[k] * sq_dist(&p_cache[p].0[k], &g_cache[g].0[k]))
                        .sum::<f64>()
                })
                .collect::<Vec<f64>>()
        });
        Ok(Matrix::from_row_major(
            probes.count(),
            gallery.count(),
            rows.into_iter().flatten().collect(),
        ))
    }

    #[allow(clippy::type_complexity)]
    fn cache<E: Executor>(&self, x: &FeatureMatrix, exec: &E) -> Result<Vec<(Vec<Vec<f64>>, Vec<f64>)>> {
        exec.map(x.count(), |i| {
            let s = x.sample(i);
            let embeddings = self
                .bank
                .networks()
                .iter()
                .map(|n| n.forward_unchecked(s).post.pop().expect("non-empty network"))
                .collect();
            Ok((embeddings, self.clusters.log_similarity(s)?))
        })
        .into_iter()
        .collect()
    }
}
