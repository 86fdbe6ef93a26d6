//! PCA projection fitted on training features.

use alloc::vec;
use alloc::vec::Vec;

use crate::dataspace::FeatureMatrix;
use crate::error::{check_dim, Error, Result};
use crate::linalg::{axpy, dot, symmetric_eigen, Matrix};

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    mean: Vec<f64>,
    /// Per-dimension standard deviations, present when standardisation was requested.
    scale: Option<Vec<f64>>,
    /// `d × d'`, orthonormal columns in descending-variance order.
    basis: Matrix,
    explained_variance: Vec<f64>,
}

impl PcaModel {
    /// Reassembles a model from stored parts.
    pub fn from_parts(
        mean: Vec<f64>,
        scale: Option<Vec<f64>>,
        basis: Matrix,
        explained_variance: Vec<f64>,
    ) -> Result<Self> {
        check_dim(mean.len(), basis.rows())?;
        check_dim(basis.cols(), explained_variance.len())?;
        if let Some(s) = &scale {
            check_dim(mean.len(), s.len())?;
        }
        Ok(Self {
            mean,
            scale,
            basis,
            explained_variance,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn out_dim(&self) -> usize {
        self.basis.cols()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn scale(&self) -> Option<&[f64]> {
        self.scale.as_deref()
    }

    pub fn basis(&self) -> &Matrix {
        &self.basis
    }

    /// Sample variance (divisor `N − 1`) captured by each component.
    pub fn explained_variance(&self) -> &[f64] {
        &self.explained_variance
    }

    /// `basisᵀ (x − mean)`, with the centred input divided by `scale` when standardising.
    pub fn transform_one(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.in_dim(), x.len())?;
        let centred = self.centre(x);
        Ok(self.basis.tr_mul_vec(&centred))
    }

    pub fn transform(&self, x: &FeatureMatrix) -> Result<FeatureMatrix> {
        check_dim(self.in_dim(), x.dim())?;
        let mut data = Vec::with_capacity(x.count() * self.out_dim());
        for s in x.samples() {
            data.extend(self.basis.tr_mul_vec(&self.centre(s)));
        }
        FeatureMatrix::from_columns(self.out_dim(), x.count(), data)
    }

    /// `basis · z + mean`, undoing the scaling when standardising.
    pub fn reconstruct(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.out_dim(), z.len())?;
        let mut x = self.basis.mul_vec(z);
        if let Some(s) = &self.scale {
            x.iter_mut().zip(s).for_each(|(v, s)| *v *= s);
        }
        x.iter_mut().zip(&self.mean).for_each(|(v, m)| *v += m);
        Ok(x)
    }

    fn centre(&self, x: &[f64]) -> Vec<f64> {
        match &self.scale {
            Some(s) => x
                .iter()
                .zip(&self.mean)
                .zip(s)
                .map(|((v, m), s)| (v - m) / s)
                .collect(),
            None => x.iter().zip(&self.mean).map(|(v, m)| v - m).collect(),
        }
    }
}

/// Fits the top `out_dim` principal directions of `x`.
pub fn fit_pca(x: &FeatureMatrix, out_dim: usize) -> Result<PcaModel> {
    fit(x, out_dim, false)
}

/// As [`fit_pca`], after scaling every dimension to unit variance.
/// Constant dimensions keep scale 1.
pub fn fit_pca_standardized(x: &FeatureMatrix, out_dim: usize) -> Result<PcaModel> {
    fit(x, out_dim, true)
}

fn fit(x: &FeatureMatrix, out_dim: usize, standardize: bool) -> Result<PcaModel> {
    let (d, n) = (x.dim(), x.count());
    let max = d.min(n);
    if out_dim == 0 || out_dim > max {
        return Err(Error::TooManyComponents {
            requested: out_dim,
            max,
        });
    }
    let mean = x.mean();
    let divisor = (n.max(2) - 1) as f64;

    let mut centred: Vec<Vec<f64>> = x
        .samples()
        .map(|s| s.iter().zip(&mean).map(|(v, m)| v - m).collect())
        .collect();
    let scale = if standardize {
        let mut var = vec![0.0; d];
        for c in &centred {
            var.iter_mut().zip(c).for_each(|(v, x)| *v += x * x);
        }
        let scale: Vec<f64> = var
            .iter()
            .map(|v| {
                let sd = libm::sqrt(v / divisor);
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        for c in &mut centred {
            c.iter_mut().zip(&scale).for_each(|(x, s)| *x /= s);
        }
        Some(scale)
    } else {
        None
    };

    let total: f64 = centred.iter().map(|c| dot(c, c)).sum();
    if total == 0.0 {
        return Err(Error::ZeroVariance);
    }

    let (values, mut basis) = if n >= d {
        covariance_route(&centred, d, out_dim)
    } else {
        gram_route(&centred, d, out_dim)
    };
    fix_signs(&mut basis);
    let explained_variance = values.iter().map(|v| v.max(0.0) / divisor).collect();
    Ok(PcaModel {
        mean,
        scale,
        basis,
        explained_variance,
    })
}

fn covariance_route(centred: &[Vec<f64>], d: usize, out_dim: usize) -> (Vec<f64>, Matrix) {
    let mut scatter = Matrix::zeros(d, d);
    for c in centred {
        for r in 0..d {
            if c[r] != 0.0 {
                // upper triangle only
                axpy(c[r], &c[r..], &mut scatter.row_mut(r)[r..]);
            }
        }
    }
    let (values, vectors) = symmetric_eigen(&scatter);
    let basis = Matrix::from_fn(d, out_dim, |r, c| vectors[(r, c)]);
    (values[..out_dim].to_vec(), basis)
}

/// Eigenvectors of the `N × N` Gram matrix lifted back into `R^d`. Directions
/// with (numerically) zero variance are completed by Gram–Schmidt on the
/// standard basis.
fn gram_route(centred: &[Vec<f64>], d: usize, out_dim: usize) -> (Vec<f64>, Matrix) {
    let n = centred.len();
    let gram = Matrix::from_fn(n, n, |r, c| if r <= c { dot(&centred[r], &centred[c]) } else { 0.0 });
    let (values, vectors) = symmetric_eigen(&gram);
    let tol = values[0].abs() * n as f64 * f64::EPSILON * 16.0;

    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(out_dim);
    let mut kept_values = Vec::with_capacity(out_dim);
    for (k, &lambda) in values.iter().enumerate().take(out_dim) {
        if lambda <= tol {
            break;
        }
        let mut v = vec![0.0; d];
        for (i, c) in centred.iter().enumerate() {
            axpy(vectors[(i, k)], c, &mut v);
        }
        let inv = 1.0 / libm::sqrt(lambda);
        v.iter_mut().for_each(|x| *x *= inv);
        columns.push(v);
        kept_values.push(lambda);
    }
    let mut e = 0;
    while columns.len() < out_dim && e < d {
        let mut v = vec![0.0; d];
        v[e] = 1.0;
        e += 1;
        for _ in 0..2 {
            for c in &columns {
                let proj = dot(c, &v);
                axpy(-proj, c, &mut v);
            }
        }
        let len = crate::linalg::norm(&v);
        if len > 1e-6 {
            v.iter_mut().for_each(|x| *x /= len);
            columns.push(v);
            kept_values.push(0.0);
        }
    }
    let basis = Matrix::from_fn(d, out_dim, |r, c| columns[c][r]);
    (kept_values, basis)
}

/// Flips each column so that its largest-magnitude entry (first on ties) is positive.
fn fix_signs(basis: &mut Matrix) {
    for c in 0..basis.cols() {
        let mut best = 0;
        for r in 1..basis.rows() {
            if basis[(r, c)].abs() > basis[(best, c)].abs() {
                best = r;
            }
        }
        if basis[(best, c)] < 0.0 {
            for r in 0..basis.rows() {
                basis[(r, c)] = -basis[(r, c)];
            }
        }
    }
}
