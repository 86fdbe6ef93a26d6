// oracles are written as plain index loops
#![allow(clippy::needless_range_loop)]

use nalgebra::{DMatrix, SymmetricEigen};
use nlml_core::clustering::{fit_sigma, kmeans};
use nlml_core::linalg::sq_dist;
use nlml_core::preprocess::{fit_pca, fit_pca_standardized};
use nlml_core::{ClusterModel, Error, FeatureMatrix, SigmaRule};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn gaussian(rng: &mut ChaCha8Rng, d: usize, n: usize, scales: &[f64]) -> FeatureMatrix {
    let samples: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            (0..d)
                .map(|k| scales[k % scales.len()] * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng) + 0.5 * k as f64)
                .collect()
        })
        .collect();
    FeatureMatrix::from_samples(&samples).unwrap()
}

/// Eigen-decomposition of the N−1 covariance by nalgebra, descending, with
/// the largest-magnitude entry of each vector made positive.
fn nalgebra_pca(x: &FeatureMatrix) -> (Vec<f64>, Vec<Vec<f64>>) {
    let (d, n) = (x.dim(), x.count());
    let mean = x.mean();
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for s in x.samples() {
        let c = nalgebra::DVector::from_iterator(d, s.iter().zip(&mean).map(|(v, m)| v - m));
        cov += &c * c.transpose();
    }
    cov /= (n - 1) as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = order
        .iter()
        .map(|&i| {
            let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            let big = v.iter().copied().fold(0.0f64, |m, e| if e.abs() > m.abs() { e } else { m });
            if big < 0.0 {
                v.iter_mut().for_each(|e| *e = -*e);
            }
            v
        })
        .collect();
    (values, vectors)
}

#[test]
fn pca_matches_nalgebra_covariance_route() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for (d, n) in [(3, 40), (6, 200), (10, 12)] {
        let x = gaussian(&mut rng, d, n, &[3.0, 2.0, 1.4, 1.0, 0.7, 0.5, 0.35, 0.25, 0.17, 0.12]);
        let out = d.min(n) - 1;
        let pca = fit_pca(&x, out).unwrap();
        let (values, vectors) = nalgebra_pca(&x);
        for c in 0..out {
            let got = pca.explained_variance()[c];
            assert!((got - values[c]).abs() < 1e-10 * values[0], "d={d} n={n} λ{c}: {got} vs {}", values[c]);
            for r in 0..d {
                assert!((pca.basis()[(r, c)] - vectors[c][r]).abs() < 1e-8, "d={d} n={n} component {c}");
            }
        }
    }
}

#[test]
fn gram_route_agrees_with_nalgebra_when_samples_are_few() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let (d, n) = (15, 6);
    let x = gaussian(&mut rng, d, n, &[2.0, 1.0, 0.5]);
    // N − 1 components carry variance
    let pca = fit_pca(&x, n - 1).unwrap();
    let (values, vectors) = nalgebra_pca(&x);
    for c in 0..n - 1 {
        assert!((pca.explained_variance()[c] - values[c]).abs() < 1e-10 * values[0]);
        for r in 0..d {
            assert!((pca.basis()[(r, c)] - vectors[c][r]).abs() < 1e-8);
        }
    }
    // completion keeps the basis orthonormal
    let full = fit_pca(&x, n).unwrap();
    let b = full.basis();
    for a in 0..n {
        for c in 0..n {
            let dot: f64 = (0..d).map(|r| b[(r, a)] * b[(r, c)]).sum();
            assert!((dot - if a == c { 1.0 } else { 0.0 }).abs() < 1e-10);
        }
    }
}

#[test]
fn pca_errors() {
    let x = FeatureMatrix::from_samples(&[[1.0, 2.0], [1.0, 2.0], [1.0, 2.0]]).unwrap();
    assert_eq!(fit_pca(&x, 1).unwrap_err(), Error::ZeroVariance);
    let y = FeatureMatrix::from_samples(&[[1.0, 2.0], [0.0, 2.0]]).unwrap();
    assert!(matches!(fit_pca(&y, 3), Err(Error::TooManyComponents { requested: 3, max: 2 })));
}

#[test]
fn standardised_pca_is_scale_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let x = gaussian(&mut rng, 4, 50, &[1.0, 0.6, 0.3, 0.2]);
    let scaled: Vec<Vec<f64>> = x
        .samples()
        .map(|s| s.iter().enumerate().map(|(k, v)| v * [1.0, 10.0, 0.01, 3.0][k]).collect())
        .collect();
    let y = FeatureMatrix::from_samples(&scaled).unwrap();
    let a = fit_pca_standardized(&x, 3).unwrap().transform(&x).unwrap();
    let b = fit_pca_standardized(&y, 3).unwrap().transform(&y).unwrap();
    for (u, v) in a.as_slice().iter().zip(b.as_slice()) {
        assert!((u - v).abs() < 1e-9);
    }
}

fn brute_force_best_sse(x: &FeatureMatrix) -> f64 {
    let n = x.count();
    let mut best = f64::INFINITY;
    for mask in 1u32..(1 << n) - 1 {
        let mut sse = 0.0;
        for side in [true, false] {
            let members: Vec<&[f64]> = (0..n).filter(|i| (mask >> i & 1 == 1) == side).map(|i| x.sample(i)).collect();
            let mut mean = vec![0.0; x.dim()];
            for m in &members {
                mean.iter_mut().zip(m.iter()).for_each(|(a, b)| *a += b / members.len() as f64);
            }
            sse += members.iter().map(|m| sq_dist(m, &mean)).sum::<f64>();
        }
        best = best.min(sse);
    }
    best
}

#[test]
fn two_blobs_reach_the_global_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    for trial in 0..10 {
        let samples: Vec<[f64; 2]> = (0..10)
            .map(|i| {
                let off = if i % 2 == 0 { 0.0 } else { 6.0 };
                [off + rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]
            })
            .collect();
        let x = FeatureMatrix::from_samples(&samples).unwrap();
        let fit = kmeans(&x, 2, trial, 100).unwrap();
        let best = brute_force_best_sse(&x);
        assert!((fit.sse_history.last().unwrap() - best).abs() < 1e-9 * best.max(1.0));
        assert!(fit.converged);
    }
}

#[test]
fn one_cluster_centre_is_the_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let x = gaussian(&mut rng, 5, 37, &[1.0, 4.0]);
    let fit = kmeans(&x, 1, 9, 50).unwrap();
    for (c, m) in fit.model.center(0).iter().zip(x.mean()) {
        assert!((c - m).abs() < 1e-12);
    }
}

#[test]
fn too_many_clusters_is_an_error() {
    let x = FeatureMatrix::from_samples(&[[0.0], [1.0]]).unwrap();
    assert!(matches!(kmeans(&x, 3, 0, 10), Err(Error::TooManyClusters { k: 3, n: 2 })));
}

#[test]
fn sigma_rules_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(26);
    let x = gaussian(&mut rng, 3, 41, &[1.0]);
    let centers: Vec<f64> = (0..9).map(|_| rng.random_range(-1.0..2.0)).collect();
    let model = ClusterModel::new(3, centers.clone(), 1.0).unwrap();
    let mut dists: Vec<f64> = x
        .samples()
        .map(|s| (0..3).map(|k| sq_dist(s, &centers[3 * k..3 * k + 3]).sqrt()).fold(f64::INFINITY, f64::min))
        .collect();
    let mean = dists.iter().sum::<f64>() / dists.len() as f64;
    dists.sort_by(f64::total_cmp);
    let median = dists[20];
    let got = fit_sigma(&x, model.clone(), SigmaRule::MeanDist).unwrap().sigma();
    assert!((got - mean).abs() < 1e-12);
    let got = fit_sigma(&x, model.clone(), SigmaRule::MedianDist).unwrap().sigma();
    assert_eq!(got, median);
    assert_eq!(fit_sigma(&x, model, SigmaRule::Fixed(0.25)).unwrap().sigma(), 0.25);
}

#[test]
fn sigma_is_floored_when_points_sit_on_centres() {
    let x = FeatureMatrix::from_samples(&[[1.0, 1.0], [1.0, 1.0]]).unwrap();
    let model = ClusterModel::new(2, vec![1.0, 1.0], 1.0).unwrap();
    let s = fit_sigma(&x, model, SigmaRule::MeanDist).unwrap().sigma();
    assert!(s > 0.0 && s <= 1e-8);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn lloyd_objective_never_increases(seed in any::<u64>(), k in 1usize..6, n in 8usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = gaussian(&mut rng, 3, n, &[1.0, 0.5, 2.0]);
        let fit = kmeans(&x, k, seed, 100).unwrap();
        for w in fit.sse_history.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-12, "{:?}", fit.sse_history);
        }
        prop_assert_eq!(fit.assignments.len(), n);
        prop_assert!(fit.assignments.iter().all(|&a| a < k));
    }

    #[test]
    fn kmeans_is_deterministic(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = gaussian(&mut rng, 2, 30, &[1.0]);
        prop_assert_eq!(kmeans(&x, 3, seed, 100).unwrap(), kmeans(&x, 3, seed, 100).unwrap());
    }
}
