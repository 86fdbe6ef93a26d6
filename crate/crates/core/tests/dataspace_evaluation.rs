use std::collections::BTreeSet;

use nlml_core::dataspace::{make_pairs, split_by_identity};
use nlml_core::evaluation::{
    baseline_euclidean, benchmark_config, cmc, run_protocol, synth_generate, Method, ProtocolOptions, SynthSpec,
    SynthStats,
};
use nlml_core::{Error, FeatureMatrix, IdentityLabels, Matrix, PairMode, Sequential, SplitSpec};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn all_mode_enumerates_every_unordered_pair(ids in prop::collection::vec(0i64..6, 2..30), seed in any::<u64>()) {
        let labels = IdentityLabels::new(ids.clone(), None).unwrap();
        let n = ids.len();
        let pairs = make_pairs(&labels, PairMode::All, seed).unwrap();
        prop_assert_eq!(pairs.len(), n * (n - 1) / 2);
        for p in pairs.iter() {
            prop_assert!(p.i < p.j);
            prop_assert_eq!(p.y == 1, ids[p.i] == ids[p.j]);
        }
        // labels fully determine the result
        prop_assert_eq!(pairs, make_pairs(&labels, PairMode::All, seed.wrapping_add(1)).unwrap());
    }

    #[test]
    fn balanced_mode_counts(per_id in 2usize..4, ids in 2usize..8, ratio in 0.5f64..3.0, seed in any::<u64>()) {
        let labels = IdentityLabels::new((0..ids * per_id).map(|i| (i / per_id) as i64).collect(), None).unwrap();
        let positives = ids * per_id * (per_id - 1) / 2;
        let negatives_available = ids * per_id * (ids * per_id - 1) / 2 - positives;
        let pairs = make_pairs(&labels, PairMode::Balanced(ratio), seed).unwrap();
        prop_assert_eq!(pairs.positives(), positives);
        let want = ((ratio * positives as f64).round() as usize).min(negatives_available);
        prop_assert_eq!(pairs.negatives(), want);
        prop_assert_eq!(&pairs, &make_pairs(&labels, PairMode::Balanced(ratio), seed).unwrap());
    }

    #[test]
    fn splits_are_identity_disjoint(n_ids in 2usize..40, seed in any::<u64>()) {
        let ids: Vec<i64> = (0..n_ids * 2).map(|i| (i % n_ids) as i64 * 7 - 3).collect();
        let labels = IdentityLabels::new(ids.clone(), None).unwrap();
        let spec = SplitSpec::random(&labels, n_ids / 2, seed).unwrap();
        let (train, test) = split_by_identity(&labels, &spec).unwrap();
        prop_assert_eq!(train.len() + test.len(), ids.len());
        let a: BTreeSet<i64> = train.iter().map(|&i| ids[i]).collect();
        let b: BTreeSet<i64> = test.iter().map(|&i| ids[i]).collect();
        prop_assert!(a.is_disjoint(&b));
        prop_assert_eq!(a.len(), n_ids / 2);
    }
}

#[test]
fn balanced_example_four_by_two() {
    let labels = IdentityLabels::new(vec![0, 0, 1, 1, 2, 2, 3, 3], None).unwrap();
    let pairs = make_pairs(&labels, PairMode::Balanced(1.0), 5).unwrap();
    assert_eq!((pairs.positives(), pairs.negatives()), (4, 4));
}

#[test]
fn no_positive_pairs_is_an_error_when_balancing() {
    let labels = IdentityLabels::new(vec![0, 1, 2], None).unwrap();
    assert_eq!(make_pairs(&labels, PairMode::Balanced(1.0), 0).unwrap_err(), Error::NoPositivePairs);
    assert_eq!(make_pairs(&labels, PairMode::All, 0).unwrap().positives(), 0);
}

#[test]
fn ten_splits_of_632_identities() {
    let labels = IdentityLabels::new((0..1264).map(|i| (i / 2) as i64).collect(), None).unwrap();
    let mut seen = BTreeSet::new();
    for r in 0..10u64 {
        let seed = nlml_core::rng::mix(42, r);
        let spec = SplitSpec::random(&labels, 316, seed).unwrap();
        assert_eq!(spec, SplitSpec::random(&labels, 316, seed).unwrap());
        assert_eq!((spec.train_ids.len(), spec.test_ids.len()), (316, 316));
        assert!(spec.train_ids.is_disjoint(&spec.test_ids));
        let (train, test) = split_by_identity(&labels, &spec).unwrap();
        assert_eq!((train.len(), test.len()), (632, 632));
        seen.insert(spec.train_ids.clone());
    }
    assert_eq!(seen.len(), 10);
}

/// Sort gallery by (distance, index), find the true match, accumulate.
fn brute_force_cmc(dist: &Matrix, probes: &[i64], gallery: &[i64]) -> Vec<f64> {
    let g = gallery.len();
    let mut rates = vec![0.0; g];
    for (p, pid) in probes.iter().enumerate() {
        let mut keyed: Vec<(f64, usize)> = (0..g).map(|j| (dist[(p, j)], j)).collect();
        keyed.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let rank = keyed.iter().position(|&(_, j)| gallery[j] == *pid).unwrap();
        for r in rates.iter_mut().skip(rank) {
            *r += 1.0;
        }
    }
    rates.iter().map(|r| r / probes.len() as f64).collect()
}

#[test]
fn cmc_matches_sort_and_scan_and_ignores_monotone_transforms() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..50 {
        let mut gallery: Vec<i64> = (0..20).collect();
        gallery.shuffle(&mut rng);
        let probes: Vec<i64> = (0..20).collect();
        // coarse values force plenty of ties
        let dist = Matrix::from_fn(20, 20, |_, _| rng.random_range(0..40) as f64 / 8.0 - 2.0);
        let curve = cmc(&dist, &probes, &gallery).unwrap();
        assert_eq!(curve.rates, brute_force_cmc(&dist, &probes, &gallery));
        assert!(curve.rates.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(*curve.rates.last().unwrap(), 1.0);
        let warped = Matrix::from_fn(20, 20, |r, c| {
            let z = dist[(r, c)];
            z * z * z + z
        });
        assert_eq!(cmc(&warped, &probes, &gallery).unwrap(), curve);
    }
}

#[test]
fn self_matching_is_rank_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let samples: Vec<Vec<f64>> = (0..15).map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let x = FeatureMatrix::from_samples(&samples).unwrap();
    let dist = baseline_euclidean(&x, &x).unwrap();
    for r in 0..15 {
        for c in 0..15 {
            assert_eq!(dist[(r, c)], dist[(c, r)]);
        }
    }
    let ids: Vec<i64> = (0..15).collect();
    assert_eq!(cmc(&dist, &ids, &ids).unwrap().rank(1), 1.0);
}

#[test]
fn euclidean_baseline_matches_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let gen = |rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
        (0..5).map(|_| (0..7).map(|_| rng.random_range(-3.0..3.0)).collect()).collect()
    };
    let (a, b) = (gen(&mut rng), gen(&mut rng));
    let d = baseline_euclidean(&FeatureMatrix::from_samples(&a).unwrap(), &FeatureMatrix::from_samples(&b).unwrap()).unwrap();
    for i in 0..5 {
        for j in 0..5 {
            let mut s = 0.0;
            for k in 0..7 {
                s += (a[i][k] - b[j][k]) * (a[i][k] - b[j][k]);
            }
            assert!((d[(i, j)] - s).abs() < 1e-13);
        }
    }
    let e = FeatureMatrix::from_samples(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
    assert_eq!(baseline_euclidean(&e, &e).unwrap()[(0, 1)], 2.0);
}

#[test]
fn default_synthetic_statistics() {
    let spec = SynthSpec::default();
    let (x, labels) = synth_generate(&spec).unwrap();
    assert_eq!((x.dim(), labels.num_identities()), (20, 40));
    let stats = SynthStats::measure(&spec, &x, &labels);
    assert!(stats.min_region_separation >= 5.0 * stats.noise_sigma, "{stats:?}");
    assert_eq!(synth_generate(&spec).unwrap().0, x);
}

#[test]
fn noiseless_synthetic_views_are_perfectly_matched() {
    let spec = SynthSpec {
        noise: 0.0,
        distortion: 0.0,
        ..Default::default()
    };
    let (x, labels) = synth_generate(&spec).unwrap();
    let probes: Vec<usize> = (0..x.count()).step_by(2).collect();
    let gallery: Vec<usize> = (1..x.count()).step_by(2).collect();
    let dist = baseline_euclidean(&x.select(&probes).unwrap(), &x.select(&gallery).unwrap()).unwrap();
    let ids = |idx: &[usize]| idx.iter().map(|&i| labels.id(i)).collect::<Vec<_>>();
    assert_eq!(cmc(&dist, &ids(&probes), &ids(&gallery)).unwrap().rank(1), 1.0);
}

#[test]
fn single_region_synthetic_has_one_cluster_of_identities() {
    let spec = SynthSpec {
        regions: 1,
        ..Default::default()
    };
    let (x, labels) = synth_generate(&spec).unwrap();
    assert_eq!(labels.num_identities(), 20);
    // every sample's nuisance block is the whole space
    assert_eq!(spec.nuisance_block(0), 0..20);
    assert_eq!(x.count(), 40);
}

#[test]
fn protocol_is_reproducible() {
    let spec = SynthSpec::default();
    let (x, labels) = synth_generate(&spec).unwrap();
    let (mut hp, opts) = benchmark_config(&spec);
    hp.max_iters = 15;
    let opts = ProtocolOptions { repeats: 2, ..opts };
    let a = run_protocol(&x, &labels, &hp, &opts, &Sequential).unwrap();
    let b = run_protocol(&x, &labels, &hp, &opts, &Sequential).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.curves.len(), 2);
    assert!(a.summary.std.iter().all(|s| s.is_finite()));
    let e = run_protocol(&x, &labels, &hp, &ProtocolOptions { method: Method::Euclidean, ..opts }, &Sequential).unwrap();
    assert!(e.reports.is_empty());
    assert_eq!(e.summary.mean.len(), 20);
}

