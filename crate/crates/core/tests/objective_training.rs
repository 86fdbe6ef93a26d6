use nlml_core::clustering::{fit_sigma, kmeans};
use nlml_core::dataspace::make_pairs;
use nlml_core::evaluation::{benchmark_config, synth_generate, SynthSpec};
use nlml_core::linalg::sq_dist;
use nlml_core::training::{logistic, logistic_derivative, objective, StopReason};
use nlml_core::{
    Activation, ClusterModel, FeatureMatrix, Hyperparams, IdentityLabels, Layer, LayerDims, Matrix, Network,
    NetworkBank, Pair, PairMode, PairSet, SigmaRule, Trainer,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// (z, γ, g(z), g′(z)) to 20 significant digits from 40-digit arithmetic
#[allow(clippy::excessive_precision, clippy::approx_constant)]
const FROZEN: [(f64, f64, f64, f64); 8] = [
    (-1.0, 1.0, 0.31326168751822283405, 0.26894142136999512075),
    (0.0, 1.0, 0.69314718055994530942, 0.5),
    (0.5, 2.0, 0.65663084375911141702, 0.73105857863000487925),
    (3.0, 0.5, 3.402826555965504819, 0.81757447619364365961),
    (-20.0, 1.0, 2.0611536203143807032e-9, 2.0611536181902035814e-9),
    (40.0, 3.0, 40.0, 1.0),
    (-7.5, 0.1, 3.8687100611489990884, 0.32082130082460701777),
    (0.001, 10.0, 0.069815968050786232341, 0.50249997916687499794),
];

#[test]
fn logistic_matches_high_precision_values() {
    for (z, gamma, g, dg) in FROZEN {
        let got = logistic(z, gamma);
        assert!((got - g).abs() <= 4.0 * f64::EPSILON * g.abs(), "g({z}, {gamma}) = {got}, want {g}");
        let got = logistic_derivative(z, gamma);
        assert!((got - dg).abs() <= 4.0 * f64::EPSILON * dg.abs(), "g'({z}, {gamma}) = {got}, want {dg}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn logistic_sits_within_ln2_over_gamma_of_the_hinge(t in -1e4f64..1e4, log_gamma in -3.0f64..3.0) {
        let gamma = 10f64.powf(log_gamma);
        let z = t / gamma;
        let g = logistic(z, gamma);
        prop_assert!(g.is_finite());
        let excess = g - z.max(0.0);
        prop_assert!(excess >= 0.0);
        prop_assert!(excess <= core::f64::consts::LN_2 / gamma * (1.0 + 1e-15));
        // strictly positive whenever the true excess is representable next to max(z, 0)
        let true_excess = (-t.abs()).exp().ln_1p() / gamma;
        if true_excess > f64::EPSILON * z.max(0.0) && true_excess > f64::MIN_POSITIVE {
            prop_assert!(excess > 0.0, "z={} γ={} excess={}", z, gamma, excess);
        }
        let dg = logistic_derivative(z, gamma);
        prop_assert!((0.0..=1.0).contains(&dg));
    }
}

/// Direct transcription of the objective with explicit loops.
fn objective_oracle(bank: &NetworkBank, clusters: &ClusterModel, x: &FeatureMatrix, pairs: &PairSet, hp: &Hyperparams) -> f64 {
    let embed = |net: &Network, v: &[f64]| -> Vec<f64> {
        let mut h = v.to_vec();
        for l in net.layers() {
            h = (0..l.w.rows())
                .map(|r| net.activation().apply(l.b[r] + (0..l.w.cols()).map(|c| l.w[(r, c)] * h[c]).sum::<f64>()))
                .collect();
        }
        h
    };
    let k = clusters.k_regions();
    let sim = |v: &[f64], c: usize| (-sq_dist(v, clusters.center(c)) / (2.0 * clusters.sigma().powi(2))).exp();
    let mut loss = 0.0;
    for p in pairs.iter() {
        let (a, b) = (x.sample(p.i), x.sample(p.j));
        let nets = bank.networks();
        let mut d = hp.beta * sq_dist(&embed(&nets[0], a), &embed(&nets[0], b));
        let raw: Vec<f64> = (0..k).map(|c| sim(a, c) * sim(b, c)).collect();
        let total: f64 = raw.iter().sum();
        for c in 0..k {
            d += raw[c] / total * sq_dist(&embed(&nets[c + 1], a), &embed(&nets[c + 1], b));
        }
        let y = p.y as f64;
        let e = hp.margin - y * (hp.tau - d);
        loss += (1.0 + (hp.gamma * e).exp()).ln() / hp.gamma;
    }
    let reg: f64 = bank
        .networks()
        .iter()
        .flat_map(|n| n.layers())
        .map(|l| l.w.as_slice().iter().chain(&l.b).map(|v| v * v).sum::<f64>())
        .sum();
    0.5 * loss + 0.5 * hp.lambda * reg
}

#[test]
fn objective_matches_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for k in [0, 1, 3] {
        let d = 4;
        let nets = (0..=k)
            .map(|_| {
                let l1 = Layer::new(Matrix::from_fn(3, d, |_, _| rng.random_range(-0.7..0.7)), vec![0.1, -0.2, 0.05]).unwrap();
                let l2 = Layer::new(Matrix::from_fn(2, 3, |_, _| rng.random_range(-0.7..0.7)), vec![0.0, 0.3]).unwrap();
                Network::new(vec![l1, l2], Activation::Tanh).unwrap()
            })
            .collect();
        let bank = NetworkBank::new(nets).unwrap();
        let samples: Vec<Vec<f64>> = (0..8).map(|_| (0..d).map(|_| rng.random_range(-1.5..1.5)).collect()).collect();
        let x = FeatureMatrix::from_samples(&samples).unwrap();
        let labels = IdentityLabels::new(vec![0, 0, 1, 1, 2, 2, 3, 3], None).unwrap();
        let pairs = make_pairs(&labels, PairMode::All, 0).unwrap();
        let clusters = if k == 0 {
            ClusterModel::empty(d)
        } else {
            ClusterModel::new(d, (0..k * d).map(|_| rng.random_range(-1.0..1.0)).collect(), 0.8).unwrap()
        };
        let hp = Hyperparams {
            k,
            beta: 1.3,
            lambda: 0.05,
            gamma: 2.0,
            ..Default::default()
        };
        let got = objective(&bank, &clusters, &x, &pairs, &hp).unwrap();
        let want = objective_oracle(&bank, &clusters, &x, &pairs, &hp);
        assert!((got.j - want).abs() < 1e-12 * want, "K={k}: {} vs {want}", got.j);
        assert!((got.j1 + got.j2 - got.j).abs() < 1e-12 * want);
    }
}

#[test]
fn negative_pair_beyond_margin_costs_little() {
    let x = FeatureMatrix::from_samples(&[[0.0, 0.0], [5.0, 0.0]]).unwrap();
    let labels = IdentityLabels::new(vec![1, 2], None).unwrap();
    let pairs = PairSet::new(vec![Pair { i: 0, j: 1, y: -1 }], &labels).unwrap();
    let hp = Hyperparams {
        lambda: 0.0,
        ..Default::default()
    };
    let bank = NetworkBank::identity(2, &LayerDims::Shared(vec![2]), 0, Activation::Linear).unwrap();
    // D = 25, e = 1 + (2 − 25) = −22
    let v = objective(&bank, &ClusterModel::empty(2), &x, &pairs, &hp).unwrap();
    assert!((v.j - 0.5 * (-22f64).exp().ln_1p()).abs() < 1e-20);
}

fn benchmark_problem(mu: f64) -> (FeatureMatrix, PairSet, ClusterModel, Hyperparams) {
    let spec = SynthSpec::default();
    let (x, labels) = synth_generate(&spec).unwrap();
    let (mut hp, _) = benchmark_config(&spec);
    hp.mu = mu;
    hp.pretrain_iters = 0;
    let pairs = make_pairs(&labels, PairMode::All, hp.seed).unwrap();
    let fit = kmeans(&x, hp.k, hp.seed, hp.kmeans_iters).unwrap();
    let clusters = fit_sigma(&x, fit.model, SigmaRule::MeanDist).unwrap();
    (x, pairs, clusters, hp)
}

#[test]
fn small_steps_never_increase_the_objective() {
    let (x, pairs, clusters, mut hp) = benchmark_problem(1e-4);
    hp.max_iters = 200;
    hp.epsilon = f64::MIN_POSITIVE;
    let (_, report) = Trainer::new(&hp).train_with_clusters(&x, &pairs, clusters).unwrap();
    assert_eq!(report.iterations.len(), 200);
    assert_eq!(report.stop, StopReason::MaxIters);
    let mut prev = report.initial.j;
    for rec in &report.iterations {
        assert!(rec.j <= prev + 1e-9, "iteration {}: {} > {prev}", rec.t, rec.j);
        prev = rec.j;
    }
    assert!(prev < report.initial.j);
}

#[test]
fn convergence_fires_at_first_small_change() {
    let (x, pairs, clusters, mut hp) = benchmark_problem(1e-4);
    hp.max_iters = 60;
    hp.epsilon = f64::MIN_POSITIVE;
    let (_, free) = Trainer::new(&hp).train_with_clusters(&x, &pairs, clusters.clone()).unwrap();
    let deltas: Vec<f64> = free.iterations.windows(2).map(|w| (w[1].j - w[0].j).abs()).collect();
    // threshold just above the change into iteration 31
    hp.epsilon = deltas[29] * (1.0 + 1e-9);
    let expected = 2 + deltas.iter().position(|d| *d < hp.epsilon).unwrap();
    let (_, stopped) = Trainer::new(&hp).train_with_clusters(&x, &pairs, clusters).unwrap();
    assert_eq!(stopped.stop, StopReason::Converged);
    assert_eq!(stopped.iterations.len(), expected);
    for (a, b) in stopped.iterations.iter().zip(&free.iterations) {
        assert_eq!(a.j, b.j);
    }
}

#[test]
fn training_reduces_the_objective_and_is_deterministic() {
    let (x, pairs, clusters, mut hp) = benchmark_problem(0.01);
    hp.max_iters = 40;
    hp.pretrain_iters = 5;
    let run = || Trainer::new(&hp).train_with_clusters(&x, &pairs, clusters.clone()).unwrap();
    let (m1, r1) = run();
    let (m2, r2) = run();
    assert_eq!(m1, m2);
    assert_eq!(r1.iterations.iter().map(|r| r.j).collect::<Vec<_>>(), r2.iterations.iter().map(|r| r.j).collect::<Vec<_>>());
    assert!(r1.final_objective() < r1.pretrain[0].before.j);
}
