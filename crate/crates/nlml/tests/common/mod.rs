#![allow(dead_code)]

use std::path::Path;
use std::process::Command;

use nlml::nlml_core::{
    Activation, ClusterModel, FeatureMatrix, Hyperparams, IdentityLabels, Layer, LayerDims, Matrix, Network,
    NetworkBank, NlmlModel, PcaModel, SigmaRule,
};
use nlml::{FeatureSet, ModelFile};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Any finite `f64`, drawn uniformly over bit patterns: subnormals, huge
/// magnitudes and negative zero all occur.
pub fn any_finite(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let v = f64::from_bits(rng.random());
        if v.is_finite() {
            return v;
        }
    }
}

fn finite_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| any_finite(rng)).collect()
}

fn positive(rng: &mut ChaCha8Rng) -> f64 {
    any_finite(rng).abs().max(f64::MIN_POSITIVE)
}

fn activation(rng: &mut ChaCha8Rng) -> Activation {
    Activation::ALL[rng.random_range(0..Activation::ALL.len())]
}

pub fn random_model_file(rng: &mut ChaCha8Rng) -> ModelFile {
    let k = rng.random_range(0..4);
    let d_in = rng.random_range(1..6);
    let nets: Vec<Network> = (0..=k)
        .map(|_| {
            let act = activation(rng);
            let mut p_in = d_in;
            let layers = (0..rng.random_range(1..4))
                .map(|_| {
                    let p_out = rng.random_range(1..6);
                    let w = Matrix::from_row_major(p_out, p_in, finite_vec(rng, p_out * p_in));
                    p_in = p_out;
                    Layer::new(w, finite_vec(rng, p_out)).unwrap()
                })
                .collect();
            Network::new(layers, act).unwrap()
        })
        .collect();
    let clusters = ClusterModel::new(d_in, finite_vec(rng, k * d_in), positive(rng)).unwrap();
    let pca = rng.random_bool(0.5).then(|| {
        let d_raw = d_in + rng.random_range(0..4);
        let scale = rng.random_bool(0.5).then(|| finite_vec(rng, d_raw));
        PcaModel::from_parts(
            finite_vec(rng, d_raw),
            scale,
            Matrix::from_row_major(d_raw, d_in, finite_vec(rng, d_raw * d_in)),
            finite_vec(rng, d_in),
        )
        .unwrap()
    });
    let layer_dims = if rng.random_bool(0.5) {
        LayerDims::Shared((0..rng.random_range(1..4)).map(|_| rng.random_range(1..600)).collect())
    } else {
        LayerDims::PerNetwork((0..=k).map(|_| vec![rng.random_range(1..50); rng.random_range(1..3)]).collect())
    };
    let sigma_rule = match rng.random_range(0..3) {
        0 => SigmaRule::MeanDist,
        1 => SigmaRule::MedianDist,
        _ => SigmaRule::Fixed(any_finite(rng)),
    };
    let hyperparams = Hyperparams {
        k,
        beta: any_finite(rng),
        lambda: any_finite(rng),
        gamma: any_finite(rng),
        tau: any_finite(rng),
        margin: any_finite(rng),
        mu: any_finite(rng),
        pretrain_mu: any_finite(rng),
        pretrain_iters: rng.random::<u32>() as usize,
        max_iters: rng.random::<u64>() as usize,
        epsilon: any_finite(rng),
        seed: rng.random(),
        recluster_every: rng.random::<u16>() as usize,
        layer_dims,
        activation: activation(rng),
        sigma_rule,
        kmeans_iters: rng.random::<u32>() as usize,
    };
    ModelFile {
        seed: hyperparams.seed,
        model: NlmlModel::new(NetworkBank::new(nets).unwrap(), clusters, positive(rng), pca).unwrap(),
        hyperparams,
    }
}

pub fn random_feature_set(rng: &mut ChaCha8Rng, d: usize, n: usize) -> FeatureSet {
    let x = FeatureMatrix::from_columns(d, n, finite_vec(rng, d * n)).unwrap();
    let ids = (0..n).map(|_| rng.random()).collect();
    let views = (0..n).map(|_| rng.random()).collect();
    FeatureSet::new(x, IdentityLabels::new(ids, Some(views)).unwrap()).unwrap()
}

pub fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

pub struct Output {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn nlml(dir: &Path, args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_nlml"))
        .args(args)
        .current_dir(dir)
        .env("NLML_LOG", "error")
        .output()
        .expect("spawn nlml");
    Output {
        code: out.status.code().expect("exit code"),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

/// Small training run on the default synthetic data.
pub const SMALL_CONFIG: &str = r#"
seed = 11

[train]
k = 2
layer_dims = "8"
activation = "tanh"
iters = 25
pretrain_iters = 3
mu = 0.01
epsilon = 1e-9
pca_dim = 12
"#;

/// Writes `SMALL_CONFIG` and default synthetic features into `dir`.
pub fn small_setup(dir: &Path) {
    std::fs::write(dir.join("run.toml"), SMALL_CONFIG).unwrap();
    let o = nlml(dir, &["synth", "--out", "feat.bin"]);
    assert_eq!(o.code, 0, "{}", o.stderr);
}
