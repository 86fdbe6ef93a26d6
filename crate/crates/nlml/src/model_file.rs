//! Self-describing binary container for a trained model.
//!
//! Layout, all little-endian: `NLMLMODL`, `u32` version, hyperparameters,
//! `u64` training seed, `f64` β, optional PCA, clusters, network bank.
//! Counts are `u64`, vectors carry a length prefix, matrices are row-major.

use std::path::Path;

use nlml_core::{
    Activation, ClusterModel, Hyperparams, Layer, LayerDims, Matrix, Network, NetworkBank, NlmlModel, PcaModel,
    SigmaRule,
};

use crate::atomic::write_bytes;
use crate::codec::{ByteReader, ByteWriter};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"NLMLMODL";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub hyperparams: Hyperparams,
    pub seed: u64,
    pub model: NlmlModel,
}

impl ModelFile {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::default();
        w.bytes(MAGIC);
        w.u32(VERSION);
        write_hyperparams(&mut w, &self.hyperparams);
        w.u64(self.seed);
        let m = &self.model;
        w.f64(m.beta());
        match m.pca() {
            None => w.u8(0),
            Some(p) => {
                w.u8(1);
                write_pca(&mut w, p);
            }
        }
        write_clusters(&mut w, m.clusters());
        write_bank(&mut w, m.bank());
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        if r.take(8)? != MAGIC {
            return Err(Error::Format("not a model file: bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported model file version {version}")));
        }
        let hyperparams = read_hyperparams(&mut r)?;
        let seed = r.u64()?;
        let beta = r.f64()?;
        let pca = match r.u8()? {
            0 => None,
            1 => Some(read_pca(&mut r)?),
            t => return Err(bad_tag("PCA presence", t)),
        };
        let clusters = read_clusters(&mut r)?;
        let bank = read_bank(&mut r)?;
        r.finish()?;
        let model = NlmlModel::new(bank, clusters, beta, pca)?;
        Ok(Self {
            hyperparams,
            seed,
            model,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_bytes(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| e.in_file(path))
    }
}

fn bad_tag(what: &str, tag: u8) -> Error {
    Error::Format(format!("unknown {what} tag {tag}"))
}

fn write_hyperparams(w: &mut ByteWriter, hp: &Hyperparams) {
    w.usize(hp.k);
    for v in [hp.beta, hp.lambda, hp.gamma, hp.tau, hp.margin, hp.mu, hp.pretrain_mu] {
        w.f64(v);
    }
    w.usize(hp.pretrain_iters);
    w.usize(hp.max_iters);
    w.f64(hp.epsilon);
    w.u64(hp.seed);
    w.usize(hp.recluster_every);
    match &hp.layer_dims {
        LayerDims::Shared(v) => {
            w.u8(0);
            w.usize_vec(v);
        }
        LayerDims::PerNetwork(all) => {
            w.u8(1);
            w.usize(all.len());
            for v in all {
                w.usize_vec(v);
            }
        }
    }
    w.u8(hp.activation.tag());
    let (tag, value) = match hp.sigma_rule {
        SigmaRule::MeanDist => (0, 0.0),
        SigmaRule::MedianDist => (1, 0.0),
        SigmaRule::Fixed(v) => (2, v),
    };
    w.u8(tag);
    w.f64(value);
    w.usize(hp.kmeans_iters);
}

fn read_activation(r: &mut ByteReader) -> Result<Activation> {
    let t = r.u8()?;
    Activation::from_tag(t).ok_or_else(|| bad_tag("activation", t))
}

fn read_hyperparams(r: &mut ByteReader) -> Result<Hyperparams> {
    let k = r.usize()?;
    let mut f = [0.0; 7];
    for v in &mut f {
        *v = r.f64()?;
    }
    let [beta, lambda, gamma, tau, margin, mu, pretrain_mu] = f;
    let pretrain_iters = r.usize()?;
    let max_iters = r.usize()?;
    let epsilon = r.f64()?;
    let seed = r.u64()?;
    let recluster_every = r.usize()?;
    let layer_dims = match r.u8()? {
        0 => LayerDims::Shared(r.usize_vec()?),
        1 => {
            let n = r.count(8)?;
            LayerDims::PerNetwork((0..n).map(|_| r.usize_vec()).collect::<Result<_>>()?)
        }
        t => return Err(bad_tag("layer size", t)),
    };
    let activation = read_activation(r)?;
    let (tag, value) = (r.u8()?, r.f64()?);
    let sigma_rule = match tag {
        0 => SigmaRule::MeanDist,
        1 => SigmaRule::MedianDist,
        2 => SigmaRule::Fixed(value),
        t => return Err(bad_tag("sigma rule", t)),
    };
    let kmeans_iters = r.usize()?;
    Ok(Hyperparams {
        k,
        beta,
        lambda,
        gamma,
        tau,
        margin,
        mu,
        pretrain_mu,
        pretrain_iters,
        max_iters,
        epsilon,
        seed,
        recluster_every,
        layer_dims,
        activation,
        sigma_rule,
        kmeans_iters,
    })
}

fn write_matrix(w: &mut ByteWriter, m: &Matrix) {
    w.usize(m.rows());
    w.usize(m.cols());
    w.f64s(m.as_slice());
}

fn read_matrix(r: &mut ByteReader) -> Result<Matrix> {
    let rows = r.usize()?;
    let at = r.offset();
    let cols = r.usize()?;
    let n = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::Format(format!("matrix shape at offset {at} overflows")))?;
    Ok(Matrix::from_row_major(rows, cols, r.f64s(n)?))
}

fn write_pca(w: &mut ByteWriter, p: &PcaModel) {
    w.f64_vec(p.mean());
    match p.scale() {
        None => w.u8(0),
        Some(s) => {
            w.u8(1);
            w.f64_vec(s);
        }
    }
    write_matrix(w, p.basis());
    w.f64_vec(p.explained_variance());
}

fn read_pca(r: &mut ByteReader) -> Result<PcaModel> {
    let mean = r.f64_vec()?;
    let scale = match r.u8()? {
        0 => None,
        1 => Some(r.f64_vec()?),
        t => return Err(bad_tag("PCA scale presence", t)),
    };
    let basis = read_matrix(r)?;
    let var = r.f64_vec()?;
    Ok(PcaModel::from_parts(mean, scale, basis, var)?)
}

fn write_clusters(w: &mut ByteWriter, c: &ClusterModel) {
    w.usize(c.dim());
    w.usize(c.k_regions());
    w.f64(c.sigma());
    w.f64s(c.centers());
}

fn read_clusters(r: &mut ByteReader) -> Result<ClusterModel> {
    let dim = r.usize()?;
    let k = r.usize()?;
    let sigma = r.f64()?;
    let n = dim
        .checked_mul(k)
        .ok_or_else(|| Error::Format("cluster shape overflows".into()))?;
    Ok(ClusterModel::new(dim, r.f64s(n)?, sigma)?)
}

fn write_bank(w: &mut ByteWriter, bank: &NetworkBank) {
    w.usize(bank.len());
    for net in bank.networks() {
        w.u8(net.activation().tag());
        w.usize(net.depth());
        for layer in net.layers() {
            write_matrix(w, &layer.w);
            w.f64_vec(&layer.b);
        }
    }
}

fn read_bank(r: &mut ByteReader) -> Result<NetworkBank> {
    let n = r.count(9)?;
    let mut nets = Vec::with_capacity(n);
    for _ in 0..n {
        let act = read_activation(r)?;
        let depth = r.count(24)?;
        let layers = (0..depth)
            .map(|_| {
                let w = read_matrix(r)?;
                let b = r.f64_vec()?;
                Ok(Layer::new(w, b)?)
            })
            .collect::<Result<Vec<_>>>()?;
        nets.push(Network::new(layers, act)?);
    }
    Ok(NetworkBank::new(nets)?)
}
