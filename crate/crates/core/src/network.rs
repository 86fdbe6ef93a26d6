//! Feedforward networks: affine layers with an elementwise activation, and
//! the bank of one global plus `K` local networks.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{sq_dist, Matrix};

const SCALED_TANH_GAIN: f64 = 1.7159;
const SCALED_TANH_SLOPE: f64 = 2.0 / 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
    Linear,
    /// `1.7159 · tanh(2z/3)`
    ScaledTanh,
}

impl Activation {
    pub const ALL: [Activation; 4] = [
        Activation::Tanh,
        Activation::Relu,
        Activation::Linear,
        Activation::ScaledTanh,
    ];

    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => libm::tanh(z),
            Activation::Relu => z.max(0.0),
            Activation::Linear => z,
            Activation::ScaledTanh => SCALED_TANH_GAIN * libm::tanh(SCALED_TANH_SLOPE * z),
        }
    }

    /// `φ′(z)`; the ReLU derivative at 0 is taken as 0.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = libm::tanh(z);
                1.0 - t * t
            }
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
            Activation::ScaledTanh => {
                let t = libm::tanh(SCALED_TANH_SLOPE * z);
                SCALED_TANH_GAIN * SCALED_TANH_SLOPE * (1.0 - t * t)
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Linear => "linear",
            Activation::ScaledTanh => "scaled_tanh",
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            Activation::Tanh => 0,
            Activation::Relu => 1,
            Activation::Linear => 2,
            Activation::ScaledTanh => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.tag() == tag)
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::invalid("activation", alloc::format!("unknown activation `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `p_out × p_in`
    pub w: Matrix,
    pub b: Vec<f64>,
}

impl Layer {
    pub fn new(w: Matrix, b: Vec<f64>) -> Result<Self> {
        check_dim(w.rows(), b.len())?;
        if !w.is_finite() || b.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("layer", "parameters must be finite"));
        }
        Ok(Self { w, b })
    }

    /// Rectangular identity weights, zero bias.
    pub fn identity(p_in: usize, p_out: usize) -> Self {
        Self {
            w: Matrix::eye(p_out, p_in),
            b: alloc::vec![0.0; p_out],
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.w.rows()
    }

    pub fn num_params(&self) -> usize {
        self.w.rows() * self.w.cols() + self.b.len()
    }
}

/// Pre-activations `z` and activations `h = φ(z)` of every layer for one input.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub input: Vec<f64>,
    pub pre: Vec<Vec<f64>>,
    pub post: Vec<Vec<f64>>,
}

impl ForwardTrace {
    /// Top-layer activation `f(x)`.
    pub fn embedding(&self) -> &[f64] {
        self.post.last().map(Vec::as_slice).unwrap_or(&self.input)
    }

    /// Input of layer `m` (0-based): `x` for the first layer, `h^{(m−1)}` otherwise.
    pub fn layer_input(&self, m: usize) -> &[f64] {
        if m == 0 {
            &self.input
        } else {
            &self.post[m - 1]
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
    activation: Activation,
}

impl Network {
    pub fn new(layers: Vec<Layer>, activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("a network needs at least one layer".into()));
        }
        for (m, pair) in layers.windows(2).enumerate() {
            if pair[1].in_dim() != pair[0].out_dim() {
                return Err(Error::Shape(alloc::format!(
                    "layer {} takes {} inputs but layer {} emits {}",
                    m + 2,
                    pair[1].in_dim(),
                    m + 1,
                    pair[0].out_dim()
                )));
            }
        }
        Ok(Self { layers, activation })
    }

    /// Identity-initialised network `input_dim → sizes[0] → … → sizes[M−1]`.
    pub fn identity(input_dim: usize, sizes: &[usize], activation: Activation) -> Result<Self> {
        if input_dim == 0 || sizes.contains(&0) {
            return Err(Error::Shape("layer sizes must be positive".into()));
        }
        let mut p_in = input_dim;
        let layers = sizes
            .iter()
            .map(|&p_out| {
                let l = Layer::identity(p_in, p_out);
                p_in = p_out;
                l
            })
            .collect();
        Self::new(layers, activation)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Layer::num_params).sum()
    }

    /// First `depth` layers, clamped to the network's own depth.
    pub fn truncated(&self, depth: usize) -> Network {
        let depth = depth.clamp(1, self.depth());
        Network {
            layers: self.layers[..depth].to_vec(),
            activation: self.activation,
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<ForwardTrace> {
        check_dim(self.in_dim(), x.len())?;
        Ok(self.forward_unchecked(x))
    }

    pub(crate) fn forward_unchecked(&self, x: &[f64]) -> ForwardTrace {
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let input = post.last().map(Vec::as_slice).unwrap_or(x);
            let mut z = layer.w.mul_vec(input);
            z.iter_mut().zip(&layer.b).for_each(|(z, b)| *z += b);
            let h = z.iter().map(|&v| self.activation.apply(v)).collect();
            pre.push(z);
            post.push(h);
        }
        ForwardTrace {
            input: x.to_vec(),
            pre,
            post,
        }
    }

    pub fn embed(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut trace = self.forward(x)?;
        Ok(trace.post.pop().expect("network has at least one layer"))
    }

    /// `‖f(x_i) − f(x_j)‖²`
    pub fn distance(&self, xi: &[f64], xj: &[f64]) -> Result<f64> {
        Ok(sq_dist(&self.embed(xi)?, &self.embed(xj)?))
    }
}

/// Network 0 is the global network; networks `1..=K` are the local ones.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkBank {
    networks: Vec<Network>,
}

impl NetworkBank {
    pub fn new(networks: Vec<Network>) -> Result<Self> {
        let Some(first) = networks.first() else {
            return Err(Error::Shape("a bank needs the global network".into()));
        };
        let d = first.in_dim();
        for net in &networks {
            check_dim(d, net.in_dim())?;
        }
        Ok(Self { networks })
    }

    /// `1 + k` identity-initialised networks with the given per-network sizes.
    pub fn identity(input_dim: usize, dims: &LayerDims, k: usize, activation: Activation) -> Result<Self> {
        let networks = (0..=k)
            .map(|n| Network::identity(input_dim, dims.for_network(n, k)?, activation))
            .collect::<Result<Vec<_>>>()?;
        Self::new(networks)
    }

    pub fn networks(&self) -> &[Network] {
        &self.networks
    }

    pub fn networks_mut(&mut self) -> &mut [Network] {
        &mut self.networks
    }

    pub fn global(&self) -> &Network {
        &self.networks[0]
    }

    pub fn locals(&self) -> &[Network] {
        &self.networks[1..]
    }

    pub fn len(&self) -> usize {
        self.networks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.networks.is_empty()
    }

    pub fn k_regions(&self) -> usize {
        self.networks.len() - 1
    }

    pub fn in_dim(&self) -> usize {
        self.networks[0].in_dim()
    }

    pub fn num_params(&self) -> usize {
        self.networks.iter().map(Network::num_params).sum()
    }

    pub fn truncated(&self, depth: usize) -> NetworkBank {
        NetworkBank {
            networks: self.networks.iter().map(|n| n.truncated(depth)).collect(),
        }
    }

    pub fn max_depth(&self) -> usize {
        self.networks.iter().map(Network::depth).max().unwrap_or(0)
    }

    /// Sum of squared Frobenius norms of every weight matrix and bias.
    pub fn squared_norm(&self) -> f64 {
        self.networks
            .iter()
            .flat_map(|n| n.layers())
            .map(|l| l.w.frobenius_sq() + crate::linalg::dot(&l.b, &l.b))
            .sum()
    }
}

/// Hidden/output layer sizes, excluding the input dimension.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerDims {
    /// Every network uses the same sizes.
    Shared(Vec<usize>),
    /// One size list per network, global first.
    PerNetwork(Vec<Vec<usize>>),
}

impl Default for LayerDims {
    fn default() -> Self {
        LayerDims::Shared(alloc::vec![500, 400, 300])
    }
}

impl LayerDims {
    pub fn for_network(&self, n: usize, k: usize) -> Result<&[usize]> {
        match self {
            LayerDims::Shared(sizes) => Ok(sizes),
            LayerDims::PerNetwork(all) => {
                if all.len() != k + 1 {
                    return Err(Error::Shape(alloc::format!(
                        "{} per-network size lists given for {} networks",
                        all.len(),
                        k + 1
                    )));
                }
                Ok(&all[n])
            }
        }
    }

    /// `500,400,300` or `500,400,300;20,10` (one list per network, separated by `;`).
    pub fn parse(s: &str) -> Result<Self> {
        let lists = s
            .split(';')
            .map(|part| {
                part.split(',')
                    .map(|v| {
                        v.trim()
                            .parse::<usize>()
                            .ok()
                            .filter(|&v| v > 0)
                            .ok_or_else(|| Error::invalid("layer_dims", alloc::format!("bad size `{}`", v.trim())))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        match lists.len() {
            0 => Err(Error::invalid("layer_dims", "empty")),
            1 => Ok(LayerDims::Shared(lists.into_iter().next().unwrap())),
            _ => Ok(LayerDims::PerNetwork(lists)),
        }
    }

    pub fn to_spec_string(&self) -> String {
        let join = |v: &[usize]| v.iter().map(|x| alloc::format!("{x}")).collect::<Vec<_>>().join(",");
        match self {
            LayerDims::Shared(v) => join(v),
            LayerDims::PerNetwork(all) => all.iter().map(|v| join(v)).collect::<Vec<_>>().join(";"),
        }
    }
}
