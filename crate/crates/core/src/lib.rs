//! Nonlinear local metric learning.
//!
//! One global and `K` local feedforward networks each embed a feature vector;
//! the learned dissimilarity between two samples is the β-weighted global
//! embedding distance plus the local embedding distances weighted by the
//! samples' RBF similarity to each of the `K` k-means regions. Training
//! minimises a smoothed large-margin loss over labelled pairs with full-batch
//! gradient descent.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, the command line
//! and a thread-pool executor live in the `nlml` crate.

#![no_std]

extern crate alloc;

pub mod clustering;
pub mod dataspace;
pub mod error;
pub mod evaluation;
pub mod exec;
pub mod linalg;
pub mod metric;
pub mod network;
pub mod preprocess;
pub mod rng;
pub mod training;

pub use clustering::{ClusterModel, PairWeights, SigmaRule};
pub use dataspace::{FeatureMatrix, IdentityLabels, Pair, PairMode, PairSet, SplitSpec};
pub use error::{Error, Result};
pub use evaluation::{CmcCurve, CmcSummary, ProtocolOptions, SynthSpec};
pub use exec::{Clock, Executor, Sequential};
pub use linalg::Matrix;
pub use metric::NlmlModel;
pub use network::{Activation, ForwardTrace, Layer, Network, NetworkBank};
pub use preprocess::PcaModel;
pub use training::{GradientSet, Hyperparams, LayerDims, StopReason, TrainReport, Trainer, Variant};
