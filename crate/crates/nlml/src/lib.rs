//! Files, persistence and the command line around [`nlml_core`].
//!
//! * [`features`]: CSV and binary feature files.
//! * [`model_file`]: the trained-model container.
//! * [`config`]: TOML run configuration with flag overrides.
//! * [`exec`]: rayon-backed executor and wall clock.
//! * [`cli`]: the `nlml` binary.

pub mod atomic;
pub mod cli;
mod codec;
pub mod config;
pub mod error;
pub mod exec;
pub mod features;
pub mod model_file;

pub use error::{Error, Result};
pub use exec::{RayonExecutor, WallClock};
pub use features::{load_features, save_features, FeatureFormat, FeatureSet};
pub use model_file::ModelFile;

pub use nlml_core;
