//! Run configuration: a TOML file whose values are overridden by command-line flags.
//!
//! ```toml
//! seed = 7
//!
//! [train]
//! k = 2
//! layer_dims = "20"          # or "20,10;8" for one list per network
//! activation = "scaled_tanh"
//! sigma_rule = "mean"        # mean | median | <fixed σ>
//! pair_mode = "all"          # all | balanced:<ratio>
//! pca_dim = 20
//!
//! [synth]
//! regions = 2
//!
//! [eval]
//! method = "nlml"            # nlml | nlml1 | nlml2 | euclidean
//! repeats = 10
//! ```
//!
//! Every absent key keeps the library default.

use std::path::Path;

use nlml_core::evaluation::Method;
use nlml_core::{Activation, Hyperparams, LayerDims, PairMode, ProtocolOptions, SigmaRule, SynthSpec};
use serde::Deserialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub synth: SynthSection,
    #[serde(default)]
    pub eval: EvalSection,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub k: Option<usize>,
    pub beta: Option<f64>,
    pub lambda: Option<f64>,
    pub gamma: Option<f64>,
    pub tau: Option<f64>,
    pub c: Option<f64>,
    pub mu: Option<f64>,
    pub pretrain_mu: Option<f64>,
    pub pretrain_iters: Option<usize>,
    pub iters: Option<usize>,
    pub epsilon: Option<f64>,
    pub recluster_every: Option<usize>,
    pub layer_dims: Option<String>,
    pub activation: Option<String>,
    pub sigma_rule: Option<String>,
    pub kmeans_iters: Option<usize>,
    pub pair_mode: Option<String>,
    pub pca_dim: Option<usize>,
    pub standardize: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    pub regions: Option<usize>,
    pub identities_per_region: Option<usize>,
    pub samples_per_identity: Option<usize>,
    pub dim: Option<usize>,
    pub region_separation: Option<f64>,
    pub identity_spread: Option<f64>,
    pub noise: Option<f64>,
    pub nuisance_gain: Option<f64>,
    pub distortion: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub method: Option<String>,
    pub train_identities: Option<usize>,
    pub repeats: Option<usize>,
    pub multi_shot: Option<bool>,
}

/// Command-line values; each one present replaces the config value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub k: Option<usize>,
    pub beta: Option<f64>,
    pub mu: Option<f64>,
    pub lambda: Option<f64>,
    pub tau: Option<f64>,
    pub c: Option<f64>,
    pub gamma: Option<f64>,
    pub epsilon: Option<f64>,
    pub iters: Option<usize>,
    pub recluster_every: Option<usize>,
    pub activation: Option<String>,
    pub layer_dims: Option<String>,
}

/// Training-time data handling that sits outside [`Hyperparams`].
#[derive(Debug, Clone, PartialEq)]
pub struct DataOptions {
    pub pair_mode: PairMode,
    pub pca_dim: Option<usize>,
    pub standardize: bool,
}

impl RunConfig {
    /// Parses and checks every textual field, whichever command will use it.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let t = &cfg.train;
        if let Some(s) = &t.layer_dims {
            LayerDims::parse(s)?;
        }
        if let Some(s) = &t.activation {
            s.parse::<Activation>()?;
        }
        if let Some(s) = &t.sigma_rule {
            parse_sigma_rule(s)?;
        }
        cfg.data_options()?;
        if let Some(s) = &cfg.eval.method {
            parse_method(s)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| e.in_file(path))
    }

    pub fn seed(&self, o: &Overrides) -> u64 {
        o.seed.or(self.seed).unwrap_or(0)
    }

    /// Defaults, then the `[train]` table, then flags. Validated.
    pub fn hyperparams(&self, o: &Overrides) -> Result<Hyperparams> {
        let t = &self.train;
        let mut hp = Hyperparams::default();
        let pick = |flag: Option<f64>, file: Option<f64>, slot: &mut f64| {
            if let Some(v) = flag.or(file) {
                *slot = v;
            }
        };
        pick(o.beta, t.beta, &mut hp.beta);
        pick(o.lambda, t.lambda, &mut hp.lambda);
        pick(o.gamma, t.gamma, &mut hp.gamma);
        pick(o.tau, t.tau, &mut hp.tau);
        pick(o.c, t.c, &mut hp.margin);
        pick(o.mu, t.mu, &mut hp.mu);
        pick(o.epsilon, t.epsilon, &mut hp.epsilon);
        // pretraining follows μ unless given separately
        hp.pretrain_mu = t.pretrain_mu.unwrap_or(hp.mu);
        hp.k = o.k.or(t.k).unwrap_or(hp.k);
        hp.max_iters = o.iters.or(t.iters).unwrap_or(hp.max_iters);
        hp.recluster_every = o.recluster_every.or(t.recluster_every).unwrap_or(hp.recluster_every);
        hp.pretrain_iters = t.pretrain_iters.unwrap_or(hp.pretrain_iters);
        hp.kmeans_iters = t.kmeans_iters.unwrap_or(hp.kmeans_iters);
        hp.seed = self.seed(o);
        if let Some(s) = o.layer_dims.as_deref().or(t.layer_dims.as_deref()) {
            hp.layer_dims = LayerDims::parse(s)?;
        }
        if let Some(s) = o.activation.as_deref().or(t.activation.as_deref()) {
            hp.activation = s.parse::<Activation>()?;
        }
        if let Some(s) = &t.sigma_rule {
            hp.sigma_rule = parse_sigma_rule(s)?;
        }
        hp.validate()?;
        Ok(hp)
    }

    pub fn data_options(&self) -> Result<DataOptions> {
        let t = &self.train;
        let pair_mode = match t.pair_mode.as_deref() {
            None => PairMode::All,
            Some(s) => parse_pair_mode(s)?,
        };
        if t.pca_dim == Some(0) {
            return Err(nlml_core::Error::InvalidParam {
                name: "pca_dim",
                reason: "must be at least 1".into(),
            }
            .into());
        }
        Ok(DataOptions {
            pair_mode,
            pca_dim: t.pca_dim,
            standardize: t.standardize.unwrap_or(false),
        })
    }

    /// The `[synth]` table over [`SynthSpec::default`]; the root seed drives generation.
    pub fn synth_spec(&self, o: &Overrides) -> Result<SynthSpec> {
        let s = &self.synth;
        let d = SynthSpec::default();
        let spec = SynthSpec {
            regions: s.regions.unwrap_or(d.regions),
            identities_per_region: s.identities_per_region.unwrap_or(d.identities_per_region),
            samples_per_identity: s.samples_per_identity.unwrap_or(d.samples_per_identity),
            dim: s.dim.unwrap_or(d.dim),
            seed: o.seed.or(self.seed).unwrap_or(d.seed),
            region_separation: s.region_separation.unwrap_or(d.region_separation),
            identity_spread: s.identity_spread.unwrap_or(d.identity_spread),
            noise: s.noise.unwrap_or(d.noise),
            nuisance_gain: s.nuisance_gain.unwrap_or(d.nuisance_gain),
            distortion: s.distortion.unwrap_or(d.distortion),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Protocol settings; `identities` is the number of distinct identities in the data.
    pub fn protocol(&self, o: &Overrides, identities: usize) -> Result<ProtocolOptions> {
        let e = &self.eval;
        let data = self.data_options()?;
        let method = e.method.as_deref().map(parse_method).transpose()?.unwrap_or_default();
        Ok(ProtocolOptions {
            train_identities: e.train_identities.unwrap_or(identities / 2),
            repeats: e.repeats.unwrap_or(10),
            seed: self.seed(o),
            pca_dim: data.pca_dim,
            standardize: data.standardize,
            pair_mode: data.pair_mode,
            multi_shot: e.multi_shot.unwrap_or(false),
            method,
        })
    }
}

pub fn parse_method(s: &str) -> Result<Method> {
    Method::parse(s).ok_or_else(|| Error::Config(format!("unknown method `{s}` (nlml, nlml1, nlml2, euclidean)")))
}

/// `mean`, `median`, or a fixed positive σ.
pub fn parse_sigma_rule(s: &str) -> Result<SigmaRule> {
    match s.trim() {
        "mean" => Ok(SigmaRule::MeanDist),
        "median" => Ok(SigmaRule::MedianDist),
        v => v
            .parse::<f64>()
            .map(SigmaRule::Fixed)
            .map_err(|_| Error::Config(format!("sigma_rule must be mean, median or a number, got `{s}`"))),
    }
}

/// `all` or `balanced:<ratio>`.
pub fn parse_pair_mode(s: &str) -> Result<PairMode> {
    let bad = || Error::Config(format!("pair_mode must be `all` or `balanced:<ratio>`, got `{s}`"));
    match s.trim().split_once(':') {
        None if s.trim() == "all" => Ok(PairMode::All),
        Some(("balanced", r)) => match r.trim().parse::<f64>() {
            Ok(v) if v.is_finite() && v > 0.0 => Ok(PairMode::Balanced(v)),
            _ => Err(bad()),
        },
        _ => Err(bad()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_win_over_file_and_file_over_defaults() {
        let cfg = RunConfig::parse("seed = 3\n[train]\nk = 2\nmu = 0.5\nlayer_dims = \"4,2\"\n").unwrap();
        let hp = cfg.hyperparams(&Overrides::default()).unwrap();
        assert_eq!((hp.k, hp.mu, hp.pretrain_mu, hp.seed), (2, 0.5, 0.5, 3));
        assert_eq!(hp.layer_dims, LayerDims::Shared(vec![4, 2]));
        assert_eq!(hp.lambda, Hyperparams::default().lambda);
        let o = Overrides {
            k: Some(0),
            seed: Some(9),
            activation: Some("relu".into()),
            ..Default::default()
        };
        let hp = cfg.hyperparams(&o).unwrap();
        assert_eq!((hp.k, hp.seed, hp.activation), (0, 9, Activation::Relu));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(RunConfig::parse("[train]\nlamda = 1\n"), Err(Error::Config(m)) if m.contains("lamda")));
        assert!(RunConfig::parse("[nope]\n").is_err());
        assert!(RunConfig::parse("seed = \"x\"").is_err());
        assert!(RunConfig::parse("[train]\nactivation = \"swish\"\n").is_err());
        assert!(RunConfig::parse("[eval]\nmethod = \"knn\"\n").is_err());
    }

    #[test]
    fn invalid_lambda_names_the_field() {
        let o = Overrides {
            lambda: Some(-1.0),
            ..Default::default()
        };
        let err = RunConfig::default().hyperparams(&o).unwrap_err();
        assert!(err.to_string().contains("lambda"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn small_parsers() {
        assert_eq!(parse_sigma_rule("median").unwrap(), SigmaRule::MedianDist);
        assert_eq!(parse_sigma_rule("0.25").unwrap(), SigmaRule::Fixed(0.25));
        assert!(parse_sigma_rule("wide").is_err());
        assert_eq!(parse_pair_mode("all").unwrap(), PairMode::All);
        assert_eq!(parse_pair_mode("balanced:2").unwrap(), PairMode::Balanced(2.0));
        assert!(parse_pair_mode("balanced:-1").is_err());
        assert!(parse_pair_mode("some").is_err());
    }

    #[test]
    fn protocol_defaults_split_identities_in_half() {
        let cfg = RunConfig::parse("[eval]\nmethod = \"euclidean\"\nrepeats = 3\n").unwrap();
        let p = cfg.protocol(&Overrides::default(), 40).unwrap();
        assert_eq!((p.train_identities, p.repeats, p.method), (20, 3, Method::Euclidean));
    }
}
