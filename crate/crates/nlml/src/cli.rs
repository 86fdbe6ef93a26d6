//! `nlml` command line.
//!
//! Exit status: 0 on success, 1 when a well-formed run fails (divergence, a
//! gradient check above threshold), 2 for invalid arguments, configuration,
//! input files or I/O. Everything is read and validated before any output is
//! written, and outputs are replaced atomically.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;
use nlml_core::dataspace::make_pairs;
use nlml_core::evaluation::{aggregate_min_by_identity, cmc, probe_gallery, run_protocol, synth_generate, CmcCurve};
use nlml_core::preprocess::{fit_pca, fit_pca_standardized};
use nlml_core::training::{gradcheck, GradCheckConfig};
use nlml_core::{CmcSummary, LayerDims, Matrix, Trainer};

use crate::atomic::write_atomic;
use crate::config::{Overrides, RunConfig};
use crate::error::{Error, Result};
use crate::exec::{RayonExecutor, WallClock};
use crate::features::{load_features, save_features, FeatureFormat, FeatureSet};
use crate::model_file::ModelFile;

/// Largest entrywise relative error `gradcheck` accepts.
pub const GRADCHECK_THRESHOLD: f64 = 1e-5;

/// Ranks echoed in the summary line.
pub const SUMMARY_RANKS: [usize; 4] = [1, 5, 10, 20];

#[derive(Debug, Parser)]
#[command(name = "nlml", version, about = "Nonlinear local metric learning for re-identification")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model on a feature file; writes the model and a per-iteration report.
    Train,
    /// CMC of a trained model on a feature file, or the repeated-split protocol when no model is given.
    Eval,
    /// Compare analytic and finite-difference gradients on a small random problem.
    Gradcheck(GradcheckArgs),
    /// Generate the synthetic multi-region benchmark.
    Synth,
    /// CMC from a precomputed probe × gallery distance CSV.
    Cmc(CmcArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Feature file (.csv or .bin).
    #[arg(long, global = true)]
    pub features: Option<PathBuf>,
    #[arg(long, global = true)]
    pub model: Option<PathBuf>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Number of local regions.
    #[arg(long, global = true)]
    pub k: Option<usize>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub beta: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub mu: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub lambda: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub tau: Option<f64>,
    /// Margin half-width.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub c: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub gamma: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub epsilon: Option<f64>,
    /// Maximum gradient-descent iterations.
    #[arg(long, global = true)]
    pub iters: Option<usize>,
    #[arg(long, global = true)]
    pub recluster_every: Option<usize>,
    /// tanh, relu, linear or scaled_tanh.
    #[arg(long, global = true)]
    pub activation: Option<String>,
    /// Layer sizes, e.g. `500,400,300`.
    #[arg(long, global = true)]
    pub layer_dims: Option<String>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long)]
    pub input_dim: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub pairs: Option<usize>,
    /// Central-difference step.
    #[arg(long)]
    pub step: Option<f64>,
    /// Perturb one analytic gradient entry (negative control).
    #[arg(long, hide = true)]
    pub corrupt: bool,
}

#[derive(Debug, Args)]
pub struct CmcArgs {
    /// Header `,gallery_id...`, then one row `probe_id,d...` per probe.
    #[arg(long)]
    pub distances: PathBuf,
}

impl CommonArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            k: self.k,
            beta: self.beta,
            mu: self.mu,
            lambda: self.lambda,
            tau: self.tau,
            c: self.c,
            gamma: self.gamma,
            epsilon: self.epsilon,
            iters: self.iters,
            recluster_every: self.recluster_every,
            activation: self.activation.clone(),
            layer_dims: self.layer_dims.clone(),
        }
    }

    fn config(&self) -> Result<RunConfig> {
        self.config.as_deref().map(RunConfig::load).unwrap_or_else(|| Ok(RunConfig::default()))
    }

    fn features(&self) -> Result<FeatureSet> {
        let path = required(&self.features, "--features")?;
        load_features(path, FeatureFormat::from_path(path)?)
    }
}

fn required<'a>(v: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    v.as_deref().ok_or_else(|| Error::Config(format!("{flag} is required")))
}

/// Runs the command line and returns the process exit status.
pub fn main() -> i32 {
    run_from(std::env::args_os())
}

pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    init_logging();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("NLML_LOG", "warn");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

pub fn run(cli: &Cli) -> Result<i32> {
    let c = &cli.common;
    match &cli.command {
        Command::Train => cmd_train(c),
        Command::Eval => cmd_eval(c),
        Command::Gradcheck(g) => cmd_gradcheck(c, g),
        Command::Synth => cmd_synth(c),
        Command::Cmc(a) => cmd_cmc(c, a),
    }
}

fn report_path(model: &Path) -> PathBuf {
    let mut name = model.file_stem().unwrap_or_default().to_os_string();
    name.push(".report.csv");
    model.with_file_name(name)
}

fn cmd_train(c: &CommonArgs) -> Result<i32> {
    let cfg = c.config()?;
    let o = c.overrides();
    let hp = cfg.hyperparams(&o)?;
    let data = cfg.data_options()?;
    let model_path = required(&c.model, "--model")?;
    let report_path = c.out.clone().unwrap_or_else(|| report_path(model_path));
    let exec = RayonExecutor::new(c.threads)?;
    let set = c.features()?;

    let pca = match data.pca_dim {
        Some(d) if data.standardize => Some(fit_pca_standardized(&set.x, d)?),
        Some(d) => Some(fit_pca(&set.x, d)?),
        None => None,
    };
    let x = match &pca {
        Some(p) => p.transform(&set.x)?,
        None => set.x.clone(),
    };
    let pairs = make_pairs(&set.labels, data.pair_mode, hp.seed)?;
    info!(
        "training on {} samples of dimension {}: {} positive and {} negative pairs, {} threads",
        x.count(),
        x.dim(),
        pairs.positives(),
        pairs.negatives(),
        exec.threads()
    );
    let clock = WallClock::start();
    let (model, report) = Trainer::new(&hp).with_executor(&exec).with_clock(&clock).train(&x, &pairs)?;
    for s in &report.pretrain {
        info!("pretraining depth {}: J {} -> {}", s.depth, s.before.j, s.after.j);
    }
    let file = ModelFile {
        hyperparams: hp.clone(),
        seed: hp.seed,
        model: model.with_pca(pca)?,
    };
    file.save(model_path)?;
    write_atomic(&report_path, |w| {
        let io = |e| Error::io(&report_path, e);
        writeln!(w, "iteration,J,J1,J2,wall_ms").map_err(io)?;
        for r in &report.iterations {
            writeln!(w, "{},{},{},{},{}", r.t, r.j, r.j1, r.j2, r.wall_ms).map_err(io)?;
        }
        Ok(())
    })?;
    println!(
        "J={} iterations={} stop={}",
        report.final_objective(),
        report.iterations.len(),
        report.stop.as_str()
    );
    Ok(0)
}

fn cmd_eval(c: &CommonArgs) -> Result<i32> {
    let cfg = c.config()?;
    let o = c.overrides();
    let exec = RayonExecutor::new(c.threads)?;
    let summary = match &c.model {
        Some(path) => {
            let multi_shot = cfg.eval.multi_shot.unwrap_or(false);
            let file = ModelFile::load(path)?;
            let set = c.features()?;
            let model = &file.model;
            if set.x.dim() != model.raw_dim() {
                return Err(nlml_core::Error::DimensionMismatch {
                    expected: model.raw_dim(),
                    got: set.x.dim(),
                }
                .into());
            }
            let all: Vec<usize> = (0..set.x.count()).collect();
            let split = probe_gallery(&set.labels, &all, multi_shot);
            if split.probes.is_empty() {
                return Err(nlml_core::Error::Empty("probe set: no identity has two samples").into());
            }
            let x = model.project(&set.x)?;
            let dist = model.distance_matrix_with(&x.select(&split.probes)?, &x.select(&split.gallery)?, &exec)?;
            let ids = |idx: &[usize]| idx.iter().map(|&i| set.labels.id(i)).collect::<Vec<_>>();
            let (probe_ids, gallery_ids) = (ids(&split.probes), ids(&split.gallery));
            let curve = if multi_shot {
                let (agg, g) = aggregate_min_by_identity(&dist, &gallery_ids)?;
                cmc(&agg, &probe_ids, &g)?
            } else {
                cmc(&dist, &probe_ids, &gallery_ids)?
            };
            CmcSummary::from_curves(&[curve])?
        }
        None => {
            let hp = cfg.hyperparams(&o)?;
            let set = c.features()?;
            let opts = cfg.protocol(&o, set.labels.num_identities())?;
            info!("{} protocol, {} repeats", opts.method.name(), opts.repeats);
            run_protocol(&set.x, &set.labels, &hp, &opts, &exec)?.summary
        }
    };
    emit_cmc(c.out.as_deref(), &summary)?;
    Ok(0)
}

/// Writes `rank,mean_rate,std_rate` to `out` (stdout when absent), then the summary line.
fn emit_cmc(out: Option<&Path>, s: &CmcSummary) -> Result<()> {
    let write = |w: &mut dyn Write| -> std::io::Result<()> {
        writeln!(w, "rank,mean_rate,std_rate")?;
        for (r, (m, sd)) in s.mean.iter().zip(&s.std).enumerate() {
            writeln!(w, "{},{m},{sd}", r + 1)?;
        }
        Ok(())
    };
    match out {
        Some(path) => write_atomic(path, |w| write(w).map_err(|e| Error::io(path, e)))?,
        None => write(&mut std::io::stdout().lock()).map_err(|e| Error::io("<stdout>", e))?,
    }
    println!("{}", summary_line(s));
    Ok(())
}

pub fn summary_line(s: &CmcSummary) -> String {
    SUMMARY_RANKS
        .iter()
        .map(|&r| format!("rank{r}={}", s.rank(r)))
        .collect::<Vec<_>>()
        .join(" ")
}

fn cmd_gradcheck(c: &CommonArgs, g: &GradcheckArgs) -> Result<i32> {
    let cfg = c.config()?;
    let o = c.overrides();
    let base = GradCheckConfig::default();
    let layer_dims = match o.layer_dims.as_deref().or(cfg.train.layer_dims.as_deref()) {
        None => base.layer_dims.clone(),
        Some(s) => match LayerDims::parse(s)? {
            LayerDims::Shared(v) => v,
            LayerDims::PerNetwork(_) => {
                return Err(Error::Config("gradcheck takes one shared list of layer sizes".into()))
            }
        },
    };
    // the loss settings come from the usual chain; the shape is gradcheck's own
    let shape = Overrides {
        k: Some(o.k.or(cfg.train.k).unwrap_or(base.k)),
        layer_dims: Some(LayerDims::Shared(layer_dims.clone()).to_spec_string()),
        ..o.clone()
    };
    let hp = cfg.hyperparams(&shape)?;
    let config = GradCheckConfig {
        input_dim: g.input_dim.unwrap_or(base.input_dim),
        k: hp.k,
        layer_dims,
        activation: hp.activation,
        samples: g.samples.unwrap_or(base.samples),
        pairs: g.pairs.unwrap_or(base.pairs),
        step: g.step.unwrap_or(base.step),
        seed: hp.seed,
        corrupt: g.corrupt,
        hp,
    };
    let r = gradcheck(&config)?;
    println!(
        "max_rel={} mean_rel={} max_abs={} vector_rel={} params={}",
        r.max_rel, r.mean_rel, r.max_abs, r.vector_rel, r.params
    );
    if r.max_rel < GRADCHECK_THRESHOLD {
        Ok(0)
    } else {
        eprintln!("gradient check failed: max relative error {} >= {GRADCHECK_THRESHOLD}", r.max_rel);
        Ok(1)
    }
}

fn cmd_synth(c: &CommonArgs) -> Result<i32> {
    let cfg = c.config()?;
    let spec = cfg.synth_spec(&c.overrides())?;
    let out = required(&c.out, "--out")?;
    let format = FeatureFormat::from_path(out)?;
    let (x, labels) = synth_generate(&spec)?;
    let set = FeatureSet::new(x, labels)?;
    save_features(out, format, &set)?;
    info!("wrote {} samples of dimension {} to {}", set.x.count(), set.x.dim(), out.display());
    Ok(0)
}

fn cmd_cmc(c: &CommonArgs, a: &CmcArgs) -> Result<i32> {
    c.config()?;
    let (dist, probes, gallery) = read_distance_csv(&a.distances)?;
    let curve: CmcCurve = cmc(&dist, &probes, &gallery)?;
    emit_cmc(c.out.as_deref(), &CmcSummary::from_curves(&[curve])?)?;
    Ok(0)
}

/// Reads a probe × gallery distance table.
pub fn read_distance_csv(path: &Path) -> Result<(Matrix, Vec<i64>, Vec<i64>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_distance_csv(&bytes).map_err(|e| e.in_file(path))
}

fn parse_distance_csv(bytes: &[u8]) -> Result<(Matrix, Vec<i64>, Vec<i64>)> {
    let parse_err = |line: u64, column: usize, msg: String| Error::Parse { line, column, msg };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let mut gallery = Vec::new();
    let mut probes = Vec::new();
    let mut values = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| parse_err(e.position().map(|p| p.line()).unwrap_or(0), 0, e.to_string()))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(n as u64 + 1);
        if n == 0 {
            for (col, s) in rec.iter().enumerate().skip(1) {
                gallery.push(s.parse::<i64>().map_err(|_| parse_err(line, col + 1, format!("bad gallery id `{s}`")))?);
            }
            if gallery.is_empty() {
                return Err(parse_err(line, 2, "no gallery ids in the header".into()));
            }
            continue;
        }
        if rec.len() != gallery.len() + 1 {
            return Err(parse_err(
                line,
                rec.len() + 1,
                format!("expected {} fields, found {}", gallery.len() + 1, rec.len()),
            ));
        }
        probes.push(rec[0].parse::<i64>().map_err(|_| parse_err(line, 1, format!("bad probe id `{}`", &rec[0])))?);
        for (col, s) in rec.iter().enumerate().skip(1) {
            match s.parse::<f64>() {
                Ok(v) if !v.is_nan() => values.push(v),
                _ => return Err(parse_err(line, col + 1, format!("bad distance `{s}`"))),
            }
        }
    }
    if probes.is_empty() {
        return Err(parse_err(2, 1, "no probe rows".into()));
    }
    Ok((Matrix::from_row_major(probes.len(), gallery.len(), values), probes, gallery))
}
