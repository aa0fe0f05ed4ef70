//! Run configuration: defaults, overridden by a key=value config file,
//! overridden by command-line flags (last writer wins). The resolved
//! configuration is echoed into every report.

use std::path::{Path, PathBuf};

use amgcl::{Error, MaskSpec, PrecoderConfig, RecTarget, Result, TrainConfig, Variant};
use clap::Args;

/// Flags shared by `precode` and `train` (and embedded in `eval`).
#[derive(Args, Debug, Clone)]
pub struct CommonArgs {
    /// Dataset directory (meta, edges.tsv, features.tsv, labels.tsv)
    #[arg(long)]
    pub dataset: PathBuf,
    /// Output directory for artifacts
    #[arg(long)]
    pub out: PathBuf,
    /// Optional key=value config file with dotted sections
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Fraction of nodes whose attributes are hidden
    #[arg(long)]
    pub missing_rate: Option<f64>,
    /// Seed for every random stream of the run
    #[arg(long)]
    pub seed: Option<u64>,
    /// Weight of the contrastive loss
    #[arg(long)]
    pub lambda: Option<f64>,
    /// EMA decay of the target encoder
    #[arg(long)]
    pub ema_decay: Option<f64>,
    /// Training epochs
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Precoder iterations
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Loss variant: full (rec + lambda*fcl) or star (fcl only)
    #[arg(long)]
    pub variant: Option<String>,
    /// Rows the reconstruction loss averages over: all or observed
    #[arg(long)]
    pub rec_target: Option<String>,
    /// Comma-separated ranking cutoffs, e.g. 10,20,50
    #[arg(long)]
    pub ks: Option<String>,
}

/// `eval` recomputes metrics from stored artifacts.
#[derive(Args, Debug, Clone)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Imputed feature matrix (TSV written by train/precode)
    #[arg(long)]
    pub features: PathBuf,
    /// Embedding matrix (TSV written by train)
    #[arg(long)]
    pub embedding: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct BenchArgs {
    /// Comma-separated nodes:edges:dim triples, e.g. 800:3200:64,800:6400:64
    #[arg(long)]
    pub sizes: Option<String>,
    /// Optional output directory for bench.json
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, serde::Serialize)]
pub struct RunConfig {
    pub dataset_dir: PathBuf,
    pub output_dir: PathBuf,
    pub mask: MaskSpec,
    pub precoder: PrecoderConfig,
    pub train: TrainConfig,
    pub eval_ks: Vec<usize>,
    /// Whether train runs the classification probe.
    pub probe: bool,
}

fn parse_ks(raw: &str) -> Result<Vec<usize>> {
    let ks: Vec<usize> = raw
        .split(',')
        .map(|part| {
            part.trim()
                .parse()
                .map_err(|e| Error::Config(format!("bad cutoff {part:?}: {e}")))
        })
        .collect::<Result<_>>()?;
    if ks.is_empty() {
        return Err(Error::Config("eval.ks must not be empty".into()));
    }
    Ok(ks)
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key} must be true or false, got {value:?}")))
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("bad value for {key}: {e}")))
}

fn parse_variant(value: &str) -> Result<Variant> {
    match value {
        "full" => Ok(Variant::Full),
        "star" => Ok(Variant::Star),
        other => Err(Error::Config(format!(
            "variant must be full or star, got {other:?}"
        ))),
    }
}

fn parse_rec_target(value: &str) -> Result<RecTarget> {
    match value {
        "all" => Ok(RecTarget::All),
        "observed" => Ok(RecTarget::Observed),
        other => Err(Error::Config(format!(
            "rec_target must be all or observed, got {other:?}"
        ))),
    }
}

fn apply_file(cfg: &mut RunConfig, path: &Path) -> Result<()> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("{}:{}: expected key=value", path.display(), idx + 1))
        })?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "mask.missing_rate" => cfg.mask.missing_rate = parse_num(key, value)?,
            "mask.seed" => cfg.mask.seed = parse_num(key, value)?,
            "mask.val_test_ratio" => {
                let (a, b) = value.split_once(':').ok_or_else(|| {
                    Error::Config(format!("{key} must look like 1:5, got {value:?}"))
                })?;
                cfg.mask.val_test_ratio = (parse_num(key, a.trim())?, parse_num(key, b.trim())?);
            }
            "precoder.iterations" => cfg.precoder.iterations = parse_num(key, value)?,
            "precoder.convergence_tol" => cfg.precoder.convergence_tol = parse_num(key, value)?,
            "precoder.clamp_observed" => cfg.precoder.clamp_observed = parse_bool(key, value)?,
            "train.lambda" => cfg.train.lambda = parse_num(key, value)?,
            "train.ema_decay" => cfg.train.ema_decay = parse_num(key, value)?,
            "train.epochs" => cfg.train.epochs = parse_num(key, value)?,
            "train.lr" => cfg.train.lr = parse_num(key, value)?,
            "train.seed" => cfg.train.seed = parse_num(key, value)?,
            "train.symmetrize_fcl" => cfg.train.symmetrize_fcl = parse_bool(key, value)?,
            "train.variant" => cfg.train.variant = parse_variant(value)?,
            "train.rec_target" => cfg.train.rec_target = parse_rec_target(value)?,
            "aug1.feature_mask_prob" => cfg.train.aug1.feature_mask_prob = parse_num(key, value)?,
            "aug1.edge_drop_prob" => cfg.train.aug1.edge_drop_prob = parse_num(key, value)?,
            "aug1.seed" => cfg.train.aug1.seed = parse_num(key, value)?,
            "aug2.feature_mask_prob" => cfg.train.aug2.feature_mask_prob = parse_num(key, value)?,
            "aug2.edge_drop_prob" => cfg.train.aug2.edge_drop_prob = parse_num(key, value)?,
            "aug2.seed" => cfg.train.aug2.seed = parse_num(key, value)?,
            "eval.ks" => cfg.eval_ks = parse_ks(value)?,
            "eval.probe" => cfg.probe = parse_bool(key, value)?,
            other => {
                return Err(Error::Config(format!("unknown config key {other:?}")));
            }
        }
    }
    Ok(())
}

/// defaults -> config file -> flags; `--seed` re-seeds the mask, the trainer
/// and both augmentation streams.
pub fn resolve(args: CommonArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig {
        dataset_dir: args.dataset.clone(),
        output_dir: args.out.clone(),
        mask: MaskSpec::new(0.6, 0),
        precoder: PrecoderConfig::default(),
        train: TrainConfig::new(0),
        eval_ks: vec![10, 20, 50],
        probe: true,
    };
    if let Some(path) = &args.config {
        apply_file(&mut cfg, path)?;
    }
    if let Some(seed) = args.seed {
        cfg.mask.seed = seed;
        let fresh = TrainConfig::new(seed);
        cfg.train.seed = fresh.seed;
        cfg.train.aug1.seed = fresh.aug1.seed;
        cfg.train.aug2.seed = fresh.aug2.seed;
    }
    if let Some(rate) = args.missing_rate {
        cfg.mask.missing_rate = rate;
    }
    if let Some(lambda) = args.lambda {
        cfg.train.lambda = lambda;
    }
    if let Some(tau) = args.ema_decay {
        cfg.train.ema_decay = tau;
    }
    if let Some(epochs) = args.epochs {
        cfg.train.epochs = epochs;
    }
    if let Some(iterations) = args.iterations {
        cfg.precoder.iterations = iterations;
    }
    if let Some(variant) = &args.variant {
        cfg.train.variant = parse_variant(variant)?;
    }
    if let Some(rec_target) = &args.rec_target {
        cfg.train.rec_target = parse_rec_target(rec_target)?;
    }
    if let Some(ks) = &args.ks {
        cfg.eval_ks = parse_ks(ks)?;
    }
    Ok(cfg)
}
