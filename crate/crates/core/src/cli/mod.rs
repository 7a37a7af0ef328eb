//! Command-line driver: synthetic data generation, training, evaluation,
//! paired ablation and gradient verification.

mod config;
mod report;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{gen_synthetic, load_dataset, write_dataset};
use crate::evaluation::{
    dataset_digest, group_breakdown, render_table, run_ablation, AblationTable, EvalError,
    GroupMetrics,
};
use crate::networks::{Checkpoint, Mode, Variant};
use crate::training::{gradcheck_objective, predict_dataset, train_model, StopReason, TrainError};

pub use config::{LoadedConfig, RunConfig, SEED_ENV};
pub use report::{
    read_report, render_groups, write_report, Report, ReportPaths, RunDir, CODE_VERSION,
};

/// Largest relative gradient error `gradcheck` accepts.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, config or input files; exit code 2.
    #[error("{0}")]
    User(String),
    /// Failure while computing; exit code 1.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::User(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(_) | TrainError::Data(_) | TrainError::MissingModality => {
                CliError::User(e.to_string())
            }
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Train(t) => t.into(),
            EvalError::Protocol(_) | EvalError::Data(_) => CliError::User(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "savae",
    version,
    about = "Sex-aware adversarial VAE for brain-age regression"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset and its ground-truth factors.
    GenData(GenDataArgs),
    /// Fit one model; writes a checkpoint and the epoch history.
    Train(TrainArgs),
    /// Score a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Paired comparison of model variants on shared splits.
    Ablate(AblateArgs),
    /// Check model gradients against central differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Root directory for run outputs.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Run seed; falls back to the config file, then SAVAE_SEED.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainOverrides {
    /// Dataset CSV; replaces the config's data source.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Train on both modalities or on the first one only.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Upper bound on training epochs.
    #[arg(long)]
    pub max_epochs: Option<usize>,
    /// Initial Adam learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Mini-batch size.
    #[arg(long)]
    pub batch_size: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModeArg {
    Multimodal,
    Unimodal,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Multimodal => Mode::Multimodal,
            ModeArg::Unimodal => Mode::Unimodal,
        }
    }
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Number of subjects.
    #[arg(long)]
    pub n: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub overrides: TrainOverrides,
    /// Model variant, e.g. AE, AVAE or SA-AVAE.
    #[arg(long)]
    pub variant: Option<Variant>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Checkpoint written by `train`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset CSV to score.
    #[arg(long)]
    pub data: PathBuf,
    /// Root directory for run outputs.
    #[arg(long, default_value = "runs")]
    pub out: PathBuf,
    /// Recorded in output names; falls back to SAVAE_SEED.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub overrides: TrainOverrides,
    /// Comma-separated variant names.
    #[arg(long, value_delimiter = ',')]
    pub variants: Option<Vec<Variant>>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Cross-validation folds.
    #[arg(long)]
    pub k: Option<usize>,
    /// Use one stratified holdout of this fraction instead of k-fold.
    #[arg(long)]
    pub test_fraction: Option<f64>,
    /// Worker threads for independent splits.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Seed for the parameter points; falls back to SAVAE_SEED, then 0.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Random parameter points to check.
    #[arg(long, default_value_t = 100)]
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenDataSummary {
    pub n: usize,
    pub m1: usize,
    pub m2: Option<usize>,
    pub dataset_digest: String,
    pub files: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub variant: Variant,
    pub mode: Mode,
    pub dataset_digest: String,
    pub epochs_run: usize,
    pub best_epoch: Option<usize>,
    pub best_val_mae: Option<f64>,
    pub stop_reason: StopReason,
    pub files: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub checkpoint: PathBuf,
    pub variant: Variant,
    pub mode: Mode,
    pub dataset_digest: String,
    pub metrics: GroupMetrics,
}

/// Parses `argv` (program name first), runs the command and returns the exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    use clap::error::ErrorKind;
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    0
                }
                _ => {
                    let text = e.to_string();
                    let line = text
                        .lines()
                        .find(|l| !l.trim().is_empty())
                        .unwrap_or("invalid arguments");
                    eprintln!("{}", line.trim());
                    2
                }
            };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Ablate(a) => ablate(a),
        Command::Gradcheck(a) => gradcheck(a),
    }
}

fn load_config(common: &CommonArgs) -> Result<LoadedConfig, CliError> {
    let mut loaded = LoadedConfig::load(common.config.as_deref())?;
    if let Some(out) = &common.out {
        loaded.config.output_dir = out.clone();
    }
    loaded.config.resolve_seed(common.seed)?;
    Ok(loaded)
}

fn apply_overrides(cfg: &mut RunConfig, o: &TrainOverrides) {
    if let Some(p) = &o.data {
        cfg.set_data_path(p.clone());
    }
    if let Some(m) = o.mode {
        cfg.train.mode = m.into();
    }
    if let Some(e) = o.max_epochs {
        cfg.train.max_epochs = e;
    }
    if let Some(lr) = o.lr {
        cfg.train.lr = lr;
    }
    if let Some(b) = o.batch_size {
        cfg.train.batch_size = b;
    }
}

fn file_name(p: &std::path::Path) -> String {
    p.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn runtime<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Runtime(e.to_string())
}

fn gen_data(args: GenDataArgs) -> Result<(), CliError> {
    let mut loaded = load_config(&args.common)?;
    let cfg = &mut loaded.config;
    if cfg.data_path.is_some() {
        return Err(CliError::User(
            "gen-data needs a [synthetic] table, not data_path".into(),
        ));
    }
    let mut spec = cfg.synthetic.clone().unwrap_or_default();
    if let Some(n) = args.n {
        spec.n = n;
    }
    if let Some(s) = cfg.seed {
        spec.seed = s;
    }
    spec.validate().map_err(|e| CliError::User(e.to_string()))?;
    cfg.synthetic = Some(spec.clone());

    let (ds, truth) = gen_synthetic(&spec).map_err(runtime)?;
    let run = RunDir::create(
        &cfg.output_dir,
        "gen-data",
        spec.seed,
        cfg.to_toml().as_bytes(),
    )?;
    let (data_path, f) = run.create_file("dataset.csv")?;
    write_dataset(&ds, std::io::BufWriter::new(f)).map_err(runtime)?;
    let truth_json = serde_json::to_string(&truth).map_err(runtime)?;
    let truth_path = run.write("ground_truth.json", truth_json.as_bytes())?;
    let summary = GenDataSummary {
        n: ds.len(),
        m1: ds.m1(),
        m2: ds.m2(),
        dataset_digest: dataset_digest(&ds),
        files: vec![file_name(&data_path), file_name(&truth_path)],
    };
    let table = format!(
        "subjects {}\nmodality-1 features {}\nmodality-2 features {}\n",
        summary.n,
        summary.m1,
        summary.m2.map_or("-".to_string(), |m| m.to_string())
    );
    let report = Report::new("gen-data", spec.seed, cfg, summary);
    let paths = write_report(&run, &report, &table, &loaded.echo())?;
    println!("dataset {}", data_path.display());
    println!("report {}", paths.report.display());
    Ok(())
}

fn train(args: TrainArgs) -> Result<(), CliError> {
    let mut loaded = load_config(&args.common)?;
    let cfg = &mut loaded.config;
    apply_overrides(cfg, &args.overrides);
    if let Some(v) = args.variant {
        cfg.train.variant = v;
    }
    let ds = cfg.load_data()?;
    let seed = cfg.run_seed();
    let run = RunDir::create(&cfg.output_dir, "train", seed, cfg.to_toml().as_bytes())?;
    let trained = train_model(&ds, &cfg.train)?;
    let ckpt_json = trained.checkpoint.to_json().map_err(runtime)?;
    let ckpt_path = run.write("checkpoint.json", ckpt_json.as_bytes())?;
    let hist_path = run.write("history.ndjson", trained.history.to_ndjson().as_bytes())?;
    let h = &trained.history;
    let summary = TrainSummary {
        variant: cfg.train.variant,
        mode: cfg.train.mode,
        dataset_digest: dataset_digest(&ds),
        epochs_run: h.epochs.len(),
        best_epoch: h.best_epoch,
        best_val_mae: h.best_val_mae,
        stop_reason: h.stop_reason,
        files: vec![file_name(&ckpt_path), file_name(&hist_path)],
    };
    let table = format!(
        "variant {}\nepochs run {}\nbest epoch {}\nbest validation MAE {}\nstop {:?}\n",
        summary.variant,
        summary.epochs_run,
        summary
            .best_epoch
            .map_or("-".to_string(), |e| e.to_string()),
        summary
            .best_val_mae
            .map_or("-".to_string(), |m| format!("{m:.4}")),
        summary.stop_reason,
    );
    let report = Report::new("train", seed, cfg, summary);
    let paths = write_report(&run, &report, &table, &loaded.echo())?;
    println!("checkpoint {}", ckpt_path.display());
    println!("history {}", hist_path.display());
    println!("report {}", paths.report.display());
    if h.stop_reason == StopReason::NonFinite {
        return Err(CliError::Runtime(format!(
            "training stopped on a non-finite value: {}",
            h.failure.as_deref().unwrap_or("unknown")
        )));
    }
    Ok(())
}

fn eval(args: EvalArgs) -> Result<(), CliError> {
    let mut cfg = RunConfig {
        output_dir: args.out.clone(),
        ..RunConfig::default()
    };
    cfg.set_data_path(args.data.clone());
    let seed = cfg.resolve_seed(args.seed)?.unwrap_or(0);
    let ckpt = Checkpoint::load(&args.checkpoint)
        .map_err(|e| CliError::User(format!("checkpoint {}: {e}", args.checkpoint.display())))?;
    let ds = load_dataset(&args.data)
        .map_err(|e| CliError::User(format!("dataset {}: {e}", args.data.display())))?;
    let preds = predict_dataset(&ckpt, &ds)?;
    let sex: Vec<_> = ds.records().iter().map(|r| r.sex).collect();
    let metrics = group_breakdown(&sex, &ds.ages(), &preds)?;
    cfg.train.variant = ckpt.bundle.variant;
    cfg.train.mode = ckpt.bundle.mode();

    let run = RunDir::create(&cfg.output_dir, "eval", seed, cfg.to_toml().as_bytes())?;
    let mut csv = String::from("id,sex,age,predicted_age\n");
    for (r, p) in ds.records().iter().zip(&preds) {
        csv.push_str(&format!("{},{},{},{}\n", r.id, r.sex.code(), r.age, p));
    }
    let pred_path = run.write("predictions.csv", csv.as_bytes())?;
    let table = render_groups(&metrics);
    let summary = EvalSummary {
        checkpoint: args.checkpoint.clone(),
        variant: ckpt.bundle.variant,
        mode: ckpt.bundle.mode(),
        dataset_digest: dataset_digest(&ds),
        metrics,
    };
    let report = Report::new("eval", seed, &cfg, summary);
    let paths = write_report(&run, &report, &table, &cfg.to_toml())?;
    print!("{table}");
    println!("predictions {}", pred_path.display());
    println!("report {}", paths.report.display());
    Ok(())
}

fn ablate(args: AblateArgs) -> Result<(), CliError> {
    let mut loaded = load_config(&args.common)?;
    let cfg = &mut loaded.config;
    apply_overrides(cfg, &args.overrides);
    if let Some(v) = &args.variants {
        cfg.variants = v.clone();
    }
    if let Some(s) = &args.seeds {
        cfg.seeds = s.clone();
    }
    if let Some(k) = args.k {
        cfg.k = k;
    }
    if let Some(f) = args.test_fraction {
        cfg.test_fraction = Some(f);
    }
    if args.jobs == 0 {
        return Err(CliError::User("--jobs must be at least 1".into()));
    }
    let ds = cfg.load_data()?;
    let seed = cfg.run_seed();
    let seeds = cfg.ablation_seeds();
    let run = RunDir::create(&cfg.output_dir, "ablate", seed, cfg.to_toml().as_bytes())?;
    let table: AblationTable = run_ablation(
        &ds,
        &cfg.variants,
        &cfg.train,
        cfg.protocol(),
        &seeds,
        args.jobs,
    )?;
    let mut text = render_table(&table);
    for e in &table.entries {
        text.push_str(&format!("\n[{}]\n", e.variant));
        text.push_str(&format!(
            "seed MAE {:.3}±{:.3} over {} seeds; fold MAE {:.3}±{:.3}\n",
            e.seed_mae_mean,
            e.seed_mae_std,
            e.seeds.len(),
            e.fold_mae_mean,
            e.fold_mae_std
        ));
        text.push_str(&render_groups(&e.pooled));
    }
    let report = Report::new("ablate", seed, cfg, table);
    let paths = write_report(&run, &report, &text, &loaded.echo())?;
    print!("{text}");
    println!("report {}", paths.report.display());
    Ok(())
}

fn gradcheck(args: GradcheckArgs) -> Result<(), CliError> {
    let mut cfg = RunConfig::default();
    let seed = cfg.resolve_seed(args.seed)?.unwrap_or(0);
    if args.points == 0 {
        return Err(CliError::User("--points must be at least 1".into()));
    }
    let r = gradcheck_objective(seed, args.points)?;
    let mut out = std::io::stdout().lock();
    writeln!(
        out,
        "max relative error {:.3e} over {} points x {} parameters",
        r.max_rel_err, r.points, r.params_per_point
    )
    .map_err(runtime)?;
    if r.max_rel_err < GRADCHECK_TOLERANCE {
        Ok(())
    } else {
        Err(CliError::Runtime(format!(
            "gradient check failed: {:.3e} exceeds {GRADCHECK_TOLERANCE:e}",
            r.max_rel_err
        )))
    }
}
