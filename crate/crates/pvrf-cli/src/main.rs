//! `pvrf` — restricted-mean survival analysis with pseudo-value forests.
//!
//! One binary exposing the whole pipeline: simulating benchmark data with
//! known truth, computing jackknife pseudo-values, fitting and persisting
//! models, predicting restricted means, g-computation treatment contrasts,
//! cross-validated evaluation, permutation importance, Shapley
//! decompositions, prediction subgroup summaries, and the full simulation
//! benchmark.
//!
//! Conventions shared by every subcommand:
//!
//! - `--seed` is required (directly or via `--config`): all randomness
//!   derives from it and a fixed seed reproduces every output byte for
//!   byte, regardless of `--threads`.
//! - every output file gets a `<file>.meta.json` sidecar recording the
//!   tool version, seed, resolved parameters, and input hashes.
//! - exit codes: 0 success, 1 usage error, 2 data error, 3 numeric
//!   failure.

mod config;
mod meta;
mod ops;
mod subgroup;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use pvrf::error::ErrorClass;

/// Failures split by exit code: usage problems (1) versus library errors
/// (2 for bad data or requests, 3 for numeric breakdowns).
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Lib(pvrf::error::Error),
}

pub type CResult<T> = Result<T, CliError>;

pub fn usage(message: impl Into<String>) -> CliError {
    CliError::Usage(message.into())
}

impl From<pvrf::error::Error> for CliError {
    fn from(e: pvrf::error::Error) -> CliError {
        CliError::Lib(e)
    }
}

#[derive(Parser)]
#[command(
    name = "pvrf",
    version,
    about = "Pseudo-value random forests for restricted mean survival time",
    after_help = "Every run needs --seed; outputs are byte-reproducible for a fixed seed \
                  across any --threads setting."
)]
struct Cli {
    /// Master random seed. Required (no silent nondeterminism); may also
    /// come from the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Cap worker threads (default: all cores). Never changes results.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// JSON object of default flag values, overridden by explicit flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

/// Input-table flags shared by the data-driven subcommands.
#[derive(Args)]
pub struct DataArgs {
    /// Survival data CSV.
    #[arg(long)]
    data: Option<PathBuf>,

    /// JSON schema declaring time/status/treatment columns and covariate
    /// kinds.
    #[arg(long)]
    schema: Option<PathBuf>,

    /// Drop rows with missing values instead of failing.
    #[arg(long)]
    drop_incomplete: bool,
}

/// Forest-fitting knobs (ignored by models that do not use them).
#[derive(Args)]
pub struct FitKnobs {
    /// Trees per forest.
    #[arg(long)]
    n_trees: Option<usize>,

    /// Fraction of rows subsampled per tree.
    #[arg(long)]
    subsample: Option<f64>,

    /// Monte-Carlo permutations per conditional selection test.
    #[arg(long)]
    permutations: Option<usize>,

    /// Candidate variables per node: "auto" (√p), "tune", "tune:K", or a
    /// number.
    #[arg(long)]
    mtry: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate benchmark datasets with exact restricted-mean ground truth.
    Simulate(SimulateArgs),
    /// Jackknife pseudo-values of the restricted mean at one horizon.
    Pseudo(PseudoArgs),
    /// Fit a model and save it as versioned JSON.
    Fit(FitArgs),
    /// Predict restricted means from a saved model.
    Predict(PredictArgs),
    /// Confounder-adjusted treatment contrast by g-computation.
    Contrast(ContrastArgs),
    /// Cross-validated error metrics for one model family.
    Evaluate(EvaluateArgs),
    /// Permutation importance of every covariate.
    Importance(ImportanceArgs),
    /// Per-row Shapley decompositions of model predictions.
    Shapley(ShapleyArgs),
    /// Group summaries of saved predictions.
    Subgroup(SubgroupArgs),
    /// The full benchmark: every method over many simulated replicates.
    Study(StudyArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenarios to generate (1-4); default: all.
    #[arg(long, value_delimiter = ',')]
    scenario: Vec<u8>,

    /// Censoring percentages to calibrate (default: 25,50,75).
    #[arg(long, value_delimiter = ',')]
    censoring: Vec<u8>,

    /// Train/test replicates per scenario-censoring arm.
    #[arg(long)]
    reps: Option<u64>,

    /// Individuals per generated sample.
    #[arg(long)]
    n: Option<usize>,

    /// Pilot size for censoring calibration and horizon quantiles.
    #[arg(long)]
    calibration_n: Option<usize>,

    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PseudoArgs {
    #[command(flatten)]
    data: DataArgs,

    /// Restriction horizon τ.
    #[arg(long)]
    tau: Option<f64>,

    /// Output CSV (id, tau, pseudo_value).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,

    /// Restriction horizon τ.
    #[arg(long)]
    tau: Option<f64>,

    /// Model family: forest-cart, forest-cond, gee, gee-log, cox,
    /// lognormal, pooled-km, or reference.
    #[arg(long)]
    model: Option<String>,

    /// Forest shorthand: "cart" or "conditional" (same as
    /// --model forest-cart / forest-cond).
    #[arg(long)]
    algorithm: Option<String>,

    /// JSON file with the benchmark Cox structure (only with
    /// --model reference).
    #[arg(long)]
    reference_spec: Option<PathBuf>,

    #[command(flatten)]
    knobs: FitKnobs,

    /// Output model JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[command(flatten)]
    data: DataArgs,

    /// Saved model JSON from `pvrf fit`.
    #[arg(long)]
    model: Option<PathBuf>,

    /// Restriction horizon τ (must match the fitted horizon for
    /// pseudo-value models).
    #[arg(long)]
    tau: Option<f64>,

    /// Output CSV (id, tau, rmst).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ContrastArgs {
    #[command(flatten)]
    data: DataArgs,

    /// Saved model JSON from `pvrf fit`.
    #[arg(long)]
    model: Option<PathBuf>,

    /// Restriction horizon τ.
    #[arg(long)]
    tau: Option<f64>,

    /// Treatment column (default: the schema's declared treatment).
    #[arg(long)]
    treatment_col: Option<String>,

    /// First treatment level (the contrast is A minus B).
    #[arg(long)]
    level_a: Option<String>,

    /// Second treatment level.
    #[arg(long)]
    level_b: Option<String>,

    /// Output JSON with per-row and average contrasts.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    data: DataArgs,

    /// Model family to cross-validate (a label, as in `fit --model`).
    #[arg(long)]
    model: Option<String>,

    /// Restriction horizon τ.
    #[arg(long)]
    tau: Option<f64>,

    /// Cross-validation folds.
    #[arg(long)]
    folds: Option<usize>,

    /// Also cross-validate the treatment contrast between these levels.
    #[arg(long)]
    level_a: Option<String>,

    /// See --level-a.
    #[arg(long)]
    level_b: Option<String>,

    #[command(flatten)]
    knobs: FitKnobs,

    /// Output CSV (entity, metric, fold, value).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ImportanceArgs {
    #[command(flatten)]
    data: DataArgs,

    /// Saved model JSON to explain (alternative: --model-kind).
    #[arg(long)]
    model: Option<PathBuf>,

    /// Fit this model family on the data first (alternative: --model).
    #[arg(long)]
    model_kind: Option<String>,

    /// Restriction horizon τ.
    #[arg(long)]
    tau: Option<f64>,

    #[command(flatten)]
    knobs: FitKnobs,

    /// Output CSV (entity, metric, fold, value).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ShapleyArgs {
    #[command(flatten)]
    data: DataArgs,

    /// Saved model JSON to explain (alternative: --model-kind).
    #[arg(long)]
    model: Option<PathBuf>,

    /// Fit this model family on the data first (alternative: --model).
    #[arg(long)]
    model_kind: Option<String>,

    /// Restriction horizon τ.
    #[arg(long)]
    tau: Option<f64>,

    /// Rows to explain: comma-separated 0-based indices, or "all".
    #[arg(long)]
    rows: Option<String>,

    /// Background sample size drawn from the data.
    #[arg(long)]
    background_size: Option<usize>,

    /// Monte-Carlo permutation draws per explained row.
    #[arg(long)]
    draws: Option<usize>,

    #[command(flatten)]
    knobs: FitKnobs,

    /// Output CSV (entity, metric, fold, value).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SubgroupArgs {
    /// Predictions CSV from `pvrf predict` (columns id, rmst).
    #[arg(long)]
    predictions: Option<PathBuf>,

    #[command(flatten)]
    data: DataArgs,

    /// Grouping rule "label:column OP value&…" (repeatable; body "all"
    /// matches every row).
    #[arg(long)]
    group: Vec<String>,

    /// Output CSV (group, count, mean, sd).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StudyArgs {
    /// Scenarios to run (1-4); default: all.
    #[arg(long, value_delimiter = ',')]
    scenario: Vec<u8>,

    /// Censoring percentages (default: 25,50,75).
    #[arg(long, value_delimiter = ',')]
    censoring: Vec<u8>,

    /// Replicates per scenario-censoring arm.
    #[arg(long)]
    reps: Option<usize>,

    /// Individuals per train and per test sample.
    #[arg(long)]
    n: Option<usize>,

    /// Comma-separated model families (default: forest-cart, forest-cond,
    /// gee, gee-log, cox, lognormal).
    #[arg(long)]
    methods: Option<String>,

    /// Skip the truth-informed benchmark Cox model.
    #[arg(long)]
    no_reference: bool,

    /// Pilot size for censoring calibration and horizon quantiles.
    #[arg(long)]
    calibration_n: Option<usize>,

    /// Comma-separated indices into the five-horizon τ grid (default:
    /// all).
    #[arg(long)]
    tau_subset: Option<String>,

    #[command(flatten)]
    knobs: FitKnobs,

    /// Output directory for the per-replicate and aggregate CSVs.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(cli: Cli) -> CResult<()> {
    let overlay = match &cli.config {
        Some(path) => config::Overlay::load(path)?,
        None => config::Overlay::empty(),
    };
    let seed = cli
        .seed
        .or(overlay.u64("seed")?)
        .ok_or_else(|| usage("--seed is required (all randomness must be reproducible)"))?;
    if let Some(threads) = cli.threads.or(overlay.usize("threads")?) {
        if threads == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| usage(format!("cannot configure {threads} threads: {e}")))?;
    }
    match cli.command {
        Command::Simulate(args) => ops::simulate(&args, &overlay, seed),
        Command::Pseudo(args) => ops::pseudo(&args, &overlay, seed),
        Command::Fit(args) => ops::fit(&args, &overlay, seed),
        Command::Predict(args) => ops::predict(&args, &overlay, seed),
        Command::Contrast(args) => ops::contrast(&args, &overlay, seed),
        Command::Evaluate(args) => ops::evaluate(&args, &overlay, seed),
        Command::Importance(args) => ops::importance(&args, &overlay, seed),
        Command::Shapley(args) => ops::shapley(&args, &overlay, seed),
        Command::Subgroup(args) => ops::subgroup_cmd(&args, &overlay, seed),
        Command::Study(args) => ops::study(&args, &overlay, seed),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let ok = matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            let _ = e.print();
            std::process::exit(if ok { 0 } else { 1 });
        }
    };
    match run(cli) {
        Ok(()) => {}
        Err(CliError::Usage(message)) => {
            eprintln!("usage error: {message}");
            std::process::exit(1);
        }
        Err(CliError::Lib(e)) => {
            eprintln!("error: {e}");
            std::process::exit(match e.class() {
                ErrorClass::Data => 2,
                ErrorClass::Numeric => 3,
            });
        }
    }
}
