//! `modeljoin`: ingest tables, learn per-table models, and run model joins.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use modeljoin::ErrorClass;

#[derive(Parser)]
#[command(name = "modeljoin", version, about = "Uniform join samples from per-table models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate delimited files against metadata and write a dataset directory.
    Ingest(IngestArgs),
    /// Build a model file for one table.
    Learn(LearnArgs),
    /// Run inference and report the join size and per-level statistics.
    Join(JoinArgs),
    /// Generate a uniform sample of the join.
    Sample(SampleArgs),
    /// Score samples (ks) or a model against its table (fscore).
    Evaluate(EvaluateArgs),
    /// Compute the join from raw data and write it, or a uniform sample of it.
    Oracle(OracleArgs),
    /// Generate a synthetic table and a self-join chain over copies of it.
    Synth(SynthArgs),
}

#[derive(Args)]
pub struct IngestArgs {
    /// Metadata document.
    #[arg(long)]
    pub meta: PathBuf,
    /// Output dataset directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Delimited files named `<table>.csv`.
    #[arg(required = true)]
    pub files: Vec<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Backend {
    Exact,
    Learned,
}

#[derive(Args)]
pub struct LearnArgs {
    /// Metadata document; defaults to `meta.json` inside the dataset directory.
    #[arg(long)]
    pub meta: Option<PathBuf>,
    /// Dataset directory or the table's delimited file.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub table: String,
    #[arg(long, value_enum, default_value = "exact")]
    pub backend: Backend,
    /// Output model file.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Exact backend: move this much conditional mass per value.
    #[arg(long)]
    pub perturb: Option<f64>,
    /// Learned backend: number of final clusters.
    #[arg(long, default_value_t = 1)]
    pub clusters: usize,
    /// Learned backend: one single-valued head per distinct pair.
    #[arg(long)]
    pub per_pair: bool,
    #[arg(long, default_value_t = 64)]
    pub embed_dim: usize,
    #[arg(long, default_value_t = 5)]
    pub negatives: usize,
    #[arg(long, default_value_t = 5)]
    pub embed_epochs: usize,
    #[arg(long, default_value_t = 5)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.0005)]
    pub lr: f64,
    #[arg(long, default_value_t = 200)]
    pub hidden: usize,
    /// Answer unseen conditioning values with the marginal instead of failing.
    #[arg(long)]
    pub marginal_fallback: bool,
}

#[derive(Args, Clone)]
pub struct QueryArgs {
    /// Query document.
    #[arg(long)]
    pub query: PathBuf,
    /// Metadata document.
    #[arg(long)]
    pub meta: PathBuf,
    /// Directory of `<table>.model.json` files for tables without a source.
    #[arg(long)]
    pub models: Option<PathBuf>,
    /// Directory of `<table>.csv` files for tables without a source.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Skeleton root: a JA label or `table.attr` at one end of the chain.
    #[arg(long)]
    pub root: Option<String>,
}

#[derive(Args)]
pub struct JoinArgs {
    #[command(flatten)]
    pub query: QueryArgs,
    /// Also write the report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub query: QueryArgs,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[arg(long, default_value_t = modeljoin::plan::DEFAULT_REJECT_BUDGET)]
    pub reject_budget: usize,
    /// Output file; stdout when absent. A manifest is written beside it.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvalMode {
    Ks,
    Fscore,
}

#[derive(Args)]
pub struct EvaluateArgs {
    #[arg(value_enum)]
    pub mode: EvalMode,
    /// ks: query document whose join the sample came from.
    #[arg(long)]
    pub query: Option<PathBuf>,
    #[arg(long)]
    pub meta: Option<PathBuf>,
    /// ks: directory of raw tables; fscore: the table's delimited file or dataset directory.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// ks: directory of model files; fscore: the model file.
    #[arg(long)]
    pub models: Option<PathBuf>,
    /// ks: generated sample file.
    #[arg(long)]
    pub sample: Option<PathBuf>,
    /// ks: compare against this sample instead of drawing from the raw join.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long)]
    pub root: Option<String>,
    /// fscore: conditioning values to draw.
    #[arg(long, default_value_t = 10_000)]
    pub n: u64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 10_000_000)]
    pub oracle_cap: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub query: QueryArgs,
    /// Draw this many uniform rows instead of writing the whole join.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 10_000_000)]
    pub oracle_cap: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub rows: usize,
    #[arg(long)]
    pub ndv1: usize,
    #[arg(long)]
    pub ndv2: usize,
    #[arg(long)]
    pub ndp: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub zipf: Option<f64>,
    /// Draw both attributes from one value domain.
    #[arg(long)]
    pub shared_domain: bool,
    /// Copies chained into a self join.
    #[arg(long, default_value_t = 1)]
    pub ways: usize,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let Some(e) = err.downcast_ref::<modeljoin::Error>() else {
        return 1;
    };
    match e.class() {
        ErrorClass::Schema => 3,
        ErrorClass::Capability => 4,
        ErrorClass::EmptyJoin => 5,
        ErrorClass::BudgetExceeded => 6,
        ErrorClass::Other => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MODELJOIN_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Ingest(a) => commands::ingest(&a),
        Command::Learn(a) => commands::learn(&a),
        Command::Join(a) => commands::join(&a),
        Command::Sample(a) => commands::sample(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::Oracle(a) => commands::oracle(&a),
        Command::Synth(a) => commands::synth(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
