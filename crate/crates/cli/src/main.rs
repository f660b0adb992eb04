mod commands;
mod error;
mod options;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use quacc::quantreg::BandwidthRule;
use quacc::synth::Setting;

use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(name = "quacc", version)]
#[command(about = "Quantile association tests and skeleton learning", long_about = None)]
#[command(arg_required_else_help = true)]
struct Cli {
    /// Worker threads (default: QUACC_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// QuACC test of Y against X given Z at each tau.
    Test(TestArgs),
    /// PC skeleton per tau, optionally majority-voted over subsamples.
    Graph(GraphArgs),
    /// Marginal and maximally conditioned QuACC matrices.
    Pairwise(PairwiseArgs),
    /// Simulation benchmarks.
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Draw a synthetic dataset with a JSON sidecar describing it.
    Simulate(SimulateArgs),
}

#[derive(Args, Debug, Clone)]
pub struct EstimationArgs {
    /// Comma list and/or start:stop:step ranges.
    #[arg(long, alias = "taus", default_value = "0.1,0.5,0.9")]
    pub tau: String,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value_t = BandwidthArg::HallSheather)]
    pub bandwidth: BandwidthArg,
    #[arg(long)]
    pub seed: u64,
}

#[derive(Args, Debug, Clone)]
pub struct PreprocessArgs {
    /// Columns to jitter before any transform, comma separated.
    #[arg(long, default_value = "")]
    pub jitter: String,
    /// Replace every column by its rank-based normal scores.
    #[arg(long)]
    pub qq_transform: bool,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandwidthArg {
    HallSheather,
    Bofinger,
}

impl From<BandwidthArg> for BandwidthRule {
    fn from(b: BandwidthArg) -> Self {
        match b {
            BandwidthArg::HallSheather => BandwidthRule::HallSheather,
            BandwidthArg::Bofinger => BandwidthRule::Bofinger,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BackendArg {
    Quacc,
    Pcorr,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormatArg {
    Json,
    Table,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeArg {
    Marginal,
    Maximal,
    Both,
}

#[derive(Args, Debug)]
pub struct TestArgs {
    pub data: PathBuf,
    #[arg(long)]
    pub y: String,
    #[arg(long)]
    pub x: String,
    /// Conditioning variables, comma separated.
    #[arg(long, default_value = "")]
    pub z: String,
    #[command(flatten)]
    pub est: EstimationArgs,
    #[command(flatten)]
    pub pre: PreprocessArgs,
    /// Test against a concordance value instead of independence.
    #[arg(long)]
    pub null_value: Option<f64>,
    #[arg(long, default_value_t = ',')]
    pub delimiter: char,
    #[arg(long, value_enum, default_value_t = FormatArg::Json)]
    pub format: FormatArg,
    /// Also write the JSON report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GraphArgs {
    pub data: PathBuf,
    /// Variables to use, comma separated (default: every column).
    #[arg(long, default_value = "")]
    pub vars: String,
    #[command(flatten)]
    pub est: EstimationArgs,
    #[command(flatten)]
    pub pre: PreprocessArgs,
    #[arg(long, value_enum, default_value_t = BackendArg::Quacc)]
    pub backend: BackendArg,
    #[arg(long)]
    pub max_order: Option<usize>,
    /// Number of subsample replicates to majority-vote over.
    #[arg(long, default_value_t = 1)]
    pub replicates: usize,
    /// Rows per replicate, drawn without replacement (default: all rows).
    #[arg(long)]
    pub subsample: Option<usize>,
    #[arg(long, default_value_t = ',')]
    pub delimiter: char,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug)]
pub struct PairwiseArgs {
    pub data: PathBuf,
    #[arg(long, default_value = "")]
    pub vars: String,
    #[command(flatten)]
    pub est: EstimationArgs,
    #[command(flatten)]
    pub pre: PreprocessArgs,
    #[arg(long, value_enum, default_value_t = ModeArg::Both)]
    pub mode: ModeArg,
    #[arg(long, default_value_t = ',')]
    pub delimiter: char,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Subcommand, Debug)]
enum BenchCommand {
    /// Rejection rates of the pairwise settings over a tau and theta grid.
    Reject(RejectArgs),
    /// Skeleton recovery on the ten-variable graph design.
    Graph(BenchGraphArgs),
}

#[derive(Args, Debug)]
pub struct RejectArgs {
    #[arg(long, value_parser = parse_setting)]
    pub setting: Setting,
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[command(flatten)]
    pub est: EstimationArgs,
    /// Copula parameters (default: the setting's own).
    #[arg(long)]
    pub thetas: Option<String>,
    #[arg(long, default_value_t = 100)]
    pub replicates: usize,
    /// CSV output (the aligned table always goes to stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchGraphArgs {
    #[arg(long, default_value_t = 5000)]
    pub n: usize,
    #[command(flatten)]
    pub est: EstimationArgs,
    /// Comma list of backends.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "quacc")]
    pub backend: Vec<BackendArg>,
    #[arg(long, default_value_t = 20)]
    pub replicates: usize,
    /// Draw nonzero mean effects for every variable.
    #[arg(long)]
    pub mean_effects: bool,
    #[arg(long)]
    pub max_order: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-replicate records as JSON.
    #[arg(long)]
    pub records: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long, value_parser = parse_setting)]
    pub setting: Setting,
    #[arg(long)]
    pub n: usize,
    /// Copula parameter for the pairwise settings.
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub mean_effects: bool,
    #[arg(long)]
    pub seed: u64,
    /// CSV path; the sidecar is written next to it with a .json extension.
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_setting(s: &str) -> Result<Setting, String> {
    s.parse().map_err(|e: quacc::QuaccError| e.to_string())
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = options::thread_count(cli.threads)? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Test(a) => commands::test(&a),
        Command::Graph(a) => commands::graph(&a),
        Command::Pairwise(a) => commands::pairwise(&a),
        Command::Bench(BenchCommand::Reject(a)) => commands::bench_reject(&a),
        Command::Bench(BenchCommand::Graph(a)) => commands::bench_graph(&a),
        Command::Simulate(a) => commands::simulate(&a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
