//! `mcqscope`: run robustness campaigns and recompute their metrics.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mcqscope_core::protocol::EntropyMode;
use mcqscope_core::PerturbationType;

#[derive(Parser, Debug)]
#[command(name = "mcqscope", version, about = "Multiple-choice robustness harness")]
pub struct Cli {
    /// Harness configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Where responses come from.
    #[arg(long, global = true, value_enum, default_value_t = Mode::Live)]
    pub mode: Mode,
    /// Worker threads for inference (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// Query the configured endpoint.
    Live,
    /// Read every response from a replay log.
    Replay,
    /// Use stored responses where present, query the endpoint otherwise.
    Cache,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Print the perturbed prompts of one question.
    Perturb(PerturbArgs),
    /// List planned runs without inference.
    Plan(PlanArgs),
    /// Execute a campaign.
    Run(RunArgs),
    /// Re-extract labels from a replay log.
    Extract(ExtractArgs),
    /// Estimate position priors and attach debiased labels.
    Debias(DebiasArgs),
    /// Recompute metrics from scored records.
    Score(ScoreArgs),
    /// Write the report bundle for scored records.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
pub struct PerturbArgs {
    #[arg(long = "type", value_parser = parse_type)]
    pub kind: PerturbationType,
    #[arg(long)]
    pub question: Option<String>,
    /// Option contents, repeated four times.
    #[arg(long = "option")]
    pub options: Vec<String>,
    /// Items file (JSON lines) to take the question from.
    #[arg(long, conflicts_with = "question")]
    pub items: Option<PathBuf>,
    /// Item to show from --items (default: the first).
    #[arg(long, requires = "items")]
    pub item_id: Option<String>,
    /// Only this shuffle index.
    #[arg(long)]
    pub shuffle: Option<u32>,
}

#[derive(Args, Debug)]
pub struct PlanArgs {
    /// Write JSON lines here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    /// Replay log to read (replay mode) or extend (cache mode).
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Output directory (default: from config).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ExtractArgs {
    #[arg(long)]
    pub log: PathBuf,
    /// Records file to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct DebiasArgs {
    #[arg(long)]
    pub records: PathBuf,
    /// Rescored records (default: overwrite --records).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the priors here.
    #[arg(long)]
    pub priors: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ScoreArgs {
    #[arg(long)]
    pub records: PathBuf,
    /// Write metrics JSON here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_parser = parse_entropy_mode)]
    pub entropy_mode: Option<EntropyMode>,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    #[arg(long)]
    pub records: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_parser = parse_entropy_mode)]
    pub entropy_mode: Option<EntropyMode>,
}

fn parse_type(s: &str) -> Result<PerturbationType, String> {
    s.parse()
}

fn parse_entropy_mode(s: &str) -> Result<EntropyMode, String> {
    match s {
        "voted" => Ok(EntropyMode::Voted),
        "raw" => Ok(EntropyMode::Raw),
        other => Err(format!("unknown entropy mode {other:?} (voted, raw)")),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
