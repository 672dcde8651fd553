mod eval_cmd;
mod input;
mod inspect;
mod output;
mod score;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sese_core::providers::{EntailmentProvider, ProviderConfig, ProviderKind, DEFAULT_MAX_IN_FLIGHT};

/// Structural-entropy uncertainty scores for sampled LLM responses.
#[derive(Parser)]
#[command(name = "sese", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score every record of a JSONL file, one report line per record.
    Score(score::ScoreArgs),
    /// AUROC/AURAC of scored reports against their labels.
    Eval(eval_cmd::EvalArgs),
    /// Show the sparsification audit, adjacency and encoding tree of one record.
    Inspect(inspect::InspectArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum RunMode {
    Sentence,
    Claims,
}

impl RunMode {
    pub fn default_k(self) -> usize {
        match self {
            RunMode::Sentence => sese_core::sentence::DEFAULT_SENTENCE_HEIGHT,
            RunMode::Claims => sese_core::claims::DEFAULT_CLAIM_HEIGHT,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ProviderChoice {
    File,
    Wire,
    Mock,
}

/// Where entailment comes from for records without an inline matrix.
#[derive(Args, Debug, Clone)]
pub struct ProviderArgs {
    #[arg(long, value_enum, default_value_t = ProviderChoice::Mock)]
    provider: ProviderChoice,
    /// JSONL entailment file for `--provider file`.
    #[arg(long, value_name = "PATH")]
    entailment_file: Option<PathBuf>,
    /// NLI service base URL for `--provider wire` (SESE_NLI_URL wins when set).
    #[arg(long, value_name = "URL")]
    nli_url: Option<String>,
    /// Seed of the mock provider.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Cache NLI replies on disk, keyed by content hash.
    #[arg(long, value_name = "DIR")]
    cache_dir: Option<PathBuf>,
    /// Per-request timeout in seconds.
    #[arg(long, default_value_t = 30.0)]
    timeout: f64,
    #[arg(long, default_value_t = 3)]
    max_retries: u32,
    #[arg(long, default_value_t = DEFAULT_MAX_IN_FLIGHT)]
    max_in_flight: usize,
}

impl ProviderArgs {
    pub fn config(&self) -> ProviderConfig {
        ProviderConfig {
            kind: match self.provider {
                ProviderChoice::File => ProviderKind::File,
                ProviderChoice::Wire => ProviderKind::Wire,
                ProviderChoice::Mock => ProviderKind::Mock,
            },
            endpoint: self.nli_url.clone(),
            path: self.entailment_file.clone(),
            timeout_secs: self.timeout,
            max_retries: self.max_retries,
            cache_dir: self.cache_dir.clone(),
            max_in_flight: self.max_in_flight,
            seed: self.seed,
        }
    }

    pub fn build(&self) -> anyhow::Result<Box<dyn EntailmentProvider>> {
        Ok(self.config().build()?)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Score(args) => score::run(&args),
        Command::Eval(args) => eval_cmd::run(&args),
        Command::Inspect(args) => inspect::run(&args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
