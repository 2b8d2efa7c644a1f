//! `spt`: batch front end for generating, attacking with, measuring and
//! validating semantics-preserving variants of C functions.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use spt_core::composer::{GenerationConfig, Mode, DEFAULT_BUDGET};
use spt_core::harness::HarnessError;
use spt_core::transforms::TransformRule;

#[derive(Debug, Parser, Serialize)]
#[command(name = "spt", version, about = "Semantics-preserving transformations for C functions")]
pub struct Cli {
    /// Directory for all outputs, including run-manifest.json.
    #[arg(long, global = true, default_value = "spt-out")]
    pub output: PathBuf,
    /// Seed for every sampled quantity.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (0: one per core).
    #[arg(long, global = true, default_value_t = 0)]
    pub workers: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Generate variants of every sample of a corpus.
    Transform(TransformArgs),
    /// Attack a detector with the variants of its true positives.
    Attack(AttackArgs),
    /// Complexity metrics of variants relative to their parents.
    Metrics(MetricsArgs),
    /// Code property graph differences between two versions of a function.
    Graphdiff(GraphdiffArgs),
    /// Compile and differentially test variants against their parents.
    Validate(ValidateArgs),
    /// Serve a built-in detector over the JSONL protocol on stdin/stdout.
    Detect(DetectArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct GenerationArgs {
    /// Rules to apply (comma-separated; default: all).
    #[arg(long, value_delimiter = ',')]
    pub rules: Vec<TransformRule>,
    /// Composition modes (comma-separated; default: all).
    #[arg(long, value_delimiter = ',')]
    pub modes: Vec<Mode>,
    /// Number of rule applications composed in multi-rule mode.
    #[arg(long, default_value_t = 2)]
    pub max_depth: usize,
    /// Maximum variants per sample.
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    pub budget: usize,
}

impl GenerationArgs {
    pub fn config(&self) -> GenerationConfig {
        GenerationConfig {
            rules: if self.rules.is_empty() { TransformRule::ALL.to_vec() } else { self.rules.clone() },
            modes: if self.modes.is_empty() { Mode::ALL.to_vec() } else { self.modes.clone() },
            max_depth: self.max_depth,
            budget: self.budget,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct TransformArgs {
    /// JSONL corpus or directory of `.c` files.
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub generation: GenerationArgs,
    /// First idx given to variants.
    #[arg(long, default_value_t = 1_000_000)]
    pub idx_base: i64,
    /// Fail when no variant is produced.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct DetectorArgs {
    /// External detector command, run through `sh -c`.
    #[arg(long, env = "SPT_DETECTOR")]
    pub detector: Option<String>,
    /// Use the built-in detector that flags texts matching this regex.
    #[arg(long, conflicts_with = "detector")]
    pub pattern_detector: Option<String>,
    /// Spawn the detector once per sample.
    #[arg(long)]
    pub per_sample: bool,
    /// Seconds allowed per detector batch.
    #[arg(long, default_value_t = 300)]
    pub timeout: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct AttackArgs {
    /// JSONL corpus with `target` labels.
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub detector: DetectorArgs,
    #[command(flatten)]
    pub generation: GenerationArgs,
    /// Only query variants that compile.
    #[arg(long)]
    pub validate_compile: bool,
    /// Compiler command for `--validate-compile`.
    #[arg(long, env = "SPT_CC", default_value = "cc")]
    pub compiler: String,
    #[arg(long, default_value_t = 1_000_000)]
    pub idx_base: i64,
    /// Also export this fraction of the variants as an augmentation corpus.
    #[arg(long)]
    pub augment_ratio: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct MetricsArgs {
    /// JSONL corpus or directory of `.c` files (the reference versions).
    #[arg(long)]
    pub input: PathBuf,
    /// Variant JSONL from `transform`; without it, each sample is measured
    /// against its identifier-renamed copy.
    #[arg(long)]
    pub variants: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct GraphdiffArgs {
    /// Original function.
    pub before: PathBuf,
    /// Transformed function.
    pub after: PathBuf,
    /// Also write both graphs in Graphviz format.
    #[arg(long)]
    pub dot: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct ValidateArgs {
    /// JSONL corpus or directory of `.c` files.
    #[arg(long)]
    pub input: PathBuf,
    /// Variant JSONL from `transform`; generated on the fly when absent.
    #[arg(long)]
    pub variants: Option<PathBuf>,
    #[command(flatten)]
    pub generation: GenerationArgs,
    #[arg(long, env = "SPT_CC", default_value = "cc")]
    pub compiler: String,
    /// Sampled inputs per differential test (0 skips differential testing).
    #[arg(long, default_value_t = 256)]
    pub inputs: usize,
    /// Exit nonzero if any variant fails validation.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct DetectArgs {
    /// Flag texts matching this regex.
    #[arg(long, required_unless_present = "constant")]
    pub pattern: Option<String>,
    /// Give every sample this label.
    #[arg(long, conflicts_with = "pattern", value_parser = clap::value_parser!(u8).range(0..=1))]
    pub constant: Option<u8>,
}

/// Failure classes, one exit code each.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(anyhow::Error),
    External(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::External(_) => 3,
        }
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::DetectorSpawnFailure(_)
            | HarnessError::DetectorCrashed(_)
            | HarnessError::ProtocolViolation(_)
            | HarnessError::Timeout(_)
            | HarnessError::CompilerSpawnFailure(_)
            | HarnessError::ExecutionTimeout(_) => Failure::External(e.into()),
            _ => Failure::Data(e.into()),
        }
    }
}

pub fn data(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Data(e.into())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if cli.workers > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.workers).build_global() {
            log::warn!("cannot size the worker pool: {e}");
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(m) => eprintln!("error: {m}"),
                Failure::Data(e) | Failure::External(e) => eprintln!("error: {e:#}"),
            }
            ExitCode::from(f.code())
        }
    }
}
