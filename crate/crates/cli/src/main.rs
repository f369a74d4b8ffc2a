//! `allele`: simulate genealogies with mother-dependent neutral mutations,
//! build allele trees, tabulate exact laws, sample scaling limits and run
//! the verification suites.
//!
//! Exit codes: 0 success, 2 configuration error, 3 cap exceeded,
//! 4 statistical failure, 1 anything else.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use allele_core::Error;
use clap::{Parser, Subcommand};

use config::{Profile, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "allele", version, about = "Multitype branching genealogies with neutral mutations")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides `seed` in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides `out`, defaults to the current directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses the available parallelism.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum, default_value = "quick")]
    profile: Profile,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a forest and export it with its chain and allele tree.
    Simulate {
        /// Read a hand-encoded forest instead of simulating.
        #[arg(long)]
        forest: Option<PathBuf>,
        /// Number of types of a hand-encoded forest.
        #[arg(long)]
        types: Option<usize>,
    },
    /// Allele tree of a forest file, or of a simulated forest.
    AlleleTree {
        forest: Option<PathBuf>,
        #[arg(long)]
        types: Option<usize>,
    },
    /// Exact joint law of the first clone population and mutant vector.
    Exact,
    /// Scaling-limit samplers and experiments.
    Limits {
        #[command(subcommand)]
        which: LimitsCommand,
    },
    /// Verification suites.
    Verify {
        #[command(subcommand)]
        which: VerifyCommand,
    },
}

#[derive(Clone, Copy, Debug, Subcommand)]
pub enum LimitsCommand {
    /// Rescaled clone family against the inverse Gaussian limit.
    Lemma4,
    /// First levels of the rescaled allele tree.
    Theorem1,
    /// Sample the tree-indexed limit process.
    Csbp,
    /// Cumulant grid, inverse Gaussian samples and the reproduction measure.
    Ig,
}

#[derive(Clone, Copy, Debug, Subcommand)]
pub enum VerifyCommand {
    /// Exact tables against brute-force enumeration.
    Oracle,
    /// Markov property of the clone-mutant chain.
    Markov,
    All,
}

/// Failure of a verification suite.
#[derive(Debug)]
pub struct StatisticalFailure(pub usize);

impl std::fmt::Display for StatisticalFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} check(s) failed", self.0)
    }
}

impl std::error::Error for StatisticalFailure {}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<StatisticalFailure>().is_some() {
        return 4;
    }
    match err.downcast_ref::<Error>() {
        Some(Error::CapExceeded { .. } | Error::CapTooSmall { .. }) => 3,
        Some(Error::Io(_)) | None => 1,
        Some(_) => 2,
    }
}

fn hint(err: &anyhow::Error) -> Option<&'static str> {
    match err.downcast_ref::<Error>() {
        Some(Error::CapExceeded { .. }) => {
            Some("retry with another --seed, raise [simulate] max_nodes / max_levels, or set [simulate] prune")
        }
        Some(Error::CapTooSmall { .. }) => Some("raise [exact] bound"),
        _ => None,
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path).map_err(|e| anyhow::Error::new(e).context(format!("reading {}", path.display())))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = Some(seed);
    }
    if let Some(out) = cli.out {
        cfg.out = Some(out);
    }
    if let Some(t) = cli.threads {
        cfg.threads = Some(t);
    }
    if let Some(t) = cfg.threads.filter(|&t| t > 0) {
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global()?;
    }
    let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out)?;
    let ctx = commands::Context { cfg, out, profile: cli.profile };
    match cli.command {
        Command::Simulate { forest, types } => commands::simulate(&ctx, forest, types),
        Command::AlleleTree { forest, types } => commands::allele_tree(&ctx, forest, types),
        Command::Exact => commands::exact(&ctx),
        Command::Limits { which } => commands::limits(&ctx, which),
        Command::Verify { which } => commands::verify(&ctx, which),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            if let Some(h) = hint(&err) {
                eprintln!("hint: {h}");
            }
            ExitCode::from(exit_code(&err))
        }
    }
}
