use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use genil::commands::{describe, exit_code};
use genil::{ExperimentConfig, Run};

#[derive(Parser)]
#[command(name = "genil", about = "Genetic imitation learning experiments on toy environments")]
struct Cli {
    /// TOML experiment configuration; defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Record the two demonstrations and the evaluation set.
    GenDemos,
    /// Grow the ranked dataset from the demonstrations.
    Reproduce,
    /// Fit the reward network on snippet pairs.
    TrainReward,
    /// Derive a policy from the learned reward.
    TrainPolicy,
    /// Extrapolation metrics and the GenIL policy table row.
    Evaluate,
    /// All methods on the same demonstrations and evaluation set.
    Compare,
    /// Policy spread over crossover step sizes.
    Sweep,
    /// Every stage in order.
    RunAll,
}

fn run(cli: &Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    let threads = genil::thread_count()?;
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()?;
    let mut run = Run::new(cfg);
    run.quiet = cli.quiet;
    match cli.command {
        Command::GenDemos => run.gen_demos(),
        Command::Reproduce => run.reproduce(),
        Command::TrainReward => run.train_reward(),
        Command::TrainPolicy => run.train_policy(),
        Command::Evaluate => run.evaluate(),
        Command::Compare => run.compare(),
        Command::Sweep => run.sweep(),
        Command::RunAll => run.run_all(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", describe(&err));
            ExitCode::from(exit_code(&err) as u8)
        }
    }
}
