use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use nlcg::harness::{self, RunConfig, SweepAxis};
use nlcg::OptimizerKind;

#[derive(Parser)]
#[command(name = "nlcg", version, about = "Train and compare NLCG against SGD-family optimizers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one training job and write its per-step CSV.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a grid over batch size or epochs, optimizers and seeds.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// batch_size or epochs
        #[arg(long)]
        axis: SweepAxis,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true)]
        optimizers: Vec<OptimizerKind>,
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seeds: Vec<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(path: &PathBuf, out: Option<PathBuf>) -> Result<RunConfig> {
    let mut config = RunConfig::from_file(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(out) = out {
        config.output_dir = out;
    }
    Ok(config)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.6}"))
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, seed, out } => {
            let mut config = load(&config, out)?;
            if let Some(seed) = seed {
                config.seed = seed;
            }
            let record = harness::run(&config)?;
            let s = &record.summary;
            println!(
                "{} seed {}: {}/{} steps, final loss {}, train accuracy {}, test accuracy {}{}",
                s.optimizer,
                s.seed,
                s.steps_completed,
                s.total_steps,
                opt(s.final_loss),
                opt(s.final_train_accuracy),
                opt(s.final_test_accuracy),
                if s.diverged { ", diverged" } else { "" },
            );
            println!("{}", s.csv_path.display());
        }
        Command::Sweep {
            config,
            axis,
            values,
            optimizers,
            seeds,
            out,
        } => {
            let config = load(&config, out)?;
            let outcome = harness::sweep(&config, axis, &values, &optimizers, &seeds)?;
            for p in &outcome.points {
                println!(
                    "{axis}={} {}: {}/{} completed, {} diverged, {} failed, loss {} ± {}",
                    p.value,
                    p.optimizer,
                    p.completed,
                    p.runs,
                    p.diverged,
                    p.failed,
                    opt(p.final_loss.map(|x| x.0)),
                    opt(p.final_loss.map(|x| x.1)),
                );
            }
            println!("{}", outcome.summary_path.display());
        }
    }
    Ok(())
}
