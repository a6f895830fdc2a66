//! `surro`: generate labelled data, train cut coefficients, evaluate and benchmark.

mod commands;
mod config;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "surro", version, about = "Decision-focused surrogate LPs for parametric MILPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample inputs and label them with the exact MILP
    Gen(Overrides),
    /// Train cut coefficients on the training split
    Train(Overrides),
    /// Evaluate a trained surrogate on the test split
    Eval(Overrides),
    /// Time MILP_FULL, DFSOM and MILP_TO_TARGET on the test inputs
    Bench(Overrides),
    /// Walk through the published three-cut knapsack surrogate
    Demo(Overrides),
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let (name, o) = match &cli.command {
        Command::Gen(o) => ("gen", o),
        Command::Train(o) => ("train", o),
        Command::Eval(o) => ("eval", o),
        Command::Bench(o) => ("bench", o),
        Command::Demo(o) => ("demo", o),
    };
    let cfg = RunConfig::resolve(o)?;
    log::info!("{name}: {cfg:?}");
    match cli.command {
        Command::Gen(_) => commands::gen(&cfg)?,
        Command::Train(_) => {
            if !commands::train_cmd(&cfg)? {
                return Ok(ExitCode::from(2));
            }
        }
        Command::Eval(_) => commands::eval(&cfg)?,
        Command::Bench(_) => commands::bench_cmd(&cfg)?,
        Command::Demo(_) => commands::demo(&cfg)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SURRO_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
