mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use settings::{read_config, EnhanceArgs, EvalArgs, SynthArgs, TrainArgs};

/// Audio-articulatory speech enhancement experiments.
#[derive(Parser, Debug)]
#[command(name = "aamse", version)]
struct Cli {
    /// TOML file with settings for the chosen command; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic paired audio/track corpus and its manifest.
    Synth(SynthArgs),
    /// Train a model on the training split of a manifest.
    Train(TrainArgs),
    /// Enhance every test row of a manifest.
    Enhance(EnhanceArgs),
    /// Score systems on the test split and write reports.
    Eval(EvalArgs),
}

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<aamse::Error> for Failure {
    fn from(e: aamse::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn merged<T: Default + for<'de> serde::Deserialize<'de>>(
    config: &Option<PathBuf>,
    args: T,
    overlay: fn(T, T) -> T,
) -> Result<T, Failure> {
    match config {
        Some(path) => Ok(overlay(args, read_config(path)?)),
        None => Ok(args),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Synth(a) => commands::synth(merged(&cli.config, a, SynthArgs::overlay)?),
        Command::Train(a) => commands::train(merged(&cli.config, a, TrainArgs::overlay)?),
        Command::Enhance(a) => commands::enhance(merged(&cli.config, a, EnhanceArgs::overlay)?),
        Command::Eval(a) => commands::eval(merged(&cli.config, a, EvalArgs::overlay)?),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("AAMSE_LOG", "info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
    }
}
