//! `echoseg` — full experiment lifecycle for the synthetic LV segmentation
//! benchmark: dataset generation, patient-disjoint splitting, training,
//! evaluation, scenario analysis and report rendering.
//!
//! Exit codes: 0 success, 1 validation error (bad flags, missing inputs),
//! 2 runtime failure.

mod commands;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use commands::{
    evaluate, report, scenarios, split, synth_gen, train, AppError, EvaluateArgs, ReportArgs,
    ScenariosArgs, SplitArgs, SynthGenArgs, TrainArgs,
};

#[derive(Parser)]
#[command(
    name = "echoseg",
    version,
    about = "Benchmark encoder-decoder LV segmentation on synthetic echo phantoms"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a deterministic synthetic phantom dataset
    SynthGen(SynthGenArgs),
    /// Assign patients to train/val/test groups in the manifest
    Split(SplitArgs),
    /// Train one architecture variant on one operator's annotations
    Train(TrainArgs),
    /// Predict a split with a checkpoint and score it per frame
    Evaluate(EvaluateArgs),
    /// Compute the model benchmark and the five comparison scenarios
    Scenarios(ScenariosArgs),
    /// Render the summary tables and collect overlays
    Report(ReportArgs),
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // --help / --version exit 0; flag problems are validation errors.
            if matches!(err.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = err.print();
                std::process::exit(0);
            }
            let _ = err.print();
            std::process::exit(1);
        }
    };

    if let Err(err) = dispatch(cli) {
        match err {
            AppError::Validation(msg) => {
                eprintln!("error: {msg}");
                std::process::exit(1);
            }
            AppError::Runtime(msg) => {
                eprintln!("error: {msg}");
                std::process::exit(2);
            }
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), AppError> {
    commands::check_device_env()?;
    match cli.command {
        Command::SynthGen(args) => synth_gen(args),
        Command::Split(args) => split(args),
        Command::Train(args) => train(args),
        Command::Evaluate(args) => evaluate(args),
        Command::Scenarios(args) => scenarios(args),
        Command::Report(args) => report(args),
    }
}
