//! The `duet` command line: extraction, synthetic data, training,
//! evaluation, gradient checking, and plot-data export over the core
//! pipeline.
//!
//! The binary is a thin wrapper around [`run`], which tests call
//! in-process. Exit codes separate failure classes: 0 success,
//! [`EXIT_CONFIG`] for bad flags or configuration, [`EXIT_DATA`] for
//! unusable inputs or files, [`EXIT_NUMERICAL`] for numerical failures
//! such as divergence or a failed gradient check.

use std::ffi::OsString;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use duet_core::Error;

pub mod commands;
pub mod config;
pub mod dataset;
pub mod manifest;
pub mod report;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

/// Maps an error to the exit code of its failure class.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Usage(_) => EXIT_CONFIG,
        Error::Input(_) | Error::Format(_) | Error::Unsupported(_) | Error::Io { .. } => EXIT_DATA,
        Error::Dim { .. } => EXIT_DATA,
        Error::Numerical(_) | Error::Singular { .. } | Error::Divergence { .. } => EXIT_NUMERICAL,
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "duet",
    version,
    about = "Cross-modal audio/text embeddings: extract, train, evaluate"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Extract spectrogram features from the WAVs of a manifest.
    Extract(commands::extract::ExtractArgs),
    /// Train a model from a manifest of feature files.
    Train(commands::train::TrainArgs),
    /// Evaluate retrieval metrics over a component sweep.
    Eval(commands::eval::EvalArgs),
    /// Verify every analytic gradient against finite differences.
    Gradcheck(commands::gradcheck::GradcheckArgs),
    /// Generate a synthetic dataset in the pipeline's formats.
    Synth(commands::synth::SynthArgs),
    /// Flatten evaluation reports into (series, x, y) triples.
    PlotData(commands::plotdata::PlotDataArgs),
}

/// Parses `args` (argv[0] included) and runs the command, returning the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_CONFIG,
            };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.cmd {
        Cmd::Extract(a) => commands::extract::run(a),
        Cmd::Train(a) => commands::train::run(a),
        Cmd::Eval(a) => commands::eval::run(a),
        Cmd::Gradcheck(a) => commands::gradcheck::run(a),
        Cmd::Synth(a) => commands::synth::run(a),
        Cmd::PlotData(a) => commands::plotdata::run(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_classes_map_to_distinct_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), EXIT_CONFIG);
        assert_eq!(exit_code(&Error::Usage("x".into())), EXIT_CONFIG);
        assert_eq!(exit_code(&Error::Input("x".into())), EXIT_DATA);
        assert_eq!(exit_code(&Error::Format("x".into())), EXIT_DATA);
        assert_eq!(
            exit_code(&Error::Divergence { epoch: 1, batch: 2 }),
            EXIT_NUMERICAL
        );
        assert_eq!(exit_code(&Error::Numerical("x".into())), EXIT_NUMERICAL);
    }

    #[test]
    fn unknown_flags_exit_with_the_config_code() {
        assert_eq!(run(["duet", "train", "--no-such-flag"]), EXIT_CONFIG);
        assert_eq!(run(["duet", "no-such-command"]), EXIT_CONFIG);
    }

    #[test]
    fn help_exits_cleanly() {
        assert_eq!(run(["duet", "--help"]), 0);
        assert_eq!(run(["duet", "eval", "--help"]), 0);
    }
}
