//! `uncq`: train, calibrate, explain, evaluate, lmi and report from one
//! JSON config, with flag overrides.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use uncq::attribution::Method;

mod commands;

use commands::Failure;

#[derive(Parser, Debug)]
#[command(name = "uncq", version, about = "Uncertain-word explanations for calibrated text classifiers")]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand. Flags win over the config file.
#[derive(Args, Debug, Default)]
pub struct Overrides {
    /// JSON run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Built-in model file (default: <out>/model.json).
    #[arg(long, global = true, value_name = "PATH")]
    pub model: Option<PathBuf>,
    /// Attribution method: loo or ss (sampling Shapley).
    #[arg(long, global = true, value_parser = parse_method)]
    pub method: Option<Method>,
    /// Sampling Shapley sample count M.
    #[arg(long, global = true, value_name = "M")]
    pub samples: Option<usize>,
    /// Seed for the explainer and the evaluation sample.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Important words kept per digest.
    #[arg(long, global = true)]
    pub k_imp: Option<usize>,
    /// Uncertain words kept per digest.
    #[arg(long, global = true)]
    pub k_unc: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: uncq::Error| e.to_string())
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train the built-in model and save it.
    Train,
    /// Fit the temperature on dev; write calibration.json.
    Calibrate,
    /// Explain examples; write attributions.jsonl, digests.jsonl, report.html.
    Explain {
        /// Comma-separated example ids from the corpus (default: the test split).
        #[arg(long, value_delimiter = ',')]
        ids: Vec<String>,
        /// Explain the examples in this corpus file instead.
        #[arg(long, value_name = "PATH", conflicts_with = "ids")]
        input: Option<PathBuf>,
        /// Calibration to apply (default: <out>/calibration.json).
        #[arg(long, value_name = "PATH")]
        calibration: Option<PathBuf>,
    },
    /// Uncertain- and important-word removal on the test split.
    Evaluate {
        #[arg(long, value_name = "PATH")]
        calibration: Option<PathBuf>,
    },
    /// LMI statistics over digests; write lmi.csv.
    Lmi {
        /// Digests to tally (default: <out>/digests.jsonl).
        #[arg(long, value_name = "PATH")]
        digests: Option<PathBuf>,
    },
    /// Run the whole pipeline and export every artifact.
    Report,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("UNCQ_LOG", "warn"))
        .format_timestamp(None)
        .init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli.command, &cli.overrides) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(err)) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
    }
}
