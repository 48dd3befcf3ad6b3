mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mdpjls_core::lyapunov::DEFAULT_BISECT_TOL;
use mdpjls_core::{Discretization, Method};

/// Stabilizing policy synthesis for switched linear systems whose mode is
/// driven by a Markov decision process.
#[derive(Debug, Parser)]
#[command(name = "mdpjls", version)]
struct Cli {
    /// Print machine-readable JSON on standard output.
    #[arg(long, global = true)]
    json: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse and check a model document.
    Validate { model: PathBuf },

    /// Stationary statistics and mean-square verdict of a fixed policy.
    Analyze {
        model: PathBuf,
        #[arg(long)]
        policy: PathBuf,
    },

    /// Per-mode decay and jump coefficients.
    Coefficients {
        model: PathBuf,
        #[arg(long, default_value_t = DEFAULT_BISECT_TOL)]
        bisect_tol: f64,
        #[arg(long)]
        discretization: Option<Discretization>,
        /// Write the certificate document here.
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Synthesize a stabilizing policy.
    Synthesize {
        model: PathBuf,
        #[arg(long)]
        method: Method,
        /// Uniform decay coefficient (with --mu).
        #[arg(long, requires = "mu")]
        alpha: Option<f64>,
        /// Uniform jump coefficient (with --alpha).
        #[arg(long, requires = "alpha")]
        mu: Option<f64>,
        /// Certificate document written by `coefficients`.
        #[arg(long, conflicts_with = "alpha")]
        cert: Option<PathBuf>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        max_iter: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_BISECT_TOL)]
        bisect_tol: f64,
        #[arg(long)]
        discretization: Option<Discretization>,
        /// Write the synthesis report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Check the robust condition of a policy for every Δ-approximation.
    VerifyRobust {
        model: PathBuf,
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        delta: f64,
        #[arg(long, conflicts_with = "alpha")]
        cert: Option<PathBuf>,
        #[arg(long, requires = "mu")]
        alpha: Option<f64>,
        #[arg(long, requires = "alpha")]
        mu: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_BISECT_TOL)]
        bisect_tol: f64,
    },

    /// Monte Carlo trajectories under a policy.
    Simulate {
        model: PathBuf,
        #[arg(long)]
        policy: PathBuf,
        #[arg(long, default_value_t = 1000)]
        steps: usize,
        #[arg(long, default_value_t = 100)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Keep every k-th step in the traces.
        #[arg(long, default_value_t = 1)]
        stride: usize,
        /// Write one CSV trace per run into this directory.
        #[arg(long)]
        traces: Option<PathBuf>,
        /// Check each step against this certificate.
        #[arg(long)]
        cert: Option<PathBuf>,
        /// Write the full simulation report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Randomized comparison of the synthesis methods.
    Study {
        spec: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn configure_threads() -> Result<(), commands::CliError> {
    let Ok(value) = std::env::var("MDPJLS_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| commands::CliError::Usage(format!("MDPJLS_THREADS must be a positive integer, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| commands::CliError::Usage(e.to_string()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { commands::EXIT_INPUT } else { 0 });
        }
    };
    let result = configure_threads().and_then(|_| commands::run(cli.command, cli.json));
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            if cli.json {
                println!("{}", serde_json::json!({ "status": "error", "message": e.to_string() }));
            }
            ExitCode::from(e.exit_code())
        }
    }
}
