use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cmdtriage_cli::commands::{cmd_calibrate, cmd_eval, cmd_simulate, cmd_triage, CalibrateArgs, EvalArgs, SimulateArgs, TriageArgs};
use cmdtriage_cli::serve::{serve, AppState};
use cmdtriage_cli::{CliError, LoadedConfig, EXIT_ERROR};
use tracing_subscriber::EnvFilter;

/// Triage natural-language robot commands as clear, ambiguous or infeasible.
#[derive(Debug, Parser)]
#[command(name = "cmdtriage", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Classify one command against a scene. Exit code 0 clear, 10 ambiguous,
    /// 11 infeasible, 1 error.
    Triage(TriageArgs),
    /// Score a labelled dataset (AUROC or three-way accuracy).
    Eval(EvalArgs),
    /// Run a batch of simulated tabletop episodes.
    Simulate(SimulateArgs),
    /// Choose epsilon on a labelled validation set.
    Calibrate(CalibrateArgs),
    /// Serve the session API for the console.
    Serve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
    },
}

fn run(cli: Cli) -> Result<i32, CliError> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let code = match cli.command {
        Command::Triage(args) => cmd_triage(&args, &mut out)?,
        Command::Eval(args) => cmd_eval(&args, &mut out)?,
        Command::Simulate(args) => cmd_simulate(&args, &mut out)?,
        Command::Calibrate(args) => cmd_calibrate(&args, &mut out)?,
        Command::Serve { config, port, host } => {
            let loaded = LoadedConfig::load(&config)?;
            let app = AppState::new(loaded.pipeline()?, loaded.config.triage.clone());
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(serve(app, SocketAddr::new(host, port)))?;
            0
        }
    };
    out.flush()?;
    Ok(code)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    // usage errors share the generic error exit code
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(EXIT_ERROR as u8);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}
