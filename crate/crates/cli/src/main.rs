use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use tracing_subscriber::EnvFilter;

use opaque_core::config::ExperimentConfig;
use opaque_core::Error;
use opaque_games_cli::{cmd_classify, cmd_oracle, cmd_play, cmd_solve, cmd_sweep, serve, AppState, Overrides};

/// Opacity analysis and live play for human-robot games with a hidden robot type.
#[derive(Parser)]
#[command(name = "opaque-games", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve every root and write values and profiles as JSON.
    Solve(Common),
    /// Classify every root as fully opaque, rationally opaque or revealing.
    Classify(Common),
    /// Percentages of opaque roots per horizon and rate, as CSV.
    Sweep(Common),
    /// Check solver values against brute-force expectimax.
    Oracle {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1e-9)]
        tolerance: f64,
    },
    /// Run the HTTP session service.
    Serve {
        #[command(flatten)]
        common: Common,
        /// Overrides `service.port` from the config.
        #[arg(long)]
        port: Option<u16>,
    },
    /// Play one session in the terminal.
    Play(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Worker threads (default: all processors).
    #[arg(long)]
    jobs: Option<usize>,
    /// Output file; overrides the config's output paths.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    rate: Option<f64>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, Error> {
        if let Some(n) = self.jobs {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| Error::Config(format!("--jobs: {e}")))?;
        }
        let mut cfg = ExperimentConfig::from_path(&self.config)?;
        Overrides { horizon: self.horizon, rate: self.rate }.apply(&mut cfg)?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let mut stdout = std::io::stdout().lock();
    match cli.command {
        Command::Solve(c) => {
            cmd_solve(&c.load()?, c.out.as_deref())?;
        }
        Command::Classify(c) => {
            cmd_classify(&c.load()?, c.out.as_deref(), &mut stdout)?;
        }
        Command::Sweep(c) => {
            cmd_sweep(&c.load()?, c.out.as_deref())?;
        }
        Command::Oracle { common, tolerance } => {
            let report = cmd_oracle(&common.load()?, tolerance, &mut stdout)?;
            if let Some(path) = &common.out {
                std::fs::write(path, serde_json::to_string_pretty(&report)?)?;
            }
            if report.failures() > 0 {
                return Err(Error::Spec(format!("{} roots disagree with the oracle", report.failures())));
            }
        }
        Command::Serve { common, port } => {
            let cfg = common.load()?;
            let state = Arc::new(AppState::from_config(&cfg)?);
            let port = port.unwrap_or(cfg.service.port);
            tokio::runtime::Runtime::new()?.block_on(serve(state, port))?;
        }
        Command::Play(c) => {
            let cfg = c.load()?;
            let record = cmd_play(&cfg, &mut std::io::stdin().lock(), &mut stdout)?;
            if let (Some(path), Some(record)) = (&c.out, record) {
                std::fs::write(path, serde_json::to_string_pretty(&record)?)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_env("OPAQUE_GAMES_LOG").unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", json!({"error": e.kind(), "message": e.to_string()}));
            ExitCode::FAILURE
        }
    }
}
