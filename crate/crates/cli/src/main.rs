//! `annealtherm`: runs thermal-reference, master-equation and protocol
//! experiments from a TOML config and writes CSV tables with metadata.
//!
//! Exit codes: 0 success, 1 invalid config or protocol violations,
//! 2 runtime failure, 3 some sweep cells failed.

mod commands;
mod config;
mod output;

use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use thiserror::Error;

use commands::{Outcome, Status};
use config::Config;
use output::RunInfo;

const THREADS_ENV: &str = "ANNEALTHERM_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "annealtherm", version, about = "Thermal-sampling experiments for the transverse-field Ising chain")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Exact (ED or free-fermion) thermal expectations over an s grid.
    Exact(Common),
    /// Path-integral Monte Carlo thermal expectations over an s grid.
    Qmc(Common),
    /// One master-equation trajectory of a pause-and-quench protocol.
    AmeEvolve(Common),
    /// Post-quench Ising energy over pause points and quench rates.
    QuenchSweep(Common),
    /// Minimal quench rate for a bounded propagator norm, against n.
    NormScaling(Common),
    /// Thermal expectations over a list of temperatures.
    TempSweep(Common),
    /// Checks protocols against the device timing limits.
    ProtocolCheck(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// TOML experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.directory`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed; overrides `seed`.
    #[arg(long)]
    seed: Option<u64>,
}

type Runner = fn(&Config, &Path) -> Result<Outcome, CliError>;

impl Command {
    fn parts(&self) -> (&'static str, &Common, Runner) {
        match self {
            Command::Exact(c) => ("exact", c, commands::exact),
            Command::Qmc(c) => ("qmc", c, commands::qmc),
            Command::AmeEvolve(c) => ("ame-evolve", c, commands::ame_evolve),
            Command::QuenchSweep(c) => ("quench-sweep", c, commands::quench_sweep_cmd),
            Command::NormScaling(c) => ("norm-scaling", c, commands::norm_scaling),
            Command::TempSweep(c) => ("temp-sweep", c, commands::temp_sweep),
            Command::ProtocolCheck(c) => ("protocol-check", c, commands::protocol_check),
        }
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(text) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = text
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| CliError::Validation(format!("{THREADS_ENV} must be a positive integer, got `{text}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))
}

fn run(cmd: &Command) -> Result<Status, CliError> {
    let (name, common, runner) = cmd.parts();
    configure_threads()?;
    let text = std::fs::read_to_string(&common.config)
        .map_err(|e| CliError::Validation(format!("{}: {e}", common.config.display())))?;
    let mut cfg = Config::from_str(&text)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    let base = common.config.parent().unwrap_or(Path::new("."));
    let out_dir = match &common.out {
        Some(dir) => dir.clone(),
        None => base.join(&cfg.output.directory),
    };
    let outcome = runner(&cfg, base)?;
    let info = RunInfo { command: name, config_path: &common.config, config_text: &text, seed: cfg.seed };
    for path in output::write_tables(&out_dir, &outcome.tables, &info)? {
        println!("wrote {}", path.display());
    }
    Ok(outcome.status)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(Status::Complete) => ExitCode::SUCCESS,
        Ok(Status::Partial { failed, total }) => {
            eprintln!("{failed} of {total} sweep cells failed");
            ExitCode::from(3)
        }
        Ok(Status::Violations(count)) => {
            eprintln!("{count} protocol constraint violation(s)");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
