//! Batch front-end: configuration loading, the experiment commands and the
//! acceptance suite.

pub mod acceptance;
pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::Path;

use clap::Subcommand;

pub use config::{LoadedConfig, RunConfig};
pub use error::{CliError, ConfigError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Single trajectory and its projection (plus an optional ensemble).
    Simulate,
    /// ε-sweep against the limit forward equation.
    Converge,
    /// Dual functionals over the ε-sweep and the limit path.
    Duality,
    /// Action/period tables and the graph description.
    Coefficients,
    /// Runs the acceptance suite.
    Acceptance,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Converge => "converge",
            Command::Duality => "duality",
            Command::Coefficients => "coefficients",
            Command::Acceptance => "acceptance",
        }
    }
}

/// Runs one command and writes its outputs to `dir`.
pub fn run_command(cmd: Command, cfg: &LoadedConfig, dir: &Path) -> Result<()> {
    let mut out = output::OutputDir::create(dir, &cfg.source)?;
    let c = &cfg.config;
    match cmd {
        Command::Simulate => {
            commands::cmd_simulate(c, &mut out)?;
        }
        Command::Converge => {
            commands::cmd_converge(c, &mut out)?;
        }
        Command::Duality => {
            commands::cmd_duality(c, &mut out)?;
        }
        Command::Coefficients => commands::cmd_coefficients(c, &mut out)?,
        Command::Acceptance => {
            let outcomes = acceptance::run_suite(&mut |o| println!("{}", o.line()));
            out.write_json("acceptance.json", "acceptance", &outcomes)?;
            let unexpected = outcomes.iter().filter(|o| o.status() == acceptance::Status::Fail).count();
            if unexpected > 0 {
                return Err(CliError::Acceptance(unexpected));
            }
        }
    }
    Ok(())
}

/// Runs `f` on a pool of `threads` workers.
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| CliError::Io(e.to_string()))?;
    Ok(pool.install(f))
}
