//! Command-line surface over the fidelity laboratory. Every subcommand
//! computes one deterministic artifact (CSV by default) whose leading
//! manifest block records the exact command, normalized arguments, master
//! seed, tool version, and wall time. Reruns with the same arguments and
//! seed reproduce the numeric body byte for byte; only the wall-time line
//! in the `#` block may differ.
//!
//! Exit codes: 0 success, 2 argument or range parse failure, 3 when the
//! distillation SDP stops on a bracket wider than the requested gap (the
//! bracket is still emitted), 1 for anything else.

pub mod commands;
pub mod format;
pub mod manifest;

use std::fmt;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use manifest::{child_seed, resolve_seed, RunManifest};

#[derive(Parser, Debug)]
#[command(name = "qnetlab", version, about = "Deterministic quantum-network fidelity artifacts")]
pub struct Cli {
    /// Master seed; overrides both the default (0) and QNETLAB_SEED.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Evaluate the teleportation protocols for one noise pair.
    Teleport(commands::teleport::TeleportArgs),
    /// Fidelity of repeater chains over a range of link counts.
    Repeater(commands::repeater::RepeaterArgs),
    /// Sampled isotropic twirling quality versus unitary count.
    TwirlApprox(commands::twirl::TwirlArgs),
    /// Metric values over a (p, q) noise-parameter grid.
    Sweep(commands::sweep::SweepArgs),
}

/// Rendered artifact plus where it goes and how the process should exit.
pub struct CommandOutcome {
    pub body: String,
    pub out: Option<PathBuf>,
    pub exit: i32,
}

#[derive(Debug)]
pub enum CliError {
    /// User input failed validation; exits 2.
    Parse(String),
    /// A computation failed after inputs were accepted; exits 1.
    Lib(qnetlab::Error),
    Io(std::io::Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Parse(msg) => write!(f, "{msg}"),
            CliError::Lib(err) => write!(f, "{err}"),
            CliError::Io(err) => write!(f, "{err}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<qnetlab::Error> for CliError {
    fn from(err: qnetlab::Error) -> Self {
        CliError::Lib(err)
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Io(err)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) => 2,
            _ => 1,
        }
    }
}

/// Dispatches a parsed command, writes its artifact, and returns the exit
/// code the process should use.
pub fn run(cli: Cli) -> Result<i32, CliError> {
    let seed = resolve_seed(cli.seed)?;
    let outcome = match &cli.command {
        Command::Teleport(args) => commands::teleport::run(args, seed)?,
        Command::Repeater(args) => commands::repeater::run(args, seed)?,
        Command::TwirlApprox(args) => commands::twirl::run(args, seed)?,
        Command::Sweep(args) => commands::sweep::run(args, seed)?,
    };
    match &outcome.out {
        Some(path) => std::fs::write(path, &outcome.body)?,
        None => std::io::stdout().write_all(outcome.body.as_bytes())?,
    }
    Ok(outcome.exit)
}
