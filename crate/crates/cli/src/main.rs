//! `ergon`: scans, experiments and bound reports for energy-preserving gates.
//!
//! Exit codes: 0 success, 1 partial scan failure or failed verification,
//! 2 invalid input, 3 solver did not converge (the report is still written).

mod commands;
mod output;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "ergon",
    version,
    about = "Energy-preserving gate implementations powered by a quantum battery"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Worst-case fidelity and bounds for one gate at one battery size.
    Simulate(SimulateArgs),
    /// Worst-case infidelity over a grid of battery sizes.
    Scan(ScanArgs),
    /// Run a circuit file on one shared battery.
    Circuit(CircuitArgs),
    /// Evaluate the resource bounds at given target errors.
    Bounds(BoundsArgs),
    /// Run the invariant suite; nonzero exit on any failure.
    Verify(VerifyArgs),
}

#[derive(Args, Debug, Clone)]
pub struct GateArgs {
    /// Built-in gate name (I, X, Y, Z, H, S, T, CNOT, CZ, SWAP, QFT1..QFT10).
    #[arg(long, conflicts_with = "gate_file")]
    pub gate: Option<String>,
    /// JSON matrix file `{"dim": d, "matrix": [[[re, im], ...], ...]}`.
    #[arg(long)]
    pub gate_file: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct OutArgs {
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub gate: GateArgs,
    #[arg(long = "R")]
    pub r: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug, Clone, Copy)]
pub struct SolverArgs {
    /// Random probes used to cross-check the solver.
    #[arg(long, default_value_t = 2000)]
    pub probes: usize,
    /// Convergence threshold on the Frank-Wolfe gap.
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    #[arg(long, default_value_t = 5000)]
    pub max_iter: usize,
}

#[derive(Args, Debug)]
pub struct ScanArgs {
    /// Comma-separated built-in gate names; ignored with --gate-file.
    #[arg(long, value_delimiter = ',', conflicts_with = "gate_file")]
    pub gate: Vec<String>,
    #[arg(long)]
    pub gate_file: Option<PathBuf>,
    /// Battery sizes as `start:stop:step` (inclusive).
    #[arg(long)]
    pub scan: Option<String>,
    /// Explicit comma-separated battery sizes, added to --scan.
    #[arg(long = "R", value_delimiter = ',')]
    pub r: Vec<u32>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Quantum,
    Classical,
    Alternating,
}

#[derive(Args, Debug)]
pub struct CircuitArgs {
    /// Circuit file `{"qubits": n, "gates": [{"name": "H", "targets": [0]}, ...]}`.
    #[arg(long)]
    pub file: Option<PathBuf>,
    #[arg(long = "R")]
    pub r: u32,
    #[arg(long, value_enum, default_value_t = Mode::Quantum)]
    pub mode: Mode,
    /// Basis input index (quantum and classical modes).
    #[arg(long, default_value_t = 0)]
    pub input: usize,
    /// Total energy for classical mode; defaults to the smallest valid value.
    #[arg(long)]
    pub energy: Option<u32>,
    /// Rounds of the alternating experiment (2m copies).
    #[arg(long, default_value_t = 1)]
    pub m: u32,
    /// Gate for alternating mode; defaults to the composed circuit unitary.
    #[command(flatten)]
    pub gate: GateArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Measure {
    Energy,
    CapacityComplement,
    Coherence,
}

#[derive(Args, Debug)]
pub struct BoundsArgs {
    #[command(flatten)]
    pub gate: GateArgs,
    /// Comma-separated target infidelities.
    #[arg(long, value_delimiter = ',', required = true)]
    pub epsilon: Vec<f64>,
    #[arg(long, value_enum, default_value_t = Measure::Energy)]
    pub measure: Measure,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Failure with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn invalid(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<ergon_core::Error> for Failure {
    fn from(e: ergon_core::Error) -> Self {
        Self::invalid(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::invalid(e.to_string())
    }
}

/// Outcome of a command that produced its output.
pub enum Status {
    Ok,
    NotConverged,
    PartialFailure,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Scan(a) => commands::scan(&a),
        Command::Circuit(a) => commands::circuit(&a),
        Command::Bounds(a) => commands::bounds(&a),
        Command::Verify(a) => verify::run(a.seed),
    };
    match result {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::NotConverged) => {
            eprintln!("warning: worst-case solver did not converge; report flagged");
            ExitCode::from(3)
        }
        Ok(Status::PartialFailure) => ExitCode::from(1),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
