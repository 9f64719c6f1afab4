//! `rdsym`: verification, catalog, transformation, reduction and solver workflows.
//!
//! Exit codes: 0 pass, 1 verified nonzero or constraint failure, 2 usage or input error.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub const DEFAULT_SEED: u64 = 20_240_101;

#[derive(Parser, Debug)]
#[command(name = "rdsym", version, about = "Conditional symmetries, reductions and exact solutions of reaction-diffusion systems")]
pub struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, env = "RDSYM_SEED", default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Output format; each command has its own default.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Write the result here instead of stdout.
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Check an operator against a system.
    Verify(VerifyArgs),
    /// The classification catalog.
    #[command(subcommand)]
    Catalog(CatalogCommand),
    /// Apply a form-preserving map to a system.
    Transform(TransformArgs),
    /// Reduce the `omega = u^{-k}(v - u)` family to ODEs.
    Reduce(ReduceArgs),
    /// Evaluate an exact solution on a grid.
    Exact(ExactArgs),
    /// Integrate numerically from an exact initial state.
    Solve(SolveArgs),
    /// Compare the integrator with an exact solution and study convergence.
    Compare(CompareArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum CheckType {
    /// Classical Lie symmetry.
    Lie,
    /// Conditional symmetry of the first type (one invariant-surface condition).
    First,
    /// Conditional symmetry of the second type (both conditions).
    Second,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Field {
    U,
    V,
}

#[derive(Args, Debug, Clone)]
pub struct Tolerances {
    /// Scale-free residual tolerance.
    #[arg(long, default_value_t = 1e-9)]
    pub tolerance: f64,
    /// Sample points per equation and realization.
    #[arg(long, default_value_t = 200)]
    pub samples: usize,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// JSON file `{"d", "c1", "c2", "params"?}`.
    #[arg(long)]
    pub system: PathBuf,
    /// JSON file `{"xi0", "xi1", "eta1", "eta2", "params"?}`.
    #[arg(long)]
    pub operator: PathBuf,
    #[arg(long = "type", value_enum, default_value_t = CheckType::First)]
    pub check: CheckType,
    /// Field whose invariant-surface condition is adjoined for `--type first`.
    #[arg(long, value_enum, default_value_t = Field::U)]
    pub manifold: Field,
    #[command(flatten)]
    pub tol: Tolerances,
}

#[derive(Subcommand, Debug)]
pub enum CatalogCommand {
    /// One line per entry.
    List,
    /// Templates of one entry.
    Show { id: u32 },
    /// Verify one entry with given or random parameters.
    Verify {
        id: u32,
        /// JSON `{"values": {...}, "functions": {...}, "initial_conditions": {...}}`.
        #[arg(long)]
        params: Option<PathBuf>,
        #[command(flatten)]
        tol: Tolerances,
    },
    /// Verify every entry on random parameter draws.
    Sweep {
        #[arg(long, default_value_t = 3)]
        trials: usize,
        #[command(flatten)]
        tol: Tolerances,
    },
}

#[derive(Args, Debug)]
pub struct TransformArgs {
    #[arg(long)]
    pub system: PathBuf,
    /// JSON `{"set", "alpha", "beta", "gamma", "f", "g", "P", "Q"}`.
    #[arg(long)]
    pub map: PathBuf,
    /// Tolerance of the (t, x)-independence check.
    #[arg(long, default_value_t = 1e-8)]
    pub tolerance: f64,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum ReduceFamily {
    Case1,
    PowerLaw,
    LinearInteraction,
}

#[derive(Args, Debug)]
pub struct ReduceArgs {
    #[arg(long, value_enum, default_value_t = ReduceFamily::Case1)]
    pub family: ReduceFamily,
    /// `f` as an expression in `w` (case1 only; opaque when absent).
    #[arg(long)]
    pub f: Option<String>,
    /// `g` as an expression in `w` (case1 only; opaque when absent).
    #[arg(long)]
    pub g: Option<String>,
    #[arg(long, default_value = "alpha")]
    pub alpha: String,
    #[arg(long, default_value = "k")]
    pub k: String,
    #[arg(long, default_value = "d")]
    pub d: String,
    /// Power-law `beta`.
    #[arg(long, default_value = "beta")]
    pub beta: String,
    /// Power-law `gamma`.
    #[arg(long, default_value = "gamma")]
    pub gamma: String,
    /// Linear-interaction `a1`.
    #[arg(long, default_value = "a1")]
    pub a1: String,
    /// Linear-interaction `b`.
    #[arg(long, default_value = "b")]
    pub b: String,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum ExactFamily {
    PredatorPrey,
    Cosine,
    TanProfile,
    TanhProfile,
}

#[derive(Args, Debug, Clone)]
pub struct FamilyArgs {
    #[arg(long, value_enum, default_value_t = ExactFamily::PredatorPrey)]
    pub family: ExactFamily,
    /// Parameter JSON; the reference set is used when absent.
    #[arg(long)]
    pub params: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ExactArgs {
    #[command(flatten)]
    pub family: FamilyArgs,
    #[arg(long, default_value_t = 10.0)]
    pub t_end: f64,
    #[arg(long, default_value_t = 101)]
    pub nt: usize,
    #[arg(long, default_value_t = 101)]
    pub nx: usize,
    /// Random points for the residual check in JSON output.
    #[arg(long, default_value_t = 1000)]
    pub residual_samples: usize,
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    /// System JSON with numeric parameters; the solution's own system when absent.
    #[arg(long)]
    pub system: Option<PathBuf>,
    /// Initial state, `exact:<family>`.
    #[arg(long, default_value = "exact:predator-prey")]
    pub ic: String,
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long, default_value_t = 128)]
    pub n: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub dt: f64,
    #[arg(long, default_value_t = 0.5)]
    pub t_end: f64,
    /// Run a convergence study with this many levels instead of one solve.
    #[arg(long)]
    pub levels: Option<usize>,
    /// Snapshot times for the CSV trajectory, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub outputs: Vec<f64>,
    /// Skip the `dt <= 0.25 / L` reaction stability check.
    #[arg(long)]
    pub no_stability_check: bool,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    #[command(flatten)]
    pub family: FamilyArgs,
    #[arg(long, default_value_t = 128)]
    pub n: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub dt: f64,
    #[arg(long, default_value_t = 0.5)]
    pub t_end: f64,
    /// Max-norm error bound for the single comparison.
    #[arg(long, default_value_t = 5e-4)]
    pub bound: f64,
    #[arg(long, default_value_t = 4)]
    pub levels: usize,
    #[arg(long, default_value_t = 16)]
    pub base_n: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub base_dt: f64,
    /// Accepted band of observed orders.
    #[arg(long, num_args = 2, default_values_t = [1.85, 2.15])]
    pub order_band: Vec<f64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(&cli) {
        Ok(outcome) => ExitCode::from(outcome.code()),
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
