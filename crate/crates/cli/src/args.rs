use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use rough_core::convergence::Solver;
use rough_core::noise::Enhancement;
use rough_core::presets::Preset;

#[derive(Debug, Parser, Serialize)]
#[command(name = "rough", version, about = "Rough-path lifts, integrals and rough differential equations")]
pub struct Cli {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Worker threads for Monte-Carlo samples (default: all cores).
    #[arg(long, global = true)]
    #[serde(skip)]
    pub jobs: Option<usize>,

    /// Output file; `-` writes to stdout.
    #[arg(long, short, global = true)]
    #[serde(skip)]
    pub out: Option<PathBuf>,

    /// Directory for outputs when `--out` is absent.
    #[arg(long, global = true, env = "ROUGH_OUT_DIR")]
    #[serde(skip)]
    pub out_dir: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
pub enum Command {
    /// Piecewise-linear lift of a CSV path or of a generator expression.
    Lift(LiftArgs),
    /// Sample an enhanced Brownian motion.
    Enhance(SampleArgs),
    /// Rough integral with a closed-form check.
    Integrate(IntegrateArgs),
    /// One-parameter bracket of a rough path.
    Bracket(BracketArgs),
    /// Solve a preset rough differential equation.
    Solve(SolveArgs),
    /// Solve a semilinear equation `dY = AY dt + f(Y) dX` in mild form.
    SolveRpde(RpdeArgs),
    /// Strong-error study over a ladder of step sizes.
    Convergence(ConvergenceArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Args, Serialize)]
pub struct LiftArgs {
    /// CSV with header `t,x1,...,xd`.
    #[arg(long, conflicts_with = "generator", required_unless_present = "generator")]
    pub input: Option<PathBuf>,

    /// Comma-separated component expressions in `t`, e.g. "t,t^2".
    #[arg(long)]
    pub generator: Option<String>,

    #[arg(long, default_value_t = 1024)]
    pub steps: usize,

    #[arg(long, default_value_t = 1.0)]
    pub horizon: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SampleArgs {
    #[arg(long, default_value_t = 1)]
    pub dim: usize,

    #[arg(long, default_value_t = 1024)]
    pub steps: usize,

    #[arg(long, default_value_t = 1.0)]
    pub horizon: f64,

    /// Fine Brownian steps per coarse step.
    #[arg(long, default_value_t = rough_core::noise::DEFAULT_OVERSAMPLE)]
    pub oversample: usize,

    #[arg(long, default_value = "strat", value_parser = known::<Enhancement>)]
    pub enhancement: String,

    /// Index of the sample path within the seeded ensemble.
    #[arg(long, default_value_t = 0)]
    pub path_index: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct IntegrateArgs {
    /// `b-db-ito`, `b-db-strat` (scalar Brownian motion) or `x-dx` (needs `--input`).
    #[arg(long, default_value = "b-db-ito", value_parser = ["b-db-ito", "b-db-strat", "x-dx"], ignore_case = true)]
    pub integral: String,

    /// Rough-path JSON, as written by `lift` or `enhance`.
    #[arg(long)]
    pub input: Option<PathBuf>,

    #[arg(long, default_value_t = 1024)]
    pub steps: usize,

    #[arg(long, default_value_t = rough_core::noise::DEFAULT_OVERSAMPLE)]
    pub oversample: usize,

    #[arg(long, default_value_t = 0)]
    pub path_index: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct BracketArgs {
    /// Rough-path JSON; when absent a Brownian path is sampled.
    #[arg(long)]
    pub input: Option<PathBuf>,

    #[command(flatten)]
    pub sample: SampleArgs,

    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ParamArgs {
    #[arg(long, default_value_t = 0.5)]
    pub sigma: f64,

    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,

    #[arg(long, default_value_t = 1.0)]
    pub theta: f64,

    /// Initial value.
    #[arg(long, default_value_t = 1.0)]
    pub xi: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SolverArgs {
    /// `step` or `picard`; defaults depend on the problem.
    #[arg(long, value_parser = known::<Solver>)]
    pub solver: Option<String>,

    #[arg(long, default_value_t = rough_core::convergence::PICARD_TOL)]
    pub tol: f64,

    #[arg(long, default_value_t = rough_core::convergence::PICARD_MAX_ITER)]
    pub max_iter: usize,

    /// Picard window length (default: an eighth of the horizon).
    #[arg(long)]
    pub window: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct SolveArgs {
    #[arg(long, value_parser = known::<Preset>)]
    pub preset: String,

    #[command(flatten)]
    pub params: ParamArgs,

    #[command(flatten)]
    pub solver: SolverArgs,

    #[arg(long, default_value_t = 1024)]
    pub steps: usize,

    #[arg(long, default_value_t = 1.0)]
    pub horizon: f64,

    #[arg(long, default_value_t = rough_core::noise::DEFAULT_OVERSAMPLE)]
    pub oversample: usize,

    /// Overrides the preset's own lift (Itô for gbm-ito, Stratonovich otherwise).
    #[arg(long, value_parser = known::<Enhancement>)]
    pub enhancement: Option<String>,

    #[arg(long, default_value_t = 0)]
    pub path_index: u64,

    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Args, Serialize)]
pub struct RpdeArgs {
    /// Generator as a JSON matrix, e.g. "[[-1,0],[0,-2]]".
    #[arg(long = "A", value_name = "JSON")]
    pub a: String,

    /// `orbit` (no noise), `additive` (constant noise) or `linear` (σY dX).
    #[arg(long, default_value = "additive", value_parser = ["orbit", "additive", "linear"])]
    pub preset: String,

    #[arg(long, default_value_t = 0.5)]
    pub sigma: f64,

    /// Initial value, repeated in every component.
    #[arg(long, default_value_t = 1.0)]
    pub xi: f64,

    #[command(flatten)]
    pub solver: SolverArgs,

    #[arg(long, default_value_t = 1024)]
    pub steps: usize,

    #[arg(long, default_value_t = 1.0)]
    pub horizon: f64,

    #[arg(long, default_value_t = rough_core::noise::DEFAULT_OVERSAMPLE)]
    pub oversample: usize,

    #[arg(long, default_value = "strat", value_parser = known::<Enhancement>)]
    pub enhancement: String,

    #[arg(long, default_value_t = 0)]
    pub path_index: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct ConvergenceArgs {
    #[arg(long, value_parser = known::<Preset>)]
    pub preset: String,

    #[command(flatten)]
    pub params: ParamArgs,

    /// Comma-separated step counts; overrides `--levels`.
    #[arg(long, value_delimiter = ',')]
    pub ladder: Option<Vec<usize>>,

    /// Dyadic levels `LO:HI`, giving step sizes 2^-LO down to 2^-HI.
    #[arg(long, default_value = "6:12")]
    pub levels: String,

    #[arg(long, default_value_t = 64)]
    pub samples: u64,

    /// Fine steps per finest-rung step (default 1, or 32 for Itô presets).
    #[arg(long)]
    pub oversample: Option<usize>,

    #[arg(long, default_value_t = 1.0)]
    pub horizon: f64,

    #[arg(long, value_parser = known::<Solver>)]
    pub solver: Option<String>,
}

/// Accepts `s` only if it parses as `T`, keeping the original spelling.
fn known<T: FromStr>(s: &str) -> Result<String, String>
where
    T::Err: std::fmt::Display,
{
    T::from_str(s).map(|_| s.to_string()).map_err(|e| e.to_string())
}
