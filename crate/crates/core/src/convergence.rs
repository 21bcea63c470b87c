//! Strong-error studies over a ladder of step sizes.
//!
//! Every sample draws one fine Brownian path; each rung of the ladder lifts
//! that same path on its own coarse grid, so errors at different step sizes
//! are coupled.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fmt_f64;
use crate::grid::TimeGrid;
use crate::ls_slope;
use crate::noise::{sample_bm, Enhancement, NoiseConfig};
use crate::presets::{build, exact_path, Preset, PresetParams};
use crate::rde::{solve_picard, solve_step_scheme, RDESolution};
use crate::rough_path::RoughPath;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Solver {
    Step,
    Picard,
}

impl std::str::FromStr for Solver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "step" => Ok(Solver::Step),
            "picard" => Ok(Solver::Picard),
            other => Err(Error::InvalidArgument(format!("unknown solver `{other}`"))),
        }
    }
}

/// Step scheme for driven presets; Picard (trapezoidal drift) when the
/// preset is a pure ODE.
pub fn default_solver(preset: Preset) -> Solver {
    match preset {
        Preset::LinearDrift => Solver::Picard,
        _ => Solver::Step,
    }
}

pub const PICARD_TOL: f64 = 1e-13;
pub const PICARD_MAX_ITER: usize = 200;

pub fn solve_with(solver: Solver, problem: &crate::rde::RDEProblem) -> Result<RDESolution> {
    match solver {
        Solver::Step => solve_step_scheme(problem),
        Solver::Picard => solve_picard(
            problem,
            crate::rde::default_window(problem),
            PICARD_MAX_ITER,
            PICARD_TOL,
        ),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceConfig {
    pub preset: Preset,
    pub params: PresetParams,
    /// Step counts, one per rung; each must divide the largest.
    pub ladder: Vec<usize>,
    pub samples: u64,
    pub seed: u64,
    pub oversample: usize,
    pub horizon: f64,
    pub solver: Solver,
}

impl ConvergenceConfig {
    pub fn new(preset: Preset, ladder: Vec<usize>, samples: u64, seed: u64) -> Self {
        ConvergenceConfig {
            preset,
            params: PresetParams::default(),
            ladder,
            samples,
            seed,
            oversample: 1,
            horizon: 1.0,
            solver: default_solver(preset),
        }
    }
}

/// Step counts `2^lo ..= 2^hi`.
pub fn dyadic_ladder(lo: u32, hi: u32) -> Vec<usize> {
    (lo..=hi).map(|e| 1usize << e).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub h: f64,
    pub mean_strong_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    pub fitted_order: f64,
}

impl ConvergenceTable {
    /// Columns `h, mean_strong_error, fitted_order`; the fitted order is the
    /// least-squares slope over all rungs and is repeated on every row.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "h,mean_strong_error,fitted_order")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{}",
                fmt_f64(r.h),
                fmt_f64(r.mean_strong_error),
                fmt_f64(self.fitted_order)
            )?;
        }
        Ok(())
    }
}

fn lift_for(preset: Preset) -> Enhancement {
    if preset.wants_ito() {
        Enhancement::Ito
    } else {
        Enhancement::Strat
    }
}

/// `sup_k |Y_k − exact_k|` and `sup_k |Y_k − exact_k| / |exact_k|`.
pub fn errors_against_exact(
    preset: Preset,
    params: PresetParams,
    driver: &RoughPath,
    solution: &RDESolution,
) -> Result<(f64, f64)> {
    let exact = exact_path(preset, params, driver).ok_or_else(|| {
        Error::InvalidArgument(format!("preset `{}` has no closed form", preset.name()))
    })?;
    Ok(exact
        .iter()
        .enumerate()
        .map(|(k, e)| {
            let err = (solution.value(k)[0] - e).abs();
            (err, err / e.abs())
        })
        .fold((0.0, 0.0), |(a, b), (c, d)| (f64::max(a, c), f64::max(b, d))))
}

pub fn run(cfg: &ConvergenceConfig) -> Result<ConvergenceTable> {
    if cfg.ladder.len() < 4 {
        return Err(Error::InsufficientScales {
            needed: 4,
            available: cfg.ladder.len(),
        });
    }
    if cfg.samples == 0 {
        return Err(Error::InvalidArgument("need at least one sample".into()));
    }
    let finest = *cfg.ladder.iter().max().unwrap();
    if cfg.ladder.iter().any(|&n| n == 0 || finest % n != 0) {
        return Err(Error::InvalidGrid("every rung must divide the finest step count".into()));
    }
    let noise = NoiseConfig::new(1, TimeGrid::uniform(finest, cfg.horizon)?, cfg.oversample, cfg.seed)?;
    let grids = cfg
        .ladder
        .iter()
        .map(|&n| TimeGrid::uniform(n, cfg.horizon))
        .collect::<Result<Vec<_>>>()?;
    let kind = lift_for(cfg.preset);
    let per_sample: Vec<Vec<f64>> = (0..cfg.samples)
        .into_par_iter()
        .map(|s| {
            let fine = sample_bm(&noise, s);
            grids
                .iter()
                .map(|g| {
                    let driver = kind.lift(&fine, g)?;
                    let problem = build(cfg.preset, cfg.params, driver.clone())?;
                    let sol = solve_with(cfg.solver, &problem)?;
                    Ok(errors_against_exact(cfg.preset, cfg.params, &driver, &sol)?.0)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let rows: Vec<ConvergenceRow> = cfg
        .ladder
        .iter()
        .enumerate()
        .map(|(r, &n)| ConvergenceRow {
            h: cfg.horizon / n as f64,
            mean_strong_error: per_sample.iter().map(|e| e[r]).sum::<f64>() / cfg.samples as f64,
        })
        .collect();
    let xs: Vec<f64> = rows.iter().map(|r| r.h.ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.mean_strong_error.ln()).collect();
    Ok(ConvergenceTable {
        fitted_order: ls_slope(&xs, &ys),
        rows,
    })
}
