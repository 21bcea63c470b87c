//! Finite-dimensional rough path toolkit.
//!
//! Level-2 rough paths over ℝ^d sampled on time grids, controlled paths and
//! their composition calculus, the compensated-Riemann-sum rough integral,
//! rough differential equation solvers, enhanced Brownian motion and
//! semigroup (mild) formulations with matrix generators.
//!
//! ```
//! use rough_core::grid::{SampledPath, TimeGrid};
//! use rough_core::rough_path::lift_piecewise_linear;
//!
//! let grid = TimeGrid::uniform(1024, 1.0).unwrap();
//! let x = SampledPath::from_fn(grid, 2, |t| vec![t, t * t]).unwrap();
//! let lift = lift_piecewise_linear(&x);
//! let area = lift.second_level(0, 1024).unwrap();
//! assert!((area[(0, 1)] - 2.0 / 3.0).abs() < 1e-4);
//! ```

pub mod controlled;
pub mod convergence;
pub mod error;
pub mod grid;
pub mod integral;
pub mod noise;
pub mod presets;
pub mod rde;
pub mod rough_path;
pub mod semigroup;
pub mod tensor;

pub use error::{Error, Result};

/// Formats a float with 17 significant digits so text output round-trips.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Ordinary least-squares slope of `ys` against `xs`.
pub fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}
