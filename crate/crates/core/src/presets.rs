//! Named problems with closed-form or reference solutions.

use crate::controlled::FunctionModel;
use crate::error::{Error, Result};
use crate::rde::RDEProblem;
use crate::rough_path::RoughPath;
use crate::tensor::Mat;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// `dY = σY d𝐁` with a geometric lift: `Y_t = ξ exp(σ B_t)`.
    GbmStrat,
    /// `dY = σY d𝐁` with the Itô lift: `Y_t = ξ exp(σ B_t − σ² t / 2)`.
    GbmIto,
    /// `dY = λY dt`: `Y_t = ξ e^{λt}`.
    LinearDrift,
    /// `dY = sin(Y) d𝐗`.
    SineDiffusion,
    /// `dY = −θY dt + σ d𝐗`.
    Ou,
}

impl Preset {
    pub const ALL: [Preset; 5] = [
        Preset::GbmStrat,
        Preset::GbmIto,
        Preset::LinearDrift,
        Preset::SineDiffusion,
        Preset::Ou,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::GbmStrat => "gbm-strat",
            Preset::GbmIto => "gbm-ito",
            Preset::LinearDrift => "linear-drift",
            Preset::SineDiffusion => "sine-diffusion",
            Preset::Ou => "ou",
        }
    }

    /// Whether the driver is expected to be the Itô lift.
    pub fn wants_ito(self) -> bool {
        matches!(self, Preset::GbmIto)
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gbm" | "gbm-strat" => Ok(Preset::GbmStrat),
            "gbm-ito" => Ok(Preset::GbmIto),
            "linear-drift" | "drift-only" => Ok(Preset::LinearDrift),
            "sine-diffusion" => Ok(Preset::SineDiffusion),
            "ou" => Ok(Preset::Ou),
            other => Err(Error::InvalidArgument(format!("unknown preset `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PresetParams {
    pub sigma: f64,
    pub lambda: f64,
    pub theta: f64,
    pub xi: f64,
}

impl Default for PresetParams {
    fn default() -> Self {
        PresetParams {
            sigma: 0.5,
            lambda: 1.0,
            theta: 1.0,
            xi: 1.0,
        }
    }
}

fn scalar(c: f64) -> Mat {
    Mat::from_vec(1, 1, vec![c]).expect("finite")
}

/// Scalar problem for `preset` on a one-dimensional driver.
pub fn build(preset: Preset, params: PresetParams, driver: RoughPath) -> Result<RDEProblem> {
    if driver.dim() != 1 {
        return Err(Error::DimensionMismatch {
            context: "scalar preset driver",
            expected: 1,
            found: driver.dim(),
        });
    }
    let PresetParams {
        sigma,
        lambda,
        theta,
        xi,
    } = params;
    let (drift, diffusion) = match preset {
        Preset::GbmStrat | Preset::GbmIto => (
            FunctionModel::zero(1, 1),
            FunctionModel::linear(scalar(sigma)),
        ),
        Preset::LinearDrift => (FunctionModel::linear(scalar(lambda)), FunctionModel::zero(1, 1)),
        Preset::SineDiffusion => (
            FunctionModel::zero(1, 1),
            FunctionModel::new(1, 1, |_, y| vec![y[0].sin()])
                .with_derivative(|_, y| scalar(y[0].cos()))
                .with_bound(1.0),
        ),
        Preset::Ou => (
            FunctionModel::linear(scalar(-theta)),
            FunctionModel::constant(1, vec![sigma]),
        ),
    };
    RDEProblem::new(driver, drift, diffusion, vec![xi])
}

/// Closed-form value at time `t` given the driver value `x_t` (with
/// `x_0 = 0`), where one exists.
pub fn exact(preset: Preset, params: PresetParams, t: f64, x_t: f64) -> Option<f64> {
    let PresetParams { sigma, lambda, xi, .. } = params;
    match preset {
        Preset::GbmStrat => Some(xi * (sigma * x_t).exp()),
        Preset::GbmIto => Some(xi * (sigma * x_t - 0.5 * sigma * sigma * t).exp()),
        Preset::LinearDrift => Some(xi * (lambda * t).exp()),
        Preset::SineDiffusion | Preset::Ou => None,
    }
}

/// Closed-form path on the driver grid, if one exists.
pub fn exact_path(preset: Preset, params: PresetParams, driver: &RoughPath) -> Option<Vec<f64>> {
    let x0 = driver.path().value(0)[0];
    driver
        .grid()
        .times()
        .iter()
        .enumerate()
        .map(|(k, &t)| exact(preset, params, t, driver.path().value(k)[0] - x0))
        .collect()
}
