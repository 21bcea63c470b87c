//! Solvers for `dY = f₀(t,Y) dt + f(t,Y) d𝐗` with `Y_0 = ξ`.
//!
//! The diffusion maps `ℝ^p` into `L(ℝ^d, ℝ^p)`, flattened row-major as a
//! `p × d` matrix. Two solvers share one contract: an explicit one-step
//! scheme using the local expansion with `f(Y)′ = D_y f(Y)·f(Y)`, and a
//! windowed Picard iteration of the fixed-point map
//! `(Y, Y′) ↦ (ξ + ∫ f₀(Y) dt + ∫ f(Y) d𝐗, f(Y))`.

use serde::{Deserialize, Serialize};

use crate::controlled::{compose_function, ControlledPath, FunctionModel};
use crate::error::{Error, Result};
use crate::grid::{SampledPath, TimeGrid};
use crate::integral::{drift_integral_path, integral_as_controlled};
use crate::rough_path::RoughPath;
use crate::tensor::{distance, euclidean_norm, frobenius_norm, Mat};

/// Halvings of the Picard window before giving up on convergence.
pub const MAX_WINDOW_HALVINGS: usize = 6;

#[derive(Debug, Clone)]
pub struct RDEProblem {
    driver: RoughPath,
    drift: FunctionModel,
    diffusion: FunctionModel,
    xi: Vec<f64>,
}

impl RDEProblem {
    /// Checks shapes and validates the diffusion derivative by finite
    /// differences on 100 probes around `ξ`.
    pub fn new(
        driver: RoughPath,
        drift: FunctionModel,
        diffusion: FunctionModel,
        xi: Vec<f64>,
    ) -> Result<Self> {
        let p = xi.len();
        let d = driver.dim();
        if drift.in_dim() != p || drift.out_dim() != p {
            return Err(Error::DimensionMismatch {
                context: "RDEProblem drift (ℝ^p → ℝ^p)",
                expected: p,
                found: drift.out_dim(),
            });
        }
        if diffusion.in_dim() != p || diffusion.out_dim() != p * d {
            return Err(Error::DimensionMismatch {
                context: "RDEProblem diffusion (ℝ^p → ℝ^{p×d})",
                expected: p * d,
                found: diffusion.out_dim(),
            });
        }
        if xi.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("initial value is not finite".into()));
        }
        let radius = 1.0 + 2.0 * xi.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        diffusion.validate_derivative(100, driver.grid().horizon(), radius, 1e-5, 0xd1ff)?;
        Ok(RDEProblem {
            driver,
            drift,
            diffusion,
            xi,
        })
    }

    /// The same coefficients driven by another rough path of equal dimension.
    pub fn with_driver(&self, driver: RoughPath) -> Result<Self> {
        if driver.dim() != self.driver.dim() {
            return Err(Error::DimensionMismatch {
                context: "RDEProblem::with_driver",
                expected: self.driver.dim(),
                found: driver.dim(),
            });
        }
        Ok(RDEProblem {
            driver,
            ..self.clone()
        })
    }

    pub fn driver(&self) -> &RoughPath {
        &self.driver
    }

    pub fn drift(&self) -> &FunctionModel {
        &self.drift
    }

    pub fn diffusion(&self) -> &FunctionModel {
        &self.diffusion
    }

    pub fn xi(&self) -> &[f64] {
        &self.xi
    }

    pub fn grid(&self) -> &TimeGrid {
        self.driver.grid()
    }

    pub fn state_dim(&self) -> usize {
        self.xi.len()
    }

    pub fn driver_dim(&self) -> usize {
        self.driver.dim()
    }

    /// `f(t, y)` as a `p × d` matrix.
    pub(crate) fn diffusion_matrix(&self, t: f64, y: &[f64]) -> Result<Mat> {
        Mat::from_vec(self.state_dim(), self.driver_dim(), self.diffusion.eval(t, y)?)
    }

    /// `f₀ Δt + f·X_{k,k+1} + (D_y f·f) : 𝕏_{k,k+1}` at node `k`.
    pub(crate) fn local_increment(&self, k: usize, y: &[f64]) -> Result<Vec<f64>> {
        let (p, d) = (self.state_dim(), self.driver_dim());
        let grid = self.grid();
        let t = grid.t(k);
        let dt = grid.dt(k);
        let f0 = self.drift.eval(t, y)?;
        let f = self.diffusion_matrix(t, y)?;
        let dff = self.diffusion.jacobian(t, y)?.mul_unchecked(&f);
        let dx = self.driver.path().increment_unchecked(k, k + 1);
        let block = self.driver.block(k);
        let mut inc = vec![0.0; p];
        for (i, out) in inc.iter_mut().enumerate() {
            let mut s = f0[i] * dt;
            for a in 0..d {
                s += f[(i, a)] * dx[a];
                for b in 0..d {
                    s += dff[(i * d + a, b)] * block[(b, a)];
                }
            }
            *out = s;
        }
        Ok(inc)
    }

    /// Step-scheme states on nodes `start..=end` from `y_start`, each new
    /// state passed through `post(k, ·)` where `k` is the step index.
    pub(crate) fn march<P>(&self, start: usize, end: usize, y_start: &[f64], post: P) -> Result<Vec<f64>>
    where
        P: Fn(usize, Vec<f64>) -> Vec<f64>,
    {
        let p = self.state_dim();
        self.grid().check_index(end)?;
        if start > end || y_start.len() != p {
            return Err(Error::InvalidArgument(format!(
                "invalid segment [{start}, {end}] with state of length {}",
                y_start.len()
            )));
        }
        let mut values = Vec::with_capacity((end - start + 1) * p);
        values.extend_from_slice(y_start);
        for k in start..end {
            let y = &values[(k - start) * p..(k - start + 1) * p];
            let inc = self.local_increment(k, y)?;
            let next: Vec<f64> = y.iter().zip(&inc).map(|(a, b)| a + b).collect();
            let next = post(k, next);
            if next.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFiniteState {
                    index: k + 1,
                    t: self.grid().t(k + 1),
                });
            }
            values.extend(next);
        }
        Ok(values)
    }

    /// Pairs states on the full grid with `Y′_k = f(t_k, Y_k)`.
    pub(crate) fn controlled_solution(&self, values: Vec<f64>) -> Result<ControlledPath> {
        let p = self.state_dim();
        let derivs = (0..self.grid().len())
            .map(|k| self.diffusion_matrix(self.grid().t(k), &values[k * p..(k + 1) * p]))
            .collect::<Result<Vec<_>>>()?;
        ControlledPath::new(self.grid().clone(), p, self.driver_dim(), values, derivs)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    pub residual: Option<f64>,
    /// Picard iterations per window, in time order.
    pub iterations: Vec<usize>,
    pub converged: bool,
    pub halvings: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RDESolution {
    pub path: ControlledPath,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionJson {
    pub t: Vec<f64>,
    #[serde(rename = "Y")]
    pub y: Vec<Vec<f64>>,
    #[serde(rename = "Yp")]
    pub yp: Vec<Vec<Vec<f64>>>,
    pub residual: Option<f64>,
}

impl RDESolution {
    pub fn value(&self, k: usize) -> &[f64] {
        self.path.value(k)
    }

    pub fn terminal(&self) -> &[f64] {
        self.path.value(self.path.grid().steps())
    }

    pub fn sup_norm(&self) -> f64 {
        self.path.to_path().sup_norm()
    }

    /// `sup_k |Y_k − Z_k|` against another solution on the same grid.
    pub fn sup_distance(&self, other: &RDESolution) -> Result<f64> {
        if self.path.grid() != other.path.grid() || self.path.value_dim() != other.path.value_dim() {
            return Err(Error::GridMismatch("solutions live on different grids".into()));
        }
        Ok((0..self.path.grid().len())
            .map(|k| distance(self.value(k), other.value(k)))
            .fold(0.0, f64::max))
    }

    pub fn controlled_seminorm(&self, problem: &RDEProblem, alpha: f64) -> Result<f64> {
        self.path.controlled_seminorm(problem.driver().path(), alpha)
    }

    pub fn to_json(&self) -> SolutionJson {
        let grid = self.path.grid();
        SolutionJson {
            t: grid.times().to_vec(),
            y: (0..grid.len()).map(|k| self.value(k).to_vec()).collect(),
            yp: self.path.derivatives().iter().map(Mat::to_rows).collect(),
            residual: self.diagnostics.residual,
        }
    }

    pub fn from_json(json: &SolutionJson) -> Result<Self> {
        let grid = TimeGrid::new(json.t.clone())?;
        let p = json.y.first().map_or(0, Vec::len);
        let d = json.yp.first().and_then(|m| m.first()).map_or(0, Vec::len);
        if json.y.len() != grid.len() || json.yp.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                context: "solution JSON node count",
                expected: grid.len(),
                found: json.y.len().min(json.yp.len()),
            });
        }
        let values = json.y.iter().flatten().copied().collect();
        let derivs = json
            .yp
            .iter()
            .map(|rows| Mat::from_rows(rows))
            .collect::<Result<Vec<_>>>()?;
        Ok(RDESolution {
            path: ControlledPath::new(grid, p, d, values, derivs)?,
            diagnostics: Diagnostics {
                residual: json.residual,
                converged: true,
                ..Diagnostics::default()
            },
        })
    }
}

/// One explicit pass `Y_{k+1} = Y_k + f₀Δt + f·X_{k,k+1} + (D_y f·f):𝕏_{k,k+1}`.
pub fn solve_step_scheme(problem: &RDEProblem) -> Result<RDESolution> {
    let values = problem.march(0, problem.grid().steps(), problem.xi(), |_, y| y)?;
    Ok(RDESolution {
        path: problem.controlled_solution(values)?,
        diagnostics: Diagnostics {
            converged: true,
            ..Diagnostics::default()
        },
    })
}

/// Step-scheme states on nodes `start..=end` from `y_start` at `t_start`.
pub fn step_scheme_segment(
    problem: &RDEProblem,
    start: usize,
    end: usize,
    y_start: &[f64],
) -> Result<Vec<Vec<f64>>> {
    let p = problem.state_dim();
    Ok(problem
        .march(start, end, y_start, |_, y| y)?
        .chunks(p)
        .map(<[f64]>::to_vec)
        .collect())
}

/// Largest `b > a` with `t_b − t_a ≤ window`.
fn window_end(grid: &TimeGrid, a: usize, window: f64) -> usize {
    let limit = grid.t(a) + window * (1.0 + 1e-9);
    let mut b = a + 1;
    while b < grid.steps() && grid.t(b + 1) <= limit {
        b += 1;
    }
    b
}

pub(crate) type WindowMap = Box<dyn Fn(&[f64], &[f64], &[Mat]) -> Result<(Vec<f64>, Vec<Mat>)>>;

pub(crate) struct PicardOutcome {
    pub values: Vec<f64>,
    pub iterations: Vec<usize>,
    pub converged: bool,
    pub halvings: usize,
}

/// Windowed Picard iteration. `make_map(a, b)` builds the fixed-point map on
/// nodes `a..=b` acting on `(ξ_w, Y, Y′)`; `initial(a, b, ξ_w)` gives the
/// first iterate.
pub(crate) fn picard_engine<M, I>(
    grid: &TimeGrid,
    xi: &[f64],
    window: f64,
    max_iter: usize,
    tol: f64,
    initial: I,
    make_map: M,
) -> Result<PicardOutcome>
where
    M: Fn(usize, usize) -> Result<WindowMap>,
    I: Fn(usize, usize, &[f64]) -> Result<(Vec<f64>, Vec<Mat>)>,
{
    if !(window > 0.0 && window.is_finite()) {
        return Err(Error::InvalidArgument(format!("Picard window must be positive, got {window}")));
    }
    if !(tol > 0.0) || max_iter == 0 {
        return Err(Error::InvalidArgument("Picard needs tol > 0 and max_iter ≥ 1".into()));
    }
    let p = xi.len();
    let n = grid.steps();
    let mut values = xi.to_vec();
    let mut iterations = Vec::new();
    let mut converged = true;
    let mut halvings = 0;
    let mut window = window;
    let mut a = 0;
    while a < n {
        let b = window_end(grid, a, window);
        let xi_w = values[a * p..(a + 1) * p].to_vec();
        let map = make_map(a, b)?;
        let (mut y, mut yp) = initial(a, b, &xi_w)?;
        let mut outcome: Result<Option<usize>> = Ok(None);
        for it in 1..=max_iter {
            match map(&xi_w, &y, &yp) {
                Ok((ny, nyp)) => {
                    let dv = ny
                        .chunks(p)
                        .zip(y.chunks(p))
                        .map(|(u, v)| distance(u, v))
                        .fold(0.0, f64::max);
                    let dd = nyp
                        .iter()
                        .zip(&yp)
                        .map(|(u, v)| frobenius_norm(&(u - v)))
                        .fold(0.0, f64::max);
                    y = ny;
                    yp = nyp;
                    let dist = dv.max(dd);
                    if !dist.is_finite() {
                        outcome = Err(Error::NonFiniteState { index: a, t: grid.t(a) });
                        break;
                    }
                    if dist <= tol {
                        outcome = Ok(Some(it));
                        break;
                    }
                }
                Err(e) => {
                    outcome = Err(e);
                    break;
                }
            }
        }
        match outcome {
            Ok(Some(it)) => iterations.push(it),
            _ if halvings < MAX_WINDOW_HALVINGS && b > a + 1 => {
                window /= 2.0;
                halvings += 1;
                continue;
            }
            Ok(None) => {
                converged = false;
                iterations.push(max_iter);
            }
            Err(e) => return Err(e),
        }
        values.extend_from_slice(&y[p..]);
        a = b;
    }
    Ok(PicardOutcome {
        values,
        iterations,
        converged,
        halvings,
    })
}

/// Default Picard window: one eighth of the horizon.
pub fn default_window(problem: &RDEProblem) -> f64 {
    problem.grid().horizon() / 8.0
}

/// Picard iteration of the fixed-point map on consecutive windows of length
/// at most `window`, concatenated. Non-convergence after the window halvings
/// is reported through `diagnostics.converged`.
pub fn solve_picard(problem: &RDEProblem, window: f64, max_iter: usize, tol: f64) -> Result<RDESolution> {
    let (p, d) = (problem.state_dim(), problem.driver_dim());
    let grid = problem.grid();
    let outcome = picard_engine(
        grid,
        problem.xi(),
        window,
        max_iter,
        tol,
        |a, b, xi_w| {
            let anchor = problem.diffusion_matrix(grid.t(a), xi_w)?;
            Ok((xi_w.repeat(b - a + 1), vec![anchor; b - a + 1]))
        },
        |a, b| {
            let local = problem.driver().window(a, b)?;
            let t0 = grid.t(a);
            let f = problem.diffusion().time_shifted(t0);
            let f0 = problem.drift().time_shifted(t0);
            Ok(Box::new(move |xi_w: &[f64], y: &[f64], yp: &[Mat]| {
                let lgrid = local.grid();
                let c = ControlledPath::new(lgrid.clone(), p, d, y.to_vec(), yp.to_vec())?;
                let fy = compose_function(&f, &c)?;
                let z = integral_as_controlled(&fy, &local)?;
                let drift = drift_path(&f0, lgrid, y, p)?;
                let dint = drift_integral_path(&drift);
                let mut values = Vec::with_capacity(y.len());
                for k in 0..lgrid.len() {
                    for i in 0..p {
                        values.push(xi_w[i] + dint.value(k)[i] + z.value(k)[i]);
                    }
                }
                Ok((values, z.derivatives().to_vec()))
            }) as WindowMap)
        },
    )?;
    Ok(RDESolution {
        path: problem.controlled_solution(outcome.values)?,
        diagnostics: Diagnostics {
            residual: None,
            iterations: outcome.iterations,
            converged: outcome.converged,
            halvings: outcome.halvings,
        },
    })
}

/// `k ↦ f₀(t_k, Y_k)` as a sampled path.
pub(crate) fn drift_path(f0: &FunctionModel, grid: &TimeGrid, y: &[f64], p: usize) -> Result<SampledPath> {
    let mut v = Vec::with_capacity(y.len());
    for (k, yk) in y.chunks(p).enumerate() {
        v.extend(f0.eval(grid.t(k), yk)?);
    }
    SampledPath::new(grid.clone(), p, v)
}

/// `max_k |Y_k − ξ − ∫_0^{t_k} f₀(Y) dt − ∫_0^{t_k} f(Y) d𝐗|`.
pub fn residual_check(solution: &RDESolution, problem: &RDEProblem) -> Result<f64> {
    let c = &solution.path;
    c.check_driver(problem.driver().path())?;
    let p = problem.state_dim();
    let fy = compose_function(problem.diffusion(), c)?;
    let z = integral_as_controlled(&fy, problem.driver())?;
    let drift = drift_path(problem.drift(), problem.grid(), c.values(), p)?;
    let dint = drift_integral_path(&drift);
    let xi = problem.xi();
    Ok((0..problem.grid().len())
        .map(|k| {
            let r: Vec<f64> = (0..p)
                .map(|i| c.value(k)[i] - xi[i] - dint.value(k)[i] - z.value(k)[i])
                .collect();
            euclidean_norm(&r)
        })
        .fold(0.0, f64::max))
}

/// `sup_k |Y_k| ≤ K`.
pub fn apriori_bound_check(solution: &RDESolution, k: f64) -> Result<bool> {
    if !(k > 0.0) {
        return Err(Error::InvalidArgument(format!("bound K must be positive, got {k}")));
    }
    Ok(solution.sup_norm() <= k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{sample_bm, strat_enhance, NoiseConfig};
    use crate::rough_path::lift_piecewise_linear;

    fn time_driver(n: usize) -> RoughPath {
        let g = TimeGrid::uniform(n, 1.0).unwrap();
        lift_piecewise_linear(&SampledPath::from_fn(g, 1, |t| vec![t]).unwrap())
    }

    fn linear(c: f64) -> FunctionModel {
        FunctionModel::linear(Mat::from_vec(1, 1, vec![c]).unwrap())
    }

    fn strat_bm(n: usize, seed: u64) -> RoughPath {
        let cfg = NoiseConfig::new(1, TimeGrid::uniform(n, 1.0).unwrap(), 8, seed).unwrap();
        strat_enhance(&sample_bm(&cfg, 0), cfg.coarse()).unwrap()
    }

    #[test]
    fn problem_validation() {
        let r = time_driver(8);
        assert!(RDEProblem::new(r.clone(), FunctionModel::zero(2, 2), linear(1.0), vec![1.0]).is_err());
        assert!(RDEProblem::new(r.clone(), linear(1.0), FunctionModel::zero(1, 2), vec![1.0]).is_err());
        let bad = FunctionModel::new(1, 1, |_, y| vec![y[0] * y[0]])
            .with_derivative(|_, _| Mat::identity(1));
        assert!(matches!(
            RDEProblem::new(r, linear(0.0), bad, vec![1.0]),
            Err(Error::DerivativeCheck { .. })
        ));
    }

    #[test]
    fn zero_coefficients() {
        let r = strat_bm(64, 1);
        let pb = RDEProblem::new(r, FunctionModel::zero(2, 2), FunctionModel::zero(2, 2), vec![1.0, -2.0]).unwrap();
        let s = solve_step_scheme(&pb).unwrap();
        assert!((0..=64).all(|k| s.value(k) == [1.0, -2.0]));
        assert_eq!(residual_check(&s, &pb).unwrap(), 0.0);
        let pic = solve_picard(&pb, default_window(&pb), 10, 1e-12).unwrap();
        assert!(pic.diagnostics.iterations.iter().all(|&i| i == 1));
        assert!(apriori_bound_check(&s, 5f64.sqrt()).unwrap());
        assert!(apriori_bound_check(&s, 0.0).is_err());
    }

    #[test]
    fn euler_on_exponential_ode() {
        let pb = RDEProblem::new(time_driver(1 << 12), linear(1.0), FunctionModel::zero(1, 1), vec![1.0]).unwrap();
        let s = solve_step_scheme(&pb).unwrap();
        assert!((s.terminal()[0] - std::f64::consts::E).abs() < 1e-3);
    }

    #[test]
    fn second_order_on_smooth_driver() {
        let pb = RDEProblem::new(time_driver(1 << 12), FunctionModel::zero(1, 1), linear(1.0), vec![1.0]).unwrap();
        let s = solve_step_scheme(&pb).unwrap();
        assert!((s.terminal()[0] - std::f64::consts::E).abs() < 1e-6);
        assert!(residual_check(&s, &pb).unwrap() <= 1e-4);
    }

    #[test]
    fn derivative_consistency_and_concatenation() {
        let r = strat_bm(256, 2);
        let sine = FunctionModel::new(1, 1, |t, y| vec![(y[0] + t).sin()])
            .with_derivative(|t, y| Mat::from_vec(1, 1, vec![(y[0] + t).cos()]).unwrap());
        let pb = RDEProblem::new(r, linear(-0.5), sine.clone(), vec![0.3]).unwrap();
        let s = solve_step_scheme(&pb).unwrap();
        for k in 0..=256 {
            let f = sine.eval(pb.grid().t(k), s.value(k)).unwrap()[0];
            assert!((s.path.derivative(k)[(0, 0)] - f).abs() <= 1e-12);
        }
        let first = step_scheme_segment(&pb, 0, 128, pb.xi()).unwrap();
        let second = step_scheme_segment(&pb, 128, 256, &first[128]).unwrap();
        for (k, y) in first.iter().chain(&second[1..]).enumerate() {
            assert!(distance(y, s.value(k)) <= 1e-12);
        }
    }

    #[test]
    fn picard_on_linear_drift() {
        let pb = RDEProblem::new(time_driver(1 << 12), linear(1.0), FunctionModel::zero(1, 1), vec![1.0]).unwrap();
        let s = solve_picard(&pb, default_window(&pb), 100, 1e-13).unwrap();
        assert!(s.diagnostics.converged);
        assert!((s.terminal()[0] - std::f64::consts::E).abs() < 1e-6);
    }

    #[test]
    fn picard_matches_step_scheme_and_closed_form() {
        let r = strat_bm(1 << 12, 3);
        let pb = RDEProblem::new(r.clone(), FunctionModel::zero(1, 1), linear(0.5), vec![1.0]).unwrap();
        let tol = 1e-10;
        let pic = solve_picard(&pb, default_window(&pb), 200, tol).unwrap();
        let step = solve_step_scheme(&pb).unwrap();
        assert!(pic.diagnostics.converged);
        assert!(pic.sup_distance(&step).unwrap() <= 2e-3);
        assert!(residual_check(&pic, &pb).unwrap() <= 10.0 * tol);
        let exact = (0..r.grid().len())
            .map(|k| (0.5 * r.path().value(k)[0]).exp())
            .zip(0..)
            .map(|(e, k)| (e - pic.value(k)[0]).abs())
            .fold(0.0, f64::max);
        assert!(exact <= 2e-3);
        for k in 0..r.grid().len() {
            assert!((pic.path.derivative(k)[(0, 0)] - 0.5 * pic.value(k)[0]).abs() <= 1e-12);
        }
    }

    #[test]
    fn picard_window_split_is_consistent() {
        let r = strat_bm(512, 4);
        let pb = RDEProblem::new(r, linear(0.2), linear(0.4), vec![1.0]).unwrap();
        let tol = 1e-11;
        let whole = solve_picard(&pb, 1.0, 200, tol).unwrap();
        let halves = solve_picard(&pb, 0.5, 200, tol).unwrap();
        assert_eq!(halves.diagnostics.iterations.len(), 2);
        assert!(whole.sup_distance(&halves).unwrap() <= 2.0 * tol);
    }

    #[test]
    fn bound_check_examples() {
        let r = strat_bm(128, 5);
        let pb = RDEProblem::new(r, linear(0.3), linear(0.5), vec![2.0]).unwrap();
        let s = solve_step_scheme(&pb).unwrap();
        assert!(!apriori_bound_check(&s, 1.0).unwrap());
    }

    #[test]
    fn json_round_trip() {
        let r = strat_bm(16, 6);
        let pb = RDEProblem::new(r, linear(0.3), linear(0.5), vec![2.0]).unwrap();
        let mut s = solve_step_scheme(&pb).unwrap();
        s.diagnostics.residual = Some(residual_check(&s, &pb).unwrap());
        let text = serde_json::to_string(&s.to_json()).unwrap();
        let back = RDESolution::from_json(&serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back.path, s.path);
        assert_eq!(back.diagnostics.residual, s.diagnostics.residual);
    }

    #[test]
    fn non_finite_state_is_reported() {
        let blow = FunctionModel::new(1, 1, |_, y| vec![y[0] * y[0] * 1e100]);
        let pb = RDEProblem::new(time_driver(64), blow, FunctionModel::zero(1, 1), vec![1e100]).unwrap();
        assert!(matches!(solve_step_scheme(&pb), Err(Error::NonFiniteState { .. } | Error::NonFinite { .. })));
    }
}
