//! Matrix semigroups `S_t = exp(tA)`, rough and drift convolutions, and mild
//! solutions of `dY = (AY + f₀(t,Y)) dt + f(t,Y) d𝐗`.
//!
//! In finite dimension every vector lies in `D(A)` and `D(A²)`; the graph
//! norms are still exposed so that the semigroup estimates can be checked
//! as written.

use rayon::prelude::*;

use crate::controlled::{compose_function, ControlledPath, FunctionModel};
use crate::error::{Error, Result};
use crate::grid::{SampledPath, TimeGrid};
use crate::integral::rough_integral;
use crate::rde::{drift_path, picard_engine, Diagnostics, RDEProblem, RDESolution, WindowMap};
use crate::rough_path::RoughPath;
use crate::tensor::{euclidean_norm, frobenius_norm, Mat};

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

/// Matrix exponential by scaling and squaring with the diagonal Padé
/// approximant of order 13.
pub fn expm(a: &Mat) -> Result<Mat> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    let n = a.rows();
    let norm = a.norm_one();
    if !norm.is_finite() {
        return Err(Error::InvalidArgument("matrix exponential of a non-finite matrix".into()));
    }
    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let a = a.scaled(0.5f64.powi(s));
    let b = &PADE13;
    let id = Mat::identity(n);
    let a2 = a.mul_unchecked(&a);
    let a4 = a2.mul_unchecked(&a2);
    let a6 = a4.mul_unchecked(&a2);
    let combo = |c: [f64; 4], base: &[&Mat; 4]| {
        let mut m = Mat::zeros(n, n);
        for (ci, bi) in c.iter().zip(base) {
            m.axpy(*ci, bi);
        }
        m
    };
    let inner_u = combo([b[13], b[11], b[9], 0.0], &[&a6, &a4, &a2, &id]);
    let mut u = a6.mul_unchecked(&inner_u);
    u += &combo([b[7], b[5], b[3], b[1]], &[&a6, &a4, &a2, &id]);
    let u = a.mul_unchecked(&u);
    let inner_v = combo([b[12], b[10], b[8], 0.0], &[&a6, &a4, &a2, &id]);
    let mut v = a6.mul_unchecked(&inner_v);
    v += &combo([b[6], b[4], b[2], b[0]], &[&a6, &a4, &a2, &id]);
    let mut r = (&v - &u).solve(&(&v + &u))?;
    for _ in 0..s {
        r = r.mul_unchecked(&r);
    }
    Ok(r)
}

/// `S_t = exp(tA)` with growth constants `|S_t| ≤ M e^{ωt}`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixSemigroup {
    generator: Mat,
    m: f64,
    omega: f64,
}

impl MatrixSemigroup {
    /// Growth constants `M = 1`, `ω = ‖A‖_F`.
    pub fn new(generator: Mat) -> Result<Self> {
        if !generator.is_square() {
            return Err(Error::NotSquare {
                rows: generator.rows(),
                cols: generator.cols(),
            });
        }
        let omega = frobenius_norm(&generator);
        Ok(MatrixSemigroup {
            generator,
            m: 1.0,
            omega,
        })
    }

    /// User-declared growth constants.
    pub fn with_growth(mut self, m: f64, omega: f64) -> Result<Self> {
        if !(m >= 1.0 && omega.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "growth constants need M ≥ 1 and finite ω, got M={m}, ω={omega}"
            )));
        }
        self.m = m;
        self.omega = omega;
        Ok(self)
    }

    pub fn generator(&self) -> &Mat {
        &self.generator
    }

    pub fn dim(&self) -> usize {
        self.generator.rows()
    }

    pub fn growth_m(&self) -> f64 {
        self.m
    }

    pub fn growth_omega(&self) -> f64 {
        self.omega
    }

    pub fn at(&self, t: f64) -> Result<Mat> {
        if !(t >= 0.0) {
            return Err(Error::InvalidArgument(format!("semigroup time must be ≥ 0, got {t}")));
        }
        expm(&self.generator.scaled(t))
    }

    /// `|y|_{D(A)} = |y| + |Ay|`.
    pub fn graph_norm(&self, y: &[f64]) -> f64 {
        euclidean_norm(y) + euclidean_norm(&self.generator.matvec_unchecked(y))
    }

    /// `|y|_{D(A²)} = |y| + |Ay| + |A²y|`.
    pub fn graph_norm2(&self, y: &[f64]) -> f64 {
        let ay = self.generator.matvec_unchecked(y);
        let aay = self.generator.matvec_unchecked(&ay);
        euclidean_norm(y) + euclidean_norm(&ay) + euclidean_norm(&aay)
    }

    /// Transition operators `S_{t_j − t_i}` on a grid. Uniform grids cache
    /// the powers of `S_h`.
    pub fn transitions(&self, grid: &TimeGrid) -> Result<Transitions> {
        match grid.uniform_step() {
            Some(h) => {
                let step = self.at(h)?;
                let mut powers = Vec::with_capacity(grid.len());
                powers.push(Mat::identity(self.dim()));
                for k in 1..grid.len() {
                    let next = step.mul_unchecked(&powers[k - 1]);
                    powers.push(next);
                }
                Ok(Transitions {
                    kind: TransitionKind::Powers(powers),
                })
            }
            None => Ok(Transitions {
                kind: TransitionKind::Direct {
                    semigroup: self.clone(),
                    times: grid.times().to_vec(),
                },
            }),
        }
    }

    /// `k ↦ S_{t_k} y`.
    pub fn orbit(&self, grid: &TimeGrid, y: &[f64]) -> Result<SampledPath> {
        self.check_vec(y)?;
        let tr = self.transitions(grid)?;
        let mut values = Vec::with_capacity(grid.len() * y.len());
        for k in 0..grid.len() {
            values.extend(tr.get(0, k).matvec_unchecked(y));
        }
        SampledPath::new(grid.clone(), y.len(), values)
    }

    fn check_vec(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "semigroup state",
                expected: self.dim(),
                found: y.len(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum TransitionKind {
    Powers(Vec<Mat>),
    Direct { semigroup: MatrixSemigroup, times: Vec<f64> },
}

#[derive(Debug, Clone)]
pub struct Transitions {
    kind: TransitionKind,
}

impl Transitions {
    /// `S_{t_j − t_i}` for `i ≤ j`.
    pub fn get(&self, i: usize, j: usize) -> Mat {
        match &self.kind {
            TransitionKind::Powers(p) => p[j - i].clone(),
            TransitionKind::Direct { semigroup, times } => semigroup
                .at(times[j] - times[i])
                .expect("nonnegative time on an increasing grid"),
        }
    }
}

/// `exp(tA) y`.
pub fn semigroup_apply(g: &MatrixSemigroup, t: f64, y: &[f64]) -> Result<Vec<f64>> {
    g.check_vec(y)?;
    Ok(g.at(t)?.matvec_unchecked(y))
}

/// `S · Y` for an operator-valued `Y ∈ L(ℝ^d, ℝ^m)` stored flat.
fn apply_to_operator(s: &Mat, y: &[f64], d: usize) -> Vec<f64> {
    let m = s.rows();
    let mut out = vec![0.0; m * d];
    for i in 0..m {
        for j in 0..m {
            let sij = s[(i, j)];
            if sij == 0.0 {
                continue;
            }
            for a in 0..d {
                out[i * d + a] += sij * y[j * d + a];
            }
        }
    }
    out
}

fn apply_to_rows(s: &Mat, yp: &Mat, d: usize) -> Mat {
    let cols = yp.cols();
    let mut out = Mat::zeros(yp.rows(), cols);
    for c in 0..cols {
        let column: Vec<f64> = (0..yp.rows()).map(|r| yp[(r, c)]).collect();
        for (r, v) in apply_to_operator(s, &column, d).into_iter().enumerate() {
            out[(r, c)] = v;
        }
    }
    out
}

fn check_integrand(g: &MatrixSemigroup, c: &ControlledPath, r: &RoughPath) -> Result<()> {
    if c.value_dim() != g.dim() * r.dim() {
        return Err(Error::DimensionMismatch {
            context: "convolution integrand (value dimension must be m·d)",
            expected: g.dim() * r.dim(),
            found: c.value_dim(),
        });
    }
    Ok(())
}

fn convolution_with(
    tr: &Transitions,
    c: &ControlledPath,
    r: &RoughPath,
    t_index: usize,
) -> Result<Vec<f64>> {
    let d = r.dim();
    let n = c.grid().len();
    let mut values = Vec::with_capacity(c.values().len());
    let mut derivs = Vec::with_capacity(n);
    for k in 0..n {
        if k <= t_index {
            let s = tr.get(k, t_index);
            values.extend(apply_to_operator(&s, c.value(k), d));
            derivs.push(apply_to_rows(&s, c.derivative(k), d));
        } else {
            values.extend_from_slice(c.value(k));
            derivs.push(c.derivative(k).clone());
        }
    }
    let upsilon = ControlledPath::new(c.grid().clone(), c.value_dim(), d, values, derivs)?;
    Ok(rough_integral(&upsilon, r, 0, t_index)?.value)
}

/// `∫_0^{t} S_{t−s} Y_s d𝐗_s` at `t = t_{t_index}`, as the rough integral of
/// `(Υ, Υ′) = (S_{t−·} Y, S_{t−·} Y′)`.
pub fn rough_convolution(
    g: &MatrixSemigroup,
    c: &ControlledPath,
    r: &RoughPath,
    t_index: usize,
) -> Result<Vec<f64>> {
    check_integrand(g, c, r)?;
    r.grid().check_index(t_index)?;
    c.check_driver(r.path())?;
    convolution_with(&g.transitions(r.grid())?, c, r, t_index)
}

/// [`rough_convolution`] at every node, evaluated in parallel.
pub fn rough_convolutions(g: &MatrixSemigroup, c: &ControlledPath, r: &RoughPath) -> Result<Vec<Vec<f64>>> {
    check_integrand(g, c, r)?;
    c.check_driver(r.path())?;
    let tr = g.transitions(r.grid())?;
    (0..r.grid().len())
        .into_par_iter()
        .map(|k| convolution_with(&tr, c, r, k))
        .collect()
}

/// Trapezoidal `∫_0^t S_{t−s} P_s ds` at `t = t_{t_index}`.
pub fn drift_convolution(g: &MatrixSemigroup, p: &SampledPath, t_index: usize) -> Result<Vec<f64>> {
    p.grid().check_index(t_index)?;
    g.check_vec(p.value(0))?;
    let tr = g.transitions(p.grid())?;
    Ok(drift_convolution_with(&tr, p, t_index))
}

fn drift_convolution_with(tr: &Transitions, p: &SampledPath, t_index: usize) -> Vec<f64> {
    let mut acc = vec![0.0; p.dim()];
    for k in 0..t_index {
        let h = 0.5 * p.grid().dt(k);
        let left = tr.get(k, t_index).matvec_unchecked(p.value(k));
        let right = tr.get(k + 1, t_index).matvec_unchecked(p.value(k + 1));
        for ((a, l), r) in acc.iter_mut().zip(&left).zip(&right) {
            *a += h * (l + r);
        }
    }
    acc
}

/// `dY = (AY + f₀) dt + f d𝐗`, `Y_0 = ξ`.
#[derive(Debug, Clone)]
pub struct RPDEProblem {
    semigroup: MatrixSemigroup,
    base: RDEProblem,
}

impl RPDEProblem {
    pub fn new(
        semigroup: MatrixSemigroup,
        driver: RoughPath,
        drift: FunctionModel,
        diffusion: FunctionModel,
        xi: Vec<f64>,
    ) -> Result<Self> {
        if semigroup.dim() != xi.len() {
            return Err(Error::DimensionMismatch {
                context: "RPDEProblem generator",
                expected: xi.len(),
                found: semigroup.dim(),
            });
        }
        Ok(RPDEProblem {
            semigroup,
            base: RDEProblem::new(driver, drift, diffusion, xi)?,
        })
    }

    pub fn semigroup(&self) -> &MatrixSemigroup {
        &self.semigroup
    }

    /// The problem without the generator.
    pub fn base(&self) -> &RDEProblem {
        &self.base
    }
}

/// `Y_{k+1} = S_{Δt_k}(Y_k + f₀Δt + f·X_{k,k+1} + (D_y f·f):𝕏_{k,k+1})`.
pub fn solve_mild_step(problem: &RPDEProblem) -> Result<RDESolution> {
    let base = &problem.base;
    let tr = problem.semigroup.transitions(base.grid())?;
    let values = base.march(0, base.grid().steps(), base.xi(), |k, y| {
        tr.get(k, k + 1).matvec_unchecked(&y)
    })?;
    Ok(RDESolution {
        path: base.controlled_solution(values)?,
        diagnostics: Diagnostics {
            converged: true,
            ..Diagnostics::default()
        },
    })
}

/// Picard iteration of the mild fixed-point map
/// `Y_t = S_{t−a} ξ_a + ∫_a^t S_{t−s} f₀(Y_s) ds + ∫_a^t S_{t−s} f(Y_s) d𝐗_s`
/// on consecutive windows, concatenated. Each window starts from the orbit
/// `(S_{·−a} ξ_a, f(a, ξ_a))`.
///
/// Both convolutions are accumulated with the recursion
/// `C_{k+1} = S_{Δt_k}(C_k + germ_k)`, an exact rewrite of the sums
/// computed by [`drift_convolution`] and [`rough_convolution`].
pub fn solve_mild_picard(
    problem: &RPDEProblem,
    window: f64,
    max_iter: usize,
    tol: f64,
) -> Result<RDESolution> {
    let base = &problem.base;
    let grid = base.grid();
    let (p, d) = (base.state_dim(), base.driver_dim());
    let tr = problem.semigroup.transitions(grid)?;
    let outcome = picard_engine(
        grid,
        base.xi(),
        window,
        max_iter,
        tol,
        |a, b, xi_w| {
            let anchor = base.diffusion_matrix(grid.t(a), xi_w)?;
            let orbit = (a..=b).flat_map(|k| tr.get(a, k).matvec_unchecked(xi_w)).collect();
            Ok((orbit, vec![anchor; b - a + 1]))
        },
        |a, b| {
            let local = base.driver().window(a, b)?;
            let t0 = grid.t(a);
            let f = base.diffusion().time_shifted(t0);
            let f0 = base.drift().time_shifted(t0);
            let steps: Vec<Mat> = (a..b).map(|k| tr.get(k, k + 1)).collect();
            Ok(Box::new(move |xi_w: &[f64], y: &[f64], yp: &[Mat]| {
                let lgrid = local.grid();
                let c = ControlledPath::new(lgrid.clone(), p, d, y.to_vec(), yp.to_vec())?;
                let fy = compose_function(&f, &c)?;
                let g = drift_path(&f0, lgrid, y, p)?;
                let mut state = xi_w.to_vec();
                let mut drift = vec![0.0; p];
                let mut conv = vec![0.0; p];
                let mut values = Vec::with_capacity(y.len());
                values.extend_from_slice(xi_w);
                for (k, s) in steps.iter().enumerate() {
                    let h = 0.5 * lgrid.dt(k);
                    let dx = local.path().increment_unchecked(k, k + 1);
                    let block = local.block(k);
                    let fv = fy.value(k);
                    let fd = fy.derivative(k);
                    for i in 0..p {
                        drift[i] += h * g.value(k)[i];
                        let mut germ = 0.0;
                        for a2 in 0..d {
                            germ += fv[i * d + a2] * dx[a2];
                            for b2 in 0..d {
                                germ += fd[(i * d + a2, b2)] * block[(b2, a2)];
                            }
                        }
                        conv[i] += germ;
                    }
                    state = s.matvec_unchecked(&state);
                    drift = s.matvec_unchecked(&drift);
                    conv = s.matvec_unchecked(&conv);
                    for i in 0..p {
                        drift[i] += h * g.value(k + 1)[i];
                    }
                    values.extend((0..p).map(|i| state[i] + drift[i] + conv[i]));
                }
                let derivs = (0..lgrid.len())
                    .map(|k| Mat::from_vec(p, d, fy.value(k).to_vec()))
                    .collect::<Result<Vec<_>>>()?;
                Ok((values, derivs))
            }) as WindowMap)
        },
    )?;
    Ok(RDESolution {
        path: base.controlled_solution(outcome.values)?,
        diagnostics: Diagnostics {
            residual: None,
            iterations: outcome.iterations,
            converged: outcome.converged,
            halvings: outcome.halvings,
        },
    })
}

/// `max_k |Y_k − S_{t_k}ξ − ∫_0^{t_k} S_{t_k−s} f₀(Y_s) ds − ∫_0^{t_k} S_{t_k−s} f(Y_s) d𝐗_s|`
/// with both convolutions evaluated node by node.
pub fn mild_residual_check(solution: &RDESolution, problem: &RPDEProblem) -> Result<f64> {
    let base = &problem.base;
    let c = &solution.path;
    c.check_driver(base.driver().path())?;
    let p = base.state_dim();
    let grid = base.grid();
    let g = &problem.semigroup;
    let tr = g.transitions(grid)?;
    let fy = compose_function(base.diffusion(), c)?;
    let drift = drift_path(base.drift(), grid, c.values(), p)?;
    let residuals = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let orbit = tr.get(0, k).matvec_unchecked(base.xi());
            let dc = drift_convolution_with(&tr, &drift, k);
            let rc = convolution_with(&tr, &fy, base.driver(), k)?;
            let r: Vec<f64> = (0..p)
                .map(|i| c.value(k)[i] - orbit[i] - dc[i] - rc[i])
                .collect();
            Ok(euclidean_norm(&r))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(residuals.into_iter().fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integral::{drift_integral, rough_integral};
    use crate::noise::{ito_enhance, sample_bm, strat_enhance, NoiseConfig};
    use crate::rde::{solve_picard, solve_step_scheme};
    use crate::rough_path::lift_piecewise_linear;
    use crate::tensor::distance;
    use proptest::prelude::*;

    fn mat(rows: &[&[f64]]) -> Mat {
        Mat::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn bm(d: usize, n: usize, seed: u64, strat: bool) -> RoughPath {
        let cfg = NoiseConfig::new(d, TimeGrid::uniform(n, 1.0).unwrap(), 4, seed).unwrap();
        let fine = sample_bm(&cfg, 0);
        if strat {
            strat_enhance(&fine, cfg.coarse()).unwrap()
        } else {
            ito_enhance(&fine, cfg.coarse()).unwrap()
        }
    }

    #[test]
    fn expm_examples() {
        let z = expm(&Mat::zeros(3, 3)).unwrap();
        assert_eq!(z, Mat::identity(3));
        let e = expm(&Mat::diag(&[-1.0, -2.0])).unwrap();
        assert!((e[(0, 0)] - (-1f64).exp()).abs() < 1e-15);
        assert!((e[(1, 1)] - (-2f64).exp()).abs() < 1e-15);
        // rotation generator
        let r = expm(&mat(&[&[0.0, -3.0], &[3.0, 0.0]])).unwrap();
        assert!((r[(0, 0)] - 3f64.cos()).abs() < 1e-13);
        assert!((r[(1, 0)] - 3f64.sin()).abs() < 1e-13);
        // large norm exercises squaring
        let big = expm(&Mat::diag(&[20.0, -20.0])).unwrap();
        assert!((big[(0, 0)] / 20f64.exp() - 1.0).abs() < 1e-13);
        assert!(expm(&Mat::zeros(2, 3)).is_err());
    }

    #[test]
    fn apply_examples() {
        let g = MatrixSemigroup::new(Mat::diag(&[-1.0, -2.0])).unwrap();
        let v = semigroup_apply(&g, 1.0, &[1.0, 1.0]).unwrap();
        assert!((v[0] - (-1f64).exp()).abs() < 1e-12);
        assert!((v[1] - (-2f64).exp()).abs() < 1e-12);
        assert!(semigroup_apply(&g, -0.1, &[1.0, 1.0]).is_err());
        let zero = MatrixSemigroup::new(Mat::zeros(2, 2)).unwrap();
        assert_eq!(semigroup_apply(&zero, 7.5, &[3.0, -1.0]).unwrap(), vec![3.0, -1.0]);
    }

    #[test]
    fn convolution_reduces_to_integral() {
        let r = bm(1, 128, 1, false);
        let id = ControlledPath::identity_of(r.path());
        let sine = FunctionModel::new(1, 1, |_, y| vec![y[0].sin()])
            .with_derivative(|_, y| Mat::from_vec(1, 1, vec![y[0].cos()]).unwrap());
        let c = compose_function(&sine, &id).unwrap();
        let g = MatrixSemigroup::new(Mat::zeros(1, 1)).unwrap();
        for k in [0, 1, 64, 128] {
            let conv = rough_convolution(&g, &c, &r, k).unwrap();
            let int = rough_integral(&c, &r, 0, k).unwrap().value;
            assert!((conv[0] - int[0]).abs() < 1e-12);
        }
        let p = r.path().clone();
        assert!(
            (drift_convolution(&g, &p, 100).unwrap()[0] - drift_integral(&p, 0, 100).unwrap()[0]).abs()
                < 1e-12
        );
    }

    #[test]
    fn convolution_of_constant_against_time() {
        let a = mat(&[&[-1.0, 0.5], &[0.0, -2.0]]);
        let g = MatrixSemigroup::new(a).unwrap();
        let grid = TimeGrid::uniform(1024, 1.0).unwrap();
        let x = lift_piecewise_linear(&SampledPath::from_fn(grid.clone(), 1, |t| vec![t]).unwrap());
        let cvec = [1.0, -1.0];
        let c = ControlledPath::constant(grid.clone(), &cvec, 1);
        let conv = rough_convolution(&g, &c, &x, 1024).unwrap();
        // Υ′ = S Y′ = 0, so the compensated sum is the left-point rule
        let mut left = [0.0; 2];
        for k in 0..1024 {
            let v = semigroup_apply(&g, 1.0 - grid.t(k), &cvec).unwrap();
            left[0] += v[0] * grid.dt(k);
            left[1] += v[1] * grid.dt(k);
        }
        assert!(distance(&conv, &left) < 1e-12);
        let integrand = SampledPath::from_fn(grid, 2, |s| semigroup_apply(&g, 1.0 - s, &cvec).unwrap()).unwrap();
        let quad = drift_integral(&integrand, 0, 1024).unwrap();
        let h = 1.0 / 1024.0;
        let first_order = 0.5 * h * distance(&cvec, &semigroup_apply(&g, 1.0, &cvec).unwrap());
        assert!(distance(&conv, &quad) <= first_order * (1.0 + 1e-3));
    }

    #[test]
    fn drift_convolution_closed_forms() {
        let g = MatrixSemigroup::new(Mat::diag(&[-1.0])).unwrap();
        let grid = TimeGrid::uniform(1 << 12, 1.0).unwrap();
        let p = SampledPath::constant(grid.clone(), &[1.0]).unwrap();
        let z = drift_convolution(&g, &p, 1 << 12).unwrap()[0];
        assert!((z - (1.0 - (-1f64).exp())).abs() < 1e-8);
        let g = MatrixSemigroup::new(mat(&[&[-1.0, 2.0], &[-2.0, -0.5]])).unwrap();
        let xi = [1.0, 0.5];
        let orbit = g.orbit(&grid, &xi).unwrap();
        let z = drift_convolution(&g, &orbit, 1 << 12).unwrap();
        let want = semigroup_apply(&g, 1.0, &xi).unwrap();
        assert!(distance(&z, &want) < 1e-8);
    }

    #[test]
    fn mild_step_reductions() {
        let r = bm(2, 256, 2, true);
        let lin = FunctionModel::linear(mat(&[&[0.1, 0.0], &[0.2, -0.3]]));
        let diff = FunctionModel::linear(mat(&[&[0.3, 0.0], &[0.1, 0.2], &[0.0, 0.4], &[-0.2, 0.1]]));
        let xi = vec![1.0, -0.5];
        let zero = MatrixSemigroup::new(Mat::zeros(2, 2)).unwrap();
        let pb = RPDEProblem::new(zero, r.clone(), lin.clone(), diff.clone(), xi.clone()).unwrap();
        let mild = solve_mild_step(&pb).unwrap();
        let plain = solve_step_scheme(pb.base()).unwrap();
        assert!(mild.sup_distance(&plain).unwrap() <= 1e-12);

        let a = mat(&[&[-1.0, 0.3], &[0.0, -2.0]]);
        let g = MatrixSemigroup::new(a).unwrap();
        let pb = RPDEProblem::new(g.clone(), r, FunctionModel::zero(2, 2), FunctionModel::zero(2, 4), xi.clone()).unwrap();
        let s = solve_mild_step(&pb).unwrap();
        for k in 0..=256 {
            let want = semigroup_apply(&g, pb.base().grid().t(k), &xi).unwrap();
            assert!(distance(s.value(k), &want) <= 1e-10);
        }
        let pic = solve_mild_picard(&pb, 0.125, 10, 1e-12).unwrap();
        assert!(pic.diagnostics.iterations.iter().all(|&i| i == 1));
    }

    #[test]
    fn mild_picard_reduces_and_agrees() {
        let r = bm(1, 512, 3, true);
        let sine = FunctionModel::new(1, 1, |_, y| vec![0.5 * y[0].sin()])
            .with_derivative(|_, y| Mat::from_vec(1, 1, vec![0.5 * y[0].cos()]).unwrap());
        let drift = FunctionModel::linear(Mat::from_vec(1, 1, vec![0.3]).unwrap());
        let zero = MatrixSemigroup::new(Mat::zeros(1, 1)).unwrap();
        let pb = RPDEProblem::new(zero, r.clone(), drift.clone(), sine.clone(), vec![0.7]).unwrap();
        let tol = 1e-12;
        let mild = solve_mild_picard(&pb, 0.125, 100, tol).unwrap();
        let plain = solve_picard(pb.base(), 0.125, 100, tol).unwrap();
        assert!(mild.sup_distance(&plain).unwrap() <= 1e-10);

        let g = MatrixSemigroup::new(Mat::diag(&[-1.5])).unwrap();
        let pb = RPDEProblem::new(g, r, drift, sine, vec![0.7]).unwrap();
        let tol = 1e-10;
        let pic = solve_mild_picard(&pb, 0.125, 100, tol).unwrap();
        assert!(pic.diagnostics.converged);
        assert!(mild_residual_check(&pic, &pb).unwrap() <= 10.0 * tol);
        let step = solve_mild_step(&pb).unwrap();
        assert!(pic.sup_distance(&step).unwrap() <= 2e-3);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn semigroup_laws(
            entries in proptest::collection::vec(-1.5f64..1.5, 9),
            s in 0.0f64..1.0,
            t in 0.0f64..1.0,
        ) {
            let a = Mat::from_vec(3, 3, entries).unwrap();
            let g = MatrixSemigroup::new(a.clone()).unwrap();
            prop_assert_eq!(g.at(0.0).unwrap(), Mat::identity(3));
            let lhs = g.at(s + t).unwrap();
            let rhs = g.at(s).unwrap().matmul(&g.at(t).unwrap()).unwrap();
            prop_assert!(frobenius_norm(&(&lhs - &rhs)) <= 1e-10);
            let st = g.at(t).unwrap();
            let comm = &st.matmul(&a).unwrap() - &a.matmul(&st).unwrap();
            prop_assert!(frobenius_norm(&comm) <= 1e-10);
        }

        #[test]
        fn generator_finite_difference(
            entries in proptest::collection::vec(-1.5f64..1.5, 9),
            y in proptest::collection::vec(-2.0f64..2.0, 3),
        ) {
            let a = Mat::from_vec(3, 3, entries).unwrap();
            let g = MatrixSemigroup::new(a.clone()).unwrap();
            let h = 1e-6;
            let sy = semigroup_apply(&g, h, &y).unwrap();
            let ay = a.matvec(&y).unwrap();
            let err: Vec<f64> = (0..3).map(|i| (sy[i] - y[i]) / h - ay[i]).collect();
            prop_assert!(euclidean_norm(&err) <= 1e-4);
        }

        #[test]
        fn growth_bound(
            entries in proptest::collection::vec(-1.5f64..1.5, 9),
            y in proptest::collection::vec(-2.0f64..2.0, 3),
            t in 0.0f64..2.0,
        ) {
            let g = MatrixSemigroup::new(Mat::from_vec(3, 3, entries).unwrap()).unwrap();
            let sy = semigroup_apply(&g, t, &y).unwrap();
            let bound = g.growth_m() * (g.growth_omega() * t).exp() * euclidean_norm(&y);
            prop_assert!(euclidean_norm(&sy) <= bound * (1.0 + 1e-12));
        }
    }
}
