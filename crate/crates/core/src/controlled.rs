//! Controlled rough paths and their composition calculus.
//!
//! A controlled path stores `Y_k ∈ ℝ^m` and a Gubinelli derivative
//! `Y′_k ∈ ℝ^{m×d}` at every node; row index is the value component, column
//! index the driver direction. Operator-valued integrands `Y_k ∈ L(ℝ^d, ℝ^p)`
//! use `m = p·d` with value index `i·d + a`, so `Y′` row `i·d + a`, column `b`
//! is `∂Y[i][a] / ∂X^b`.
//!
//! The remainder `R^Y_{s,t} = Y_{s,t} − Y′_s X_{s,t}` is never stored.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fmt_f64;
use crate::grid::{two_param_holder_seminorm, SampledPath, TimeGrid};
use crate::tensor::{euclidean_norm, frobenius_norm, Mat};

pub type Evaluator = Arc<dyn Fn(f64, &[f64]) -> Vec<f64> + Send + Sync>;
pub type JacobianEvaluator = Arc<dyn Fn(f64, &[f64]) -> Mat + Send + Sync>;
pub type BilinearEvaluator = Arc<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>;

/// A coefficient `f(t, y)` with `y ∈ ℝ^in` and flat output in `ℝ^out`, an
/// optional spatial Jacobian `D_y f(t, y) ∈ ℝ^{out×in}`, and user-declared
/// bound constants. Evaluators must be pure.
#[derive(Clone)]
pub struct FunctionModel {
    in_dim: usize,
    out_dim: usize,
    f: Evaluator,
    df: Option<JacobianEvaluator>,
    bound: Option<f64>,
    lipschitz: Option<f64>,
}

impl fmt::Debug for FunctionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FunctionModel")
            .field("in_dim", &self.in_dim)
            .field("out_dim", &self.out_dim)
            .field("has_derivative", &self.df.is_some())
            .field("bound", &self.bound)
            .field("lipschitz", &self.lipschitz)
            .finish()
    }
}

impl FunctionModel {
    pub fn new<F>(in_dim: usize, out_dim: usize, f: F) -> Self
    where
        F: Fn(f64, &[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        FunctionModel {
            in_dim,
            out_dim,
            f: Arc::new(f),
            df: None,
            bound: None,
            lipschitz: None,
        }
    }

    pub fn with_derivative<D>(mut self, df: D) -> Self
    where
        D: Fn(f64, &[f64]) -> Mat + Send + Sync + 'static,
    {
        self.df = Some(Arc::new(df));
        self
    }

    /// Declared `‖f‖_{C_b^{2α,k}}`.
    pub fn with_bound(mut self, bound: f64) -> Self {
        self.bound = Some(bound);
        self
    }

    /// Declared `‖f‖_Lip`.
    pub fn with_lipschitz(mut self, l: f64) -> Self {
        self.lipschitz = Some(l);
        self
    }

    pub fn zero(in_dim: usize, out_dim: usize) -> Self {
        FunctionModel::new(in_dim, out_dim, move |_, _| vec![0.0; out_dim])
            .with_derivative(move |_, _| Mat::zeros(out_dim, in_dim))
            .with_bound(0.0)
            .with_lipschitz(0.0)
    }

    pub fn constant(in_dim: usize, value: Vec<f64>) -> Self {
        let out = value.len();
        let bound = euclidean_norm(&value);
        FunctionModel::new(in_dim, out, move |_, _| value.clone())
            .with_derivative(move |_, _| Mat::zeros(out, in_dim))
            .with_bound(bound)
            .with_lipschitz(0.0)
    }

    /// `f(t, y) = A y + b`.
    pub fn affine(a: Mat, b: Vec<f64>) -> Result<Self> {
        if b.len() != a.rows() {
            return Err(Error::DimensionMismatch {
                context: "FunctionModel::affine",
                expected: a.rows(),
                found: b.len(),
            });
        }
        let (out, inp) = (a.rows(), a.cols());
        let lip = frobenius_norm(&a);
        let a2 = a.clone();
        Ok(FunctionModel::new(inp, out, move |_, y| {
            let mut v = a.matvec_unchecked(y);
            for (x, c) in v.iter_mut().zip(&b) {
                *x += c;
            }
            v
        })
        .with_derivative(move |_, _| a2.clone())
        .with_lipschitz(lip))
    }

    pub fn linear(a: Mat) -> Self {
        let rows = a.rows();
        FunctionModel::affine(a, vec![0.0; rows]).expect("shapes agree")
    }

    /// `(t, y) ↦ f(t + offset, y)`.
    pub(crate) fn time_shifted(&self, offset: f64) -> FunctionModel {
        if offset == 0.0 {
            return self.clone();
        }
        let f = self.f.clone();
        let df = self.df.clone();
        FunctionModel {
            in_dim: self.in_dim,
            out_dim: self.out_dim,
            f: Arc::new(move |t, y| f(t + offset, y)),
            df: df.map(|d| -> JacobianEvaluator { Arc::new(move |t, y| d(t + offset, y)) }),
            bound: self.bound,
            lipschitz: self.lipschitz,
        }
    }

    #[inline]
    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    #[inline]
    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn bound(&self) -> Option<f64> {
        self.bound
    }

    pub fn lipschitz(&self) -> Option<f64> {
        self.lipschitz
    }

    pub fn has_derivative(&self) -> bool {
        self.df.is_some()
    }

    pub fn eval(&self, t: f64, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.in_dim {
            return Err(Error::DimensionMismatch {
                context: "FunctionModel::eval (input)",
                expected: self.in_dim,
                found: y.len(),
            });
        }
        let v = (self.f)(t, y);
        if v.len() != self.out_dim {
            return Err(Error::DimensionMismatch {
                context: "FunctionModel::eval (output)",
                expected: self.out_dim,
                found: v.len(),
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                context: "function evaluator".into(),
                t,
                y: y.to_vec(),
            });
        }
        Ok(v)
    }

    pub fn jacobian(&self, t: f64, y: &[f64]) -> Result<Mat> {
        let df = self.df.as_ref().ok_or(Error::MissingDerivative)?;
        if y.len() != self.in_dim {
            return Err(Error::DimensionMismatch {
                context: "FunctionModel::jacobian (input)",
                expected: self.in_dim,
                found: y.len(),
            });
        }
        let m = df(t, y);
        if m.rows() != self.out_dim || m.cols() != self.in_dim {
            return Err(Error::DimensionMismatch {
                context: "FunctionModel::jacobian (output)",
                expected: self.out_dim * self.in_dim,
                found: m.rows() * m.cols(),
            });
        }
        if m.data().iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                context: "derivative evaluator".into(),
                t,
                y: y.to_vec(),
            });
        }
        Ok(m)
    }

    /// Checks `|D_y f(t,y)·h − (f(t,y+h) − f(t,y))| ≤ 1e-3·|h|` for `|h| = step`
    /// on `probes` random points with `t ∈ [0, horizon]`, `y ∈ [−radius, radius]^in`.
    pub fn validate_derivative(
        &self,
        probes: usize,
        horizon: f64,
        radius: f64,
        step: f64,
        seed: u64,
    ) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..probes {
            let t = rng.gen::<f64>() * horizon;
            let y: Vec<f64> = (0..self.in_dim)
                .map(|_| radius * (2.0 * rng.gen::<f64>() - 1.0))
                .collect();
            let mut h: Vec<f64> = (0..self.in_dim).map(|_| rng.gen::<f64>() - 0.5).collect();
            let norm = euclidean_norm(&h).max(1e-300);
            h.iter_mut().for_each(|x| *x *= step / norm);
            let y_plus: Vec<f64> = y.iter().zip(&h).map(|(a, b)| a + b).collect();
            let base = self.eval(t, &y)?;
            let moved = self.eval(t, &y_plus)?;
            let lin = self.jacobian(t, &y)?.matvec_unchecked(&h);
            let defect = euclidean_norm(
                &lin.iter()
                    .zip(moved.iter().zip(&base))
                    .map(|(l, (m, b))| l - (m - b))
                    .collect::<Vec<_>>(),
            );
            let bound = 1e-3 * step;
            if defect > bound {
                return Err(Error::DerivativeCheck {
                    t,
                    y,
                    defect,
                    bound,
                });
            }
        }
        Ok(())
    }
}

/// `(Y, Y′)` sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlledPath {
    grid: TimeGrid,
    value_dim: usize,
    driver_dim: usize,
    values: Vec<f64>,
    derivs: Vec<Mat>,
}

/// The three controlled (semi)norms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlledNorms {
    /// `‖Y′‖_α`
    pub derivative: f64,
    /// `‖R^Y‖_{2α}`
    pub remainder: f64,
    /// `‖Y,Y′‖_{X,2α} = ‖Y′‖_α + ‖R^Y‖_{2α}`
    pub seminorm: f64,
    /// `|Y,Y′|_{X,2α} = |Y′_0| + ‖Y,Y′‖_{X,2α}`
    pub with_derivative: f64,
    /// `⫴Y,Y′⫴_{X,2α} = |Y_0| + |Y′_0| + ‖Y,Y′‖_{X,2α}`
    pub norm: f64,
}

impl ControlledPath {
    pub fn new(
        grid: TimeGrid,
        value_dim: usize,
        driver_dim: usize,
        values: Vec<f64>,
        derivs: Vec<Mat>,
    ) -> Result<Self> {
        if values.len() != grid.len() * value_dim {
            return Err(Error::DimensionMismatch {
                context: "ControlledPath::new (values)",
                expected: grid.len() * value_dim,
                found: values.len(),
            });
        }
        if derivs.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                context: "ControlledPath::new (derivatives)",
                expected: grid.len(),
                found: derivs.len(),
            });
        }
        for m in &derivs {
            if m.rows() != value_dim || m.cols() != driver_dim {
                return Err(Error::DimensionMismatch {
                    context: "ControlledPath::new (derivative shape)",
                    expected: value_dim * driver_dim,
                    found: m.rows() * m.cols(),
                });
            }
        }
        if values.iter().chain(derivs.iter().flat_map(|m| m.data())).any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("controlled path has non-finite entries".into()));
        }
        Ok(ControlledPath {
            grid,
            value_dim,
            driver_dim,
            values,
            derivs,
        })
    }

    /// `(X, Id)` for a driver path `X`.
    pub fn identity_of(x: &SampledPath) -> Self {
        let d = x.dim();
        ControlledPath {
            grid: x.grid().clone(),
            value_dim: d,
            driver_dim: d,
            values: x.values().to_vec(),
            derivs: vec![Mat::identity(d); x.grid().len()],
        }
    }

    /// `(c, 0)`.
    pub fn constant(grid: TimeGrid, value: &[f64], driver_dim: usize) -> Self {
        let m = value.len();
        let n = grid.len();
        ControlledPath {
            grid,
            value_dim: m,
            driver_dim,
            values: value.repeat(n),
            derivs: vec![Mat::zeros(m, driver_dim); n],
        }
    }

    /// `(Y, 0)` for a path with no Gubinelli derivative.
    pub fn without_derivative(y: &SampledPath, driver_dim: usize) -> Self {
        let m = y.dim();
        ControlledPath {
            grid: y.grid().clone(),
            value_dim: m,
            driver_dim,
            values: y.values().to_vec(),
            derivs: vec![Mat::zeros(m, driver_dim); y.grid().len()],
        }
    }

    #[inline]
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    #[inline]
    pub fn value_dim(&self) -> usize {
        self.value_dim
    }

    #[inline]
    pub fn driver_dim(&self) -> usize {
        self.driver_dim
    }

    #[inline]
    pub fn value(&self, k: usize) -> &[f64] {
        &self.values[k * self.value_dim..(k + 1) * self.value_dim]
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn derivative(&self, k: usize) -> &Mat {
        &self.derivs[k]
    }

    #[inline]
    pub fn derivatives(&self) -> &[Mat] {
        &self.derivs
    }

    pub fn to_path(&self) -> SampledPath {
        SampledPath::new(self.grid.clone(), self.value_dim, self.values.clone())
            .expect("validated on construction")
    }

    pub fn derivative_path(&self) -> SampledPath {
        let flat = self.derivs.iter().flat_map(|m| m.data().to_vec()).collect();
        SampledPath::new(
            self.grid.clone(),
            self.value_dim * self.driver_dim,
            flat,
        )
        .expect("validated on construction")
    }

    pub(crate) fn check_driver(&self, x: &SampledPath) -> Result<()> {
        if x.grid() != &self.grid {
            return Err(Error::GridMismatch(
                "controlled path and driver use different grids".into(),
            ));
        }
        if x.dim() != self.driver_dim {
            return Err(Error::DimensionMismatch {
                context: "controlled path driver dimension",
                expected: self.driver_dim,
                found: x.dim(),
            });
        }
        Ok(())
    }

    /// `R^Y_{t_i,t_j} = Y_{t_i,t_j} − Y′_{t_i} X_{t_i,t_j}`.
    pub fn remainder(&self, x: &SampledPath, i: usize, j: usize) -> Result<Vec<f64>> {
        self.check_driver(x)?;
        self.grid.check_index(i)?;
        self.grid.check_index(j)?;
        Ok(self.remainder_unchecked(x, i, j))
    }

    pub(crate) fn remainder_unchecked(&self, x: &SampledPath, i: usize, j: usize) -> Vec<f64> {
        let dx = x.increment_unchecked(i, j);
        let lin = self.derivs[i].matvec_unchecked(&dx);
        self.value(j)
            .iter()
            .zip(self.value(i))
            .zip(&lin)
            .map(|((b, a), l)| b - a - l)
            .collect()
    }

    pub fn remainder_seminorm(&self, x: &SampledPath, alpha: f64) -> Result<f64> {
        self.check_driver(x)?;
        two_param_holder_seminorm(&self.grid, 2.0 * alpha, |i, j| {
            euclidean_norm(&self.remainder_unchecked(x, i, j))
        })
    }

    /// Discrete `‖Y′‖_α`, `‖R^Y‖_{2α}` and the derived (semi)norms.
    pub fn controlled_norms(&self, x: &SampledPath, alpha: f64) -> Result<ControlledNorms> {
        if !(alpha > 1.0 / 3.0 && alpha <= 0.5) {
            return Err(Error::InvalidArgument(format!(
                "controlled exponent must lie in (1/3, 1/2], got {alpha}"
            )));
        }
        let derivative = self.derivative_path().holder_seminorm(alpha)?;
        let remainder = self.remainder_seminorm(x, alpha)?;
        let seminorm = derivative + remainder;
        let with_derivative = frobenius_norm(&self.derivs[0]) + seminorm;
        Ok(ControlledNorms {
            derivative,
            remainder,
            seminorm,
            with_derivative,
            norm: euclidean_norm(self.value(0)) + with_derivative,
        })
    }

    /// `‖Y,Y′‖_{X,2α}`.
    pub fn controlled_seminorm(&self, x: &SampledPath, alpha: f64) -> Result<f64> {
        Ok(self.controlled_norms(x, alpha)?.seminorm)
    }

    /// `a·self + b·other`.
    pub fn linear_combination(&self, a: f64, other: &ControlledPath, b: f64) -> Result<Self> {
        self.check_same_shape(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        let derivs = self
            .derivs
            .iter()
            .zip(&other.derivs)
            .map(|(x, y)| {
                let mut m = x.scaled(a);
                m.axpy(b, y);
                m
            })
            .collect();
        ControlledPath::new(self.grid.clone(), self.value_dim, self.driver_dim, values, derivs)
    }

    fn check_same_grid(&self, other: &ControlledPath) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch("controlled paths use different grids".into()));
        }
        if self.driver_dim != other.driver_dim {
            return Err(Error::DimensionMismatch {
                context: "controlled paths driver dimension",
                expected: self.driver_dim,
                found: other.driver_dim,
            });
        }
        Ok(())
    }

    fn check_same_shape(&self, other: &ControlledPath) -> Result<()> {
        self.check_same_grid(other)?;
        if self.value_dim != other.value_dim {
            return Err(Error::DimensionMismatch {
                context: "controlled paths value dimension",
                expected: self.value_dim,
                found: other.value_dim,
            });
        }
        Ok(())
    }

    /// Components `range` of the value (and matching derivative rows).
    pub fn project(&self, range: std::ops::Range<usize>) -> Result<Self> {
        if range.end > self.value_dim || range.start > range.end {
            return Err(Error::IndexOutOfRange {
                index: range.end,
                max: self.value_dim,
            });
        }
        let m = range.len();
        let d = self.driver_dim;
        let values = (0..self.grid.len())
            .flat_map(|k| self.value(k)[range.clone()].to_vec())
            .collect();
        let derivs = self
            .derivs
            .iter()
            .map(|dm| {
                Mat::from_vec(m, d, dm.data()[range.start * d..range.end * d].to_vec())
                    .expect("finite")
            })
            .collect();
        ControlledPath::new(self.grid.clone(), m, d, values, derivs)
    }

    /// Writes `t, y_1.., yp_11.., r` where `r = |R^Y_{t_k,t_{k+1}}|` (0 at the
    /// last node).
    pub fn write_csv<W: Write>(&self, x: &SampledPath, mut out: W) -> Result<()> {
        self.check_driver(x)?;
        let (m, d) = (self.value_dim, self.driver_dim);
        let mut header = vec!["t".to_string()];
        header.extend((1..=m).map(|i| format!("y{i}")));
        for i in 1..=m {
            header.extend((1..=d).map(|b| format!("yp{i}_{b}")));
        }
        header.push("r".into());
        writeln!(out, "{}", header.join(","))?;
        let n = self.grid.len();
        for k in 0..n {
            let r = if k + 1 < n {
                euclidean_norm(&self.remainder_unchecked(x, k, k + 1))
            } else {
                0.0
            };
            let row: Vec<String> = std::iter::once(self.grid.t(k))
                .chain(self.value(k).iter().copied())
                .chain(self.derivs[k].data().iter().copied())
                .chain(std::iter::once(r))
                .map(fmt_f64)
                .collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// `(f(Y), D_y f(Y)·Y′)` at every node.
pub fn compose_function(f: &FunctionModel, c: &ControlledPath) -> Result<ControlledPath> {
    if f.in_dim() != c.value_dim {
        return Err(Error::DimensionMismatch {
            context: "compose_function",
            expected: f.in_dim(),
            found: c.value_dim,
        });
    }
    if !f.has_derivative() {
        return Err(Error::MissingDerivative);
    }
    let n = c.grid.len();
    let mut values = Vec::with_capacity(n * f.out_dim());
    let mut derivs = Vec::with_capacity(n);
    for k in 0..n {
        let t = c.grid.t(k);
        let y = c.value(k);
        values.extend(f.eval(t, y)?);
        derivs.push(f.jacobian(t, y)?.mul_unchecked(&c.derivs[k]));
    }
    ControlledPath::new(c.grid.clone(), f.out_dim(), c.driver_dim, values, derivs)
}

/// `(φY, φY′)` for a fixed matrix `φ`.
pub fn compose_linear(phi: &Mat, c: &ControlledPath) -> Result<ControlledPath> {
    if phi.cols() != c.value_dim {
        return Err(Error::DimensionMismatch {
            context: "compose_linear",
            expected: c.value_dim,
            found: phi.cols(),
        });
    }
    let n = c.grid.len();
    let values = (0..n).flat_map(|k| phi.matvec_unchecked(c.value(k))).collect();
    let derivs = c.derivs.iter().map(|m| phi.mul_unchecked(m)).collect();
    ControlledPath::new(c.grid.clone(), phi.rows(), c.driver_dim, values, derivs)
}

/// A bilinear map `B : ℝ^p × ℝ^q → ℝ^r`.
#[derive(Clone)]
pub struct Bilinear {
    pub left_dim: usize,
    pub right_dim: usize,
    pub out_dim: usize,
    eval: BilinearEvaluator,
}

impl fmt::Debug for Bilinear {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Bilinear({}×{}→{})", self.left_dim, self.right_dim, self.out_dim)
    }
}

impl Bilinear {
    pub fn new<B>(left_dim: usize, right_dim: usize, out_dim: usize, b: B) -> Self
    where
        B: Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        Bilinear {
            left_dim,
            right_dim,
            out_dim,
            eval: Arc::new(b),
        }
    }

    /// Scalar multiplication `ℝ × ℝ → ℝ`.
    pub fn product() -> Self {
        Bilinear::new(1, 1, 1, |a, b| vec![a[0] * b[0]])
    }

    pub fn apply(&self, y: &[f64], z: &[f64]) -> Vec<f64> {
        (self.eval)(y, z)
    }
}

/// `(B(Y,Z), B(Y′,Z) + B(Y,Z′))`.
pub fn compose_bilinear(
    b: &Bilinear,
    left: &ControlledPath,
    right: &ControlledPath,
) -> Result<ControlledPath> {
    left.check_same_grid(right)?;
    if left.value_dim != b.left_dim || right.value_dim != b.right_dim {
        return Err(Error::DimensionMismatch {
            context: "compose_bilinear",
            expected: b.left_dim * b.right_dim,
            found: left.value_dim * right.value_dim,
        });
    }
    let d = left.driver_dim;
    let n = left.grid.len();
    let mut values = Vec::with_capacity(n * b.out_dim);
    let mut derivs = Vec::with_capacity(n);
    for k in 0..n {
        let (y, z) = (left.value(k), right.value(k));
        let v = b.apply(y, z);
        if v.len() != b.out_dim {
            return Err(Error::DimensionMismatch {
                context: "compose_bilinear (output)",
                expected: b.out_dim,
                found: v.len(),
            });
        }
        values.extend(v);
        let mut dm = Mat::zeros(b.out_dim, d);
        for dir in 0..d {
            let y_dir: Vec<f64> = (0..left.value_dim).map(|i| left.derivs[k][(i, dir)]).collect();
            let z_dir: Vec<f64> = (0..right.value_dim).map(|i| right.derivs[k][(i, dir)]).collect();
            let col: Vec<f64> = b
                .apply(&y_dir, z)
                .iter()
                .zip(b.apply(y, &z_dir))
                .map(|(p, q)| p + q)
                .collect();
            for (r, val) in col.into_iter().enumerate() {
                dm[(r, dir)] = val;
            }
        }
        derivs.push(dm);
    }
    ControlledPath::new(left.grid.clone(), b.out_dim, d, values, derivs)
}

/// `((Y,Z), (Y′,Z′))`.
pub fn pair(left: &ControlledPath, right: &ControlledPath) -> Result<ControlledPath> {
    left.check_same_grid(right)?;
    let (p, q, d) = (left.value_dim, right.value_dim, left.driver_dim);
    let n = left.grid.len();
    let values = (0..n)
        .flat_map(|k| left.value(k).iter().chain(right.value(k)).copied().collect::<Vec<_>>())
        .collect();
    let derivs = (0..n)
        .map(|k| {
            let data = left.derivs[k]
                .data()
                .iter()
                .chain(right.derivs[k].data())
                .copied()
                .collect();
            Mat::from_vec(p + q, d, data).expect("finite")
        })
        .collect();
    ControlledPath::new(left.grid.clone(), p + q, d, values, derivs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{sample_bm, NoiseConfig};
    use crate::{ls_slope, tensor::outer};
    use proptest::prelude::*;

    fn bm_path(n: usize, seed: u64) -> SampledPath {
        let cfg = NoiseConfig::new(1, TimeGrid::uniform(n, 1.0).unwrap(), 1, seed).unwrap();
        sample_bm(&cfg, 0)
    }

    /// `(sin B, cos B)` style controlled path built from a scalar driver.
    fn controlled_sin(x: &SampledPath) -> ControlledPath {
        let n = x.grid().len();
        let values = (0..n).map(|k| x.value(k)[0].sin()).collect();
        let derivs = (0..n)
            .map(|k| Mat::from_vec(1, 1, vec![x.value(k)[0].cos()]).unwrap())
            .collect();
        ControlledPath::new(x.grid().clone(), 1, 1, values, derivs).unwrap()
    }

    fn sine() -> FunctionModel {
        FunctionModel::new(1, 1, |_, y| vec![y[0].sin()])
            .with_derivative(|_, y| Mat::from_vec(1, 1, vec![y[0].cos()]).unwrap())
            .with_bound(1.0)
    }

    /// Slope of log(mean |R_{s,s+h}|) against log h over dyadic h.
    fn remainder_exponent(c: &ControlledPath, x: &SampledPath) -> f64 {
        let n = x.grid().steps();
        let (mut xs, mut ys) = (vec![], vec![]);
        let mut h = 1;
        while h <= n / 16 {
            let count = n / h;
            let mean = (0..count)
                .map(|w| euclidean_norm(&c.remainder(x, w * h, (w + 1) * h).unwrap()))
                .sum::<f64>()
                / count as f64;
            xs.push((h as f64 / n as f64).ln());
            ys.push(mean.ln());
            h *= 2;
        }
        ls_slope(&xs, &ys)
    }

    #[test]
    fn remainder_examples() {
        let g = TimeGrid::uniform(1, 1.0).unwrap();
        let x = SampledPath::new(g.clone(), 1, vec![0.0, 0.4]).unwrap();
        let c = ControlledPath::new(
            g.clone(),
            1,
            1,
            vec![0.0, 0.5],
            vec![Mat::identity(1), Mat::identity(1)],
        )
        .unwrap();
        assert!((c.remainder(&x, 0, 1).unwrap()[0] - 0.1).abs() < 1e-15);
        let k = ControlledPath::constant(g.clone(), &[3.0], 1);
        assert_eq!(k.remainder(&x, 0, 1).unwrap(), vec![0.0]);
        let bm = bm_path(64, 1);
        let id = ControlledPath::identity_of(&bm);
        for i in 0..=64 {
            for j in 0..=64 {
                assert!(euclidean_norm(&id.remainder(&bm, i, j).unwrap()) < 1e-15);
            }
        }
        let other = SampledPath::new(TimeGrid::uniform(2, 1.0).unwrap(), 1, vec![0.0; 3]).unwrap();
        assert!(matches!(c.remainder(&other, 0, 1), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn seminorm_examples() {
        let bm = bm_path(128, 2);
        let k = ControlledPath::constant(bm.grid().clone(), &[1.0, -2.0], 1);
        assert_eq!(k.controlled_seminorm(&bm, 0.4).unwrap(), 0.0);

        // (Y, 0) with Y ∈ C^{2α}: seminorm equals the 2α-Hölder seminorm of Y.
        let y = SampledPath::from_fn(bm.grid().clone(), 1, |t| vec![t.powf(0.9)]).unwrap();
        let c = ControlledPath::without_derivative(&y, 1);
        let lhs = c.controlled_seminorm(&bm, 0.45).unwrap();
        assert!((lhs - y.holder_seminorm(0.9).unwrap()).abs() < 1e-12);
        assert!(c.controlled_seminorm(&bm, 0.3).is_err());
    }

    #[test]
    fn sup_bound_on_unit_horizon() {
        for seed in 0..8 {
            let bm = bm_path(128, seed);
            let c = controlled_sin(&bm);
            let norms = c.controlled_norms(&bm, 0.4).unwrap();
            let sup = c.to_path().sup_norm();
            assert!(sup <= norms.norm * (bm.holder_seminorm(0.4).unwrap() + 2.0));
        }
    }

    #[test]
    fn compose_function_examples() {
        let bm = bm_path(64, 3);
        let c = controlled_sin(&bm);
        let ident = FunctionModel::linear(Mat::identity(1));
        assert_eq!(compose_function(&ident, &c).unwrap(), c);
        let konst = FunctionModel::constant(1, vec![2.5, -1.0]);
        let k = compose_function(&konst, &c).unwrap();
        assert_eq!(k, ControlledPath::constant(c.grid().clone(), &[2.5, -1.0], 1));
        let no_deriv = FunctionModel::new(1, 1, |_, y| y.to_vec());
        assert!(matches!(compose_function(&no_deriv, &c), Err(Error::MissingDerivative)));
        let wrong = FunctionModel::zero(2, 1);
        assert!(compose_function(&wrong, &c).is_err());
        let nan = FunctionModel::new(1, 1, |_, _| vec![f64::NAN])
            .with_derivative(|_, _| Mat::zeros(1, 1));
        assert!(matches!(compose_function(&nan, &c), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn composed_remainder_has_two_alpha_decay() {
        let bm = bm_path(1 << 14, 11);
        let c = ControlledPath::identity_of(&bm);
        let s = compose_function(&sine(), &c).unwrap();
        let slope = remainder_exponent(&s, &bm);
        assert!(slope >= 2.0 * 0.4 - 0.1, "slope {slope}");
    }

    #[test]
    fn product_remainder_has_two_alpha_decay() {
        let bm = bm_path(1 << 14, 12);
        let id = ControlledPath::identity_of(&bm);
        let s = compose_function(&sine(), &id).unwrap();
        let prod = compose_bilinear(&Bilinear::product(), &s, &id).unwrap();
        let slope = remainder_exponent(&prod, &bm);
        assert!(slope >= 2.0 * 0.4 - 0.1, "slope {slope}");
    }

    #[test]
    fn hoelder_bound_for_composition() {
        for seed in 0..6 {
            let bm = bm_path(256, 20 + seed);
            let c = ControlledPath::identity_of(&bm);
            let f = sine();
            let s = compose_function(&f, &c).unwrap();
            let alpha = 0.4;
            let lhs = s.to_path().holder_seminorm(alpha).unwrap();
            let rhs = f.bound().unwrap() * (bm.holder_seminorm(alpha).unwrap() + 1.0);
            assert!(lhs <= rhs);
        }
    }

    #[test]
    fn derivative_validation() {
        sine().validate_derivative(100, 1.0, 3.0, 1e-5, 9).unwrap();
        let wrong = FunctionModel::new(1, 1, |_, y| vec![y[0].sin()])
            .with_derivative(|_, y| Mat::from_vec(1, 1, vec![-y[0].cos()]).unwrap());
        assert!(matches!(
            wrong.validate_derivative(100, 1.0, 3.0, 1e-5, 9),
            Err(Error::DerivativeCheck { .. })
        ));
    }

    #[test]
    fn affine_matches_linear_plus_shift() {
        let bm = bm_path(32, 4);
        let c = pair(&controlled_sin(&bm), &ControlledPath::identity_of(&bm)).unwrap();
        let a = Mat::from_rows(&[vec![1.0, -2.0], vec![0.5, 3.0], vec![0.0, 1.0]]).unwrap();
        let b = vec![1.0, 2.0, -3.0];
        let via_f = compose_function(&FunctionModel::affine(a.clone(), b.clone()).unwrap(), &c).unwrap();
        let lin = compose_linear(&a, &c).unwrap();
        for k in 0..=32 {
            let shifted: Vec<f64> = lin.value(k).iter().zip(&b).map(|(x, y)| x + y).collect();
            assert_eq!(via_f.value(k), shifted.as_slice());
            assert_eq!(via_f.derivative(k), lin.derivative(k));
        }
    }

    #[test]
    fn linear_examples() {
        let bm = bm_path(32, 5);
        let c = controlled_sin(&bm);
        assert_eq!(compose_linear(&Mat::identity(1), &c).unwrap(), c);
        let z = compose_linear(&Mat::zeros(2, 1), &c).unwrap();
        assert_eq!(z, ControlledPath::constant(c.grid().clone(), &[0.0, 0.0], 1));
        assert!(compose_linear(&Mat::zeros(2, 2), &c).is_err());
    }

    #[test]
    fn bilinear_examples() {
        let bm = bm_path(32, 6);
        let c = controlled_sin(&bm);
        let one = ControlledPath::constant(c.grid().clone(), &[1.0], 1);
        let prod = compose_bilinear(&Bilinear::product(), &c, &one).unwrap();
        assert_eq!(prod, c);
        let sq = compose_bilinear(&Bilinear::product(), &c, &c).unwrap();
        for k in 0..=32 {
            let expect = 2.0 * c.value(k)[0] * c.derivative(k)[(0, 0)];
            assert!((sq.derivative(k)[(0, 0)] - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn pair_examples() {
        let bm = bm_path(64, 7);
        let c = controlled_sin(&bm);
        let zero = ControlledPath::constant(c.grid().clone(), &[0.0], 1);
        let pz = pair(&c, &zero).unwrap();
        assert_eq!(
            pz.controlled_seminorm(&bm, 0.4).unwrap(),
            c.controlled_seminorm(&bm, 0.4).unwrap()
        );
        let id = ControlledPath::identity_of(&bm);
        let p = pair(&c, &id).unwrap();
        assert_eq!(p.project(0..1).unwrap(), c);
        assert_eq!(p.project(1..2).unwrap(), id);
        assert!(p.project(1..3).is_err());
    }

    #[test]
    fn csv_dump() {
        let bm = bm_path(4, 8);
        let c = controlled_sin(&bm);
        let mut buf = Vec::new();
        c.write_csv(&bm, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "t,y1,yp1_1,r");
        assert_eq!(text.lines().count(), 6);
    }

    fn random_controlled(vals: &[f64], x: &SampledPath) -> ControlledPath {
        let n = x.grid().len();
        let values = vals[..n * 2].to_vec();
        let derivs = (0..n)
            .map(|k| Mat::from_vec(2, 1, vals[n * 2 + 2 * k..n * 2 + 2 * k + 2].to_vec()).unwrap())
            .collect();
        ControlledPath::new(x.grid().clone(), 2, 1, values, derivs).unwrap()
    }

    proptest! {
        #[test]
        fn linear_image_seminorm_bound(
            vals in proptest::collection::vec(-1.0f64..1.0, 17 * 4),
            phi in proptest::collection::vec(-2.0f64..2.0, 6),
            seed in 0u64..1000,
        ) {
            let bm = bm_path(16, seed);
            let c = random_controlled(&vals, &bm);
            let phi = Mat::from_vec(3, 2, phi).unwrap();
            let img = compose_linear(&phi, &c).unwrap().controlled_norms(&bm, 0.4).unwrap();
            let src = c.controlled_norms(&bm, 0.4).unwrap();
            let op = frobenius_norm(&phi);
            prop_assert!(img.norm <= op * src.norm + 1e-12);
            prop_assert!(img.seminorm <= op * src.seminorm + 1e-12);
        }

        #[test]
        fn pair_is_subadditive(
            a in proptest::collection::vec(-1.0f64..1.0, 17 * 4),
            b in proptest::collection::vec(-1.0f64..1.0, 17 * 4),
            seed in 0u64..1000,
        ) {
            let bm = bm_path(16, seed);
            let (ca, cb) = (random_controlled(&a, &bm), random_controlled(&b, &bm));
            let p = pair(&ca, &cb).unwrap().controlled_norms(&bm, 0.4).unwrap();
            let na = ca.controlled_norms(&bm, 0.4).unwrap();
            let nb = cb.controlled_norms(&bm, 0.4).unwrap();
            prop_assert!(p.seminorm <= na.seminorm + nb.seminorm + 1e-12);
            prop_assert!(p.with_derivative <= na.with_derivative + nb.with_derivative + 1e-12);
            prop_assert!(p.norm <= na.norm + nb.norm + 1e-12);
        }

        #[test]
        fn finite_difference_consistency(a in proptest::collection::vec(-1.0f64..1.0, 4)) {
            // f(y) = (y₁ y₂, sin y₁) has an analytic Jacobian
            let f = FunctionModel::new(2, 2, |_, y| vec![y[0] * y[1], y[0].sin()])
                .with_derivative(|_, y| Mat::from_rows(&[vec![y[1], y[0]], vec![y[0].cos(), 0.0]]).unwrap());
            let seed = (a[0].to_bits() ^ a[1].to_bits()) as u64;
            prop_assert!(f.validate_derivative(100, 1.0, 2.0, 1e-5, seed).is_ok());
            let _ = outer(&a, &a);
        }
    }
}
