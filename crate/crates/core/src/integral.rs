//! The rough integral as a compensated Riemann sum, the drift integral and
//! the sewing-rate diagnostic.
//!
//! Integrands are operator valued: `Y_k ∈ L(ℝ^d, ℝ^p)` is stored flat with
//! value index `i·d + a`, and the compensator contracts
//! `Σ_{a,b} Y′[(i,a), b] · 𝕏[b][a]`.

use std::io::Write;

use crate::controlled::ControlledPath;
use crate::error::{Error, Result};
use crate::fmt_f64;
use crate::grid::SampledPath;
use crate::ls_slope;
use crate::rough_path::RoughPath;
use crate::tensor::{distance, Mat};

/// Strictly increasing node indices `i = π_0 < … < π_m = j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    nodes: Vec<usize>,
}

impl Partition {
    pub fn new(nodes: Vec<usize>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::InvalidArgument("a partition needs at least two nodes".into()));
        }
        if nodes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "partition nodes must be strictly increasing".into(),
            ));
        }
        Ok(Partition { nodes })
    }

    /// Every node from `i` to `j`.
    pub fn finest(i: usize, j: usize) -> Result<Self> {
        Partition::new((i..=j).collect())
    }

    /// Every `stride`-th node from `i`, always ending at `j`.
    pub fn strided(i: usize, j: usize, stride: usize) -> Result<Self> {
        if stride == 0 || i >= j {
            return Err(Error::InvalidArgument(format!(
                "cannot stride [{i}, {j}] by {stride}"
            )));
        }
        let mut nodes: Vec<usize> = (i..j).step_by(stride).collect();
        nodes.push(j);
        Partition::new(nodes)
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn start(&self) -> usize {
        self.nodes[0]
    }

    pub fn end(&self) -> usize {
        *self.nodes.last().unwrap()
    }
}

fn output_dim(c: &ControlledPath, r: &RoughPath) -> Result<usize> {
    c.check_driver(r.path())?;
    let d = r.dim();
    if c.value_dim() % d != 0 {
        return Err(Error::DimensionMismatch {
            context: "operator-valued integrand (value dimension must be p·d)",
            expected: d * (c.value_dim() / d + 1),
            found: c.value_dim(),
        });
    }
    Ok(c.value_dim() / d)
}

/// `Ξ_{u,v} = Y_u X_{u,v} + Y′_u : 𝕏_{u,v}` accumulated into `acc`.
fn add_germ(c: &ControlledPath, r: &RoughPath, u: usize, v: usize, l2: &Mat, acc: &mut [f64]) {
    let d = r.dim();
    let dx = r.path().increment_unchecked(u, v);
    let y = c.value(u);
    let yp = c.derivative(u);
    for (i, out) in acc.iter_mut().enumerate() {
        let mut s = 0.0;
        for a in 0..d {
            s += y[i * d + a] * dx[a];
            for b in 0..d {
                s += yp[(i * d + a, b)] * l2[(b, a)];
            }
        }
        *out += s;
    }
}

fn germ(c: &ControlledPath, r: &RoughPath, u: usize, v: usize) -> Vec<f64> {
    let p = c.value_dim() / r.dim();
    let mut acc = vec![0.0; p];
    add_germ(c, r, u, v, &r.second_level_unchecked(u, v), &mut acc);
    acc
}

/// `Σ_{[u,v] ∈ part} Ξ_{u,v}`.
pub fn compensated_sum(c: &ControlledPath, r: &RoughPath, part: &Partition) -> Result<Vec<f64>> {
    let p = output_dim(c, r)?;
    r.grid().check_index(part.end())?;
    let mut acc = vec![0.0; p];
    for w in part.nodes.windows(2) {
        add_germ(c, r, w[0], w[1], &r.second_level_unchecked(w[0], w[1]), &mut acc);
    }
    Ok(acc)
}

/// The finest-grid compensated sum over `[t_i, t_j]` with its local
/// expansion defect `|∫ − Ξ_{i,j}|`.
#[derive(Debug, Clone, PartialEq)]
pub struct RoughIntegral {
    pub value: Vec<f64>,
    pub defect: f64,
}

pub fn rough_integral(c: &ControlledPath, r: &RoughPath, i: usize, j: usize) -> Result<RoughIntegral> {
    let p = output_dim(c, r)?;
    r.grid().check_index(j)?;
    if i > j {
        return Err(Error::IndexOrder(format!("integral bounds {i} > {j}")));
    }
    if i == j {
        return Ok(RoughIntegral {
            value: vec![0.0; p],
            defect: 0.0,
        });
    }
    let value = finest_sum(c, r, i, j);
    let defect = distance(&value, &germ(c, r, i, j));
    Ok(RoughIntegral { value, defect })
}

fn finest_sum(c: &ControlledPath, r: &RoughPath, i: usize, j: usize) -> Vec<f64> {
    let mut acc = vec![0.0; c.value_dim() / r.dim()];
    for k in i..j {
        add_germ(c, r, k, k + 1, r.block(k), &mut acc);
    }
    acc
}

/// `(∫_0^· Y d𝐗, Y)` with `Z′_k = Y_k` reshaped to `p × d`.
pub fn integral_as_controlled(c: &ControlledPath, r: &RoughPath) -> Result<ControlledPath> {
    let p = output_dim(c, r)?;
    let d = r.dim();
    let n = r.grid().len();
    let mut values = Vec::with_capacity(n * p);
    let mut acc = vec![0.0; p];
    values.extend_from_slice(&acc);
    for k in 0..n - 1 {
        add_germ(c, r, k, k + 1, r.block(k), &mut acc);
        values.extend_from_slice(&acc);
    }
    let derivs = (0..n)
        .map(|k| Mat::from_vec(p, d, c.value(k).to_vec()).expect("finite"))
        .collect();
    ControlledPath::new(r.grid().clone(), p, d, values, derivs)
}

/// Lifts `(Y, Y′)` with `Y_k ∈ ℝ^m` to the integrand `v ↦ Y ⊗ v`, so that
/// its rough integral is the matrix `∫ Y ⊗ dX ∈ ℝ^{m×d}` (row-major).
pub fn outer_integrand(c: &ControlledPath) -> Result<ControlledPath> {
    let (m, d) = (c.value_dim(), c.driver_dim());
    let dim = m * d * d;
    let n = c.grid().len();
    let mut values = vec![0.0; n * dim];
    let mut derivs = Vec::with_capacity(n);
    for k in 0..n {
        let y = c.value(k);
        let yp = c.derivative(k);
        let mut dm = Mat::zeros(dim, d);
        for i in 0..m {
            for col in 0..d {
                let idx = (i * d + col) * d + col;
                values[k * dim + idx] = y[i];
                for dir in 0..d {
                    dm[(idx, dir)] = yp[(i, dir)];
                }
            }
        }
        derivs.push(dm);
    }
    ControlledPath::new(c.grid().clone(), dim, d, values, derivs)
}

/// Trapezoidal `∫_{t_i}^{t_j} P_s ds`.
pub fn drift_integral(p: &SampledPath, i: usize, j: usize) -> Result<Vec<f64>> {
    p.grid().check_index(i)?;
    p.grid().check_index(j)?;
    if i > j {
        return Err(Error::IndexOrder(format!("integral bounds {i} > {j}")));
    }
    let mut acc = vec![0.0; p.dim()];
    for k in i..j {
        let h = 0.5 * p.grid().dt(k);
        for ((a, x), y) in acc.iter_mut().zip(p.value(k)).zip(p.value(k + 1)) {
            *a += h * (x + y);
        }
    }
    Ok(acc)
}

/// `t ↦ ∫_0^t P_s ds` at every node.
pub fn drift_integral_path(p: &SampledPath) -> SampledPath {
    let dim = p.dim();
    let n = p.grid().len();
    let mut values = vec![0.0; n * dim];
    for k in 0..n - 1 {
        let h = 0.5 * p.grid().dt(k);
        for c in 0..dim {
            values[(k + 1) * dim + c] =
                values[k * dim + c] + h * (p.value(k)[c] + p.value(k + 1)[c]);
        }
    }
    SampledPath::new(p.grid().clone(), dim, values).expect("finite")
}

/// Defect below which the sewing diagnostic reports an exact germ.
pub const EXACT_DEFECT: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SewingRate {
    /// The germ is additive up to rounding on every window.
    Exact,
    /// Least-squares slope of log mean defect against log window length.
    Slope(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SewingRow {
    pub h: f64,
    pub defect: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SewingReport {
    pub rate: SewingRate,
    pub rows: Vec<SewingRow>,
}

impl SewingReport {
    /// Columns `h, defect, bound`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "h,defect,bound")?;
        for r in &self.rows {
            writeln!(out, "{},{},{}", fmt_f64(r.h), fmt_f64(r.defect), fmt_f64(r.bound))?;
        }
        Ok(())
    }
}

/// Mean of `|∫_s^t Y d𝐗 − Ξ_{s,t}|` over the disjoint windows of `2^ℓ` steps,
/// for every level with at least four windows. The bound column is
/// `(‖X‖_α ‖R^Y‖_{2α} + ‖𝕏‖_{2α} ‖Y′‖_α)·h^{3α}` without the unknown constant.
pub fn sewing_rate_diagnostic(c: &ControlledPath, r: &RoughPath, alpha: f64) -> Result<SewingReport> {
    output_dim(c, r)?;
    let grid = r.grid();
    let n = grid.steps();
    let h0 = grid
        .uniform_step()
        .ok_or_else(|| Error::InvalidGrid("sewing diagnostic needs a uniform grid".into()))?;
    let mut levels = Vec::new();
    let mut w = 2;
    while w * 4 <= n {
        levels.push(w);
        w *= 2;
    }
    if levels.len() < 4 {
        return Err(Error::InsufficientScales {
            needed: 4,
            available: levels.len(),
        });
    }
    let scale = r.path().holder_seminorm(alpha)? * c.remainder_seminorm(r.path(), alpha)?
        + r.level2_seminorm(alpha)? * c.derivative_path().holder_seminorm(alpha)?;
    let rows: Vec<SewingRow> = levels
        .iter()
        .map(|&w| {
            let count = n / w;
            let defect = (0..count)
                .map(|k| {
                    let (s, t) = (k * w, (k + 1) * w);
                    distance(&finest_sum(c, r, s, t), &germ(c, r, s, t))
                })
                .sum::<f64>()
                / count as f64;
            let h = w as f64 * h0;
            SewingRow {
                h,
                defect,
                bound: scale * h.powf(3.0 * alpha),
            }
        })
        .collect();
    if rows.iter().all(|row| row.defect <= EXACT_DEFECT) {
        return Ok(SewingReport {
            rate: SewingRate::Exact,
            rows,
        });
    }
    let xs: Vec<f64> = rows.iter().map(|row| row.h.ln()).collect();
    let ys: Vec<f64> = rows
        .iter()
        .map(|row| row.defect.max(f64::MIN_POSITIVE).ln())
        .collect();
    Ok(SewingReport {
        rate: SewingRate::Slope(ls_slope(&xs, &ys)),
        rows,
    })
}

/// Norm of the compensated sum over each dyadic coarsening minus the finest
/// sum, from the coarsest level (one cell) down to the finest.
pub fn refinement_gaps(c: &ControlledPath, r: &RoughPath) -> Result<Vec<f64>> {
    let n = r.grid().steps();
    let finest = compensated_sum(c, r, &Partition::finest(0, n)?)?;
    let mut gaps = Vec::new();
    let mut stride = n;
    while stride >= 1 {
        let s = compensated_sum(c, r, &Partition::strided(0, n, stride)?)?;
        gaps.push(distance(&s, &finest));
        if stride == 1 {
            break;
        }
        stride /= 2;
    }
    Ok(gaps)
}
