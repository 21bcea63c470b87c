//! Time grids, sampled paths and discrete Hölder seminorms.
//!
//! All seminorms here are suprema over pairs of grid nodes, so they are lower
//! bounds for the continuum seminorm of any path interpolating the samples.

use std::io::{Read, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::euclidean_norm;
use crate::fmt_f64;

/// Pairwise scans above this many nodes switch to a strided subsample.
pub const DEFAULT_MAX_EXHAUSTIVE_NODES: usize = 4097;

#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    /// Strictly increasing times starting at 0 with positive horizon.
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least two nodes, got {}",
                times.len()
            )));
        }
        if times[0] != 0.0 {
            return Err(Error::InvalidGrid(format!("first node must be 0, got {}", times[0])));
        }
        for (k, w) in times.windows(2).enumerate() {
            if !w[1].is_finite() || w[1] <= w[0] {
                return Err(Error::InvalidGrid(format!(
                    "times not strictly increasing at node {}",
                    k + 1
                )));
            }
        }
        Ok(TimeGrid { times })
    }

    /// `n` equal steps on `[0, horizon]`.
    pub fn uniform(n: usize, horizon: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGrid("need at least one step".into()));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidGrid(format!("horizon must be positive, got {horizon}")));
        }
        let h = horizon / n as f64;
        let mut times: Vec<f64> = (0..=n).map(|k| k as f64 * h).collect();
        times[n] = horizon;
        TimeGrid::new(times)
    }

    /// Number of steps.
    #[inline]
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    /// Number of nodes (`steps() + 1`).
    #[inline]
    pub fn len(&self) -> usize {
        self.times.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    #[inline]
    pub fn t(&self, k: usize) -> f64 {
        self.times[k]
    }

    #[inline]
    pub fn dt(&self, k: usize) -> f64 {
        self.times[k + 1] - self.times[k]
    }

    #[inline]
    pub fn horizon(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    pub fn min_spacing(&self) -> f64 {
        self.times
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }

    /// Step size if all steps agree to a relative tolerance of 1e-9.
    pub fn uniform_step(&self) -> Option<f64> {
        let h = self.horizon() / self.steps() as f64;
        self.times
            .windows(2)
            .all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h)
            .then_some(h)
    }

    pub fn check_index(&self, k: usize) -> Result<()> {
        if k < self.len() {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                index: k,
                max: self.steps(),
            })
        }
    }

    /// Every `stride`-th node. `stride` must divide the number of steps.
    pub fn coarsen(&self, stride: usize) -> Result<TimeGrid> {
        if stride == 0 || self.steps() % stride != 0 {
            return Err(Error::InvalidGrid(format!(
                "stride {stride} does not divide {} steps",
                self.steps()
            )));
        }
        TimeGrid::new(self.times.iter().step_by(stride).copied().collect())
    }

    /// Positions of the nodes of `coarse` inside `self`, if every coarse node
    /// is also a node of this grid (to a relative tolerance of 1e-12).
    pub fn embed(&self, coarse: &TimeGrid) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(coarse.len());
        let mut k = 0;
        let scale = self.horizon().max(1.0);
        for &t in coarse.times() {
            while k < self.len() && self.times[k] < t - 1e-12 * scale {
                k += 1;
            }
            if k == self.len() || (self.times[k] - t).abs() > 1e-12 * scale {
                return Err(Error::GridMismatch(format!(
                    "coarse node t={t} is not a node of the fine grid"
                )));
            }
            out.push(k);
        }
        Ok(out)
    }

    /// Node positions used for pairwise scans: all nodes up to `cap`, else a
    /// strided subsample that always keeps the endpoints.
    pub fn scan_nodes(&self, cap: usize) -> Vec<usize> {
        let n = self.len();
        if n <= cap.max(2) {
            return (0..n).collect();
        }
        let stride = n.div_ceil(cap.max(2) - 1);
        let mut nodes: Vec<usize> = (0..n).step_by(stride).collect();
        if *nodes.last().unwrap() != n - 1 {
            nodes.push(n - 1);
        }
        nodes
    }
}

/// Maximum of `row(p)[q] / (t_{nodes[p+1+q]} − t_{nodes[p]})^exponent` over all
/// node pairs, where `row(p)` yields the norms for the nodes after `nodes[p]`.
pub(crate) fn scan_pairs_max<R>(grid: &TimeGrid, nodes: &[usize], exponent: f64, row: R) -> f64
where
    R: Fn(usize) -> Vec<f64> + Sync,
{
    let times = grid.times();
    (0..nodes.len().saturating_sub(1))
        .into_par_iter()
        .map(|p| {
            let ti = times[nodes[p]];
            row(p)
                .into_iter()
                .zip(&nodes[p + 1..])
                .map(|(v, &j)| v / (times[j] - ti).powf(exponent))
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max)
}

fn check_exponent(alpha: f64, max: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= max {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "Hölder exponent must lie in (0, {max}], got {alpha}"
        )))
    }
}

/// Discrete seminorm `sup |F_{s,t}| / |t−s|^alpha` of a two-parameter field
/// given by its norms `field(i, j)`. Both orientations of every node pair are
/// scanned.
pub fn two_param_holder_seminorm<F>(grid: &TimeGrid, alpha: f64, field: F) -> Result<f64>
where
    F: Fn(usize, usize) -> f64 + Sync,
{
    check_exponent(alpha, 3.0)?;
    let nodes = grid.scan_nodes(DEFAULT_MAX_EXHAUSTIVE_NODES);
    Ok(scan_pairs_max(grid, &nodes, alpha, |p| {
        let i = nodes[p];
        nodes[p + 1..]
            .iter()
            .map(|&j| field(i, j).max(field(j, i)))
            .collect()
    }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledPath {
    grid: TimeGrid,
    dim: usize,
    values: Vec<f64>,
}

impl SampledPath {
    /// `values` is row-major, one row of length `dim` per grid node.
    pub fn new(grid: TimeGrid, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("path dimension must be positive".into()));
        }
        if values.len() != grid.len() * dim {
            return Err(Error::DimensionMismatch {
                context: "SampledPath::new",
                expected: grid.len() * dim,
                found: values.len(),
            });
        }
        if let Some(pos) = values.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite sample at node {}",
                pos / dim
            )));
        }
        Ok(SampledPath { grid, dim, values })
    }

    pub fn from_fn<F>(grid: TimeGrid, dim: usize, f: F) -> Result<Self>
    where
        F: Fn(f64) -> Vec<f64>,
    {
        let mut values = Vec::with_capacity(grid.len() * dim);
        for &t in grid.times() {
            let v = f(t);
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    context: "SampledPath::from_fn",
                    expected: dim,
                    found: v.len(),
                });
            }
            values.extend(v);
        }
        SampledPath::new(grid, dim, values)
    }

    pub fn constant(grid: TimeGrid, value: &[f64]) -> Result<Self> {
        let values = value.repeat(grid.len());
        SampledPath::new(grid, value.len(), values)
    }

    #[inline]
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn value(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    /// `X_{t_i, t_j} = X_{t_j} − X_{t_i}`.
    pub fn increment(&self, i: usize, j: usize) -> Result<Vec<f64>> {
        self.grid.check_index(i)?;
        self.grid.check_index(j)?;
        Ok(self.increment_unchecked(i, j))
    }

    #[inline]
    pub(crate) fn increment_unchecked(&self, i: usize, j: usize) -> Vec<f64> {
        self.value(j)
            .iter()
            .zip(self.value(i))
            .map(|(b, a)| b - a)
            .collect()
    }

    /// `max_{i<j} |X_{t_i,t_j}| / (t_j − t_i)^alpha` over grid nodes.
    pub fn holder_seminorm(&self, alpha: f64) -> Result<f64> {
        check_exponent(alpha, 1.0)?;
        let nodes = self.grid.scan_nodes(DEFAULT_MAX_EXHAUSTIVE_NODES);
        Ok(scan_pairs_max(&self.grid, &nodes, alpha, |p| {
            let a = self.value(nodes[p]);
            nodes[p + 1..]
                .iter()
                .map(|&j| {
                    self.value(j)
                        .iter()
                        .zip(a)
                        .map(|(x, y)| (x - y) * (x - y))
                        .sum::<f64>()
                        .sqrt()
                })
                .collect()
        }))
    }

    /// Hölder seminorm restricted to node pairs at most `window` apart.
    pub fn localized_seminorm(&self, alpha: f64, window: f64) -> Result<f64> {
        check_exponent(alpha, 1.0)?;
        if !(window > 0.0) || window < self.grid.min_spacing() * (1.0 - 1e-12) {
            return Err(Error::InvalidArgument(format!(
                "window {window} is smaller than the grid spacing"
            )));
        }
        let times = self.grid.times();
        let limit = window * (1.0 + 1e-12);
        let best = (0..self.grid.len())
            .into_par_iter()
            .map(|i| {
                let mut m = 0.0f64;
                for j in i + 1..self.grid.len() {
                    let h = times[j] - times[i];
                    if h > limit {
                        break;
                    }
                    let v = euclidean_norm(&self.increment_unchecked(i, j));
                    m = m.max(v / h.powf(alpha));
                }
                m
            })
            .reduce(|| 0.0, f64::max);
        Ok(best)
    }

    pub fn sup_norm(&self) -> f64 {
        (0..self.grid.len())
            .map(|k| euclidean_norm(self.value(k)))
            .fold(0.0, f64::max)
    }

    /// Keeps the nodes at the given (increasing) positions.
    pub fn restrict(&self, nodes: &[usize]) -> Result<SampledPath> {
        let times = nodes
            .iter()
            .map(|&k| self.grid.check_index(k).map(|_| self.grid.t(k)))
            .collect::<Result<Vec<_>>>()?;
        let grid = TimeGrid::new(times)?;
        let values = nodes.iter().flat_map(|&k| self.value(k).to_vec()).collect();
        SampledPath::new(grid, self.dim, values)
    }

    /// Reads `t,x1,...,xm` CSV with a header row.
    pub fn read_csv<R: Read>(reader: R) -> Result<SampledPath> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = rdr
            .headers()
            .map_err(|e| Error::Parse {
                line: 1,
                msg: e.to_string(),
            })?
            .clone();
        if header.len() < 2 || &header[0] != "t" {
            return Err(Error::Parse {
                line: 1,
                msg: "header must be `t,x1,...,xm`".into(),
            });
        }
        let dim = header.len() - 1;
        let mut times = Vec::new();
        let mut values = Vec::new();
        for record in rdr.records() {
            let record = record.map_err(|e| Error::Parse {
                line: e.position().map_or(0, |p| p.line()),
                msg: e.to_string(),
            })?;
            let line = record.position().map_or(0, |p| p.line());
            if record.len() != dim + 1 {
                return Err(Error::Parse {
                    line,
                    msg: format!("expected {} fields, found {}", dim + 1, record.len()),
                });
            }
            for (col, field) in record.iter().enumerate() {
                let x: f64 = field.parse().map_err(|_| Error::Parse {
                    line,
                    msg: format!("column {} is not a number: {field:?}", col + 1),
                })?;
                if !x.is_finite() {
                    return Err(Error::Parse {
                        line,
                        msg: format!("column {} is not finite", col + 1),
                    });
                }
                if col == 0 {
                    if let Some(&prev) = times.last() {
                        if x <= prev {
                            return Err(Error::Parse {
                                line,
                                msg: format!("time {x} is not greater than {prev}"),
                            });
                        }
                    }
                    times.push(x);
                } else {
                    values.push(x);
                }
            }
        }
        let grid = TimeGrid::new(times).map_err(|e| Error::Parse {
            line: 0,
            msg: e.to_string(),
        })?;
        SampledPath::new(grid, dim, values)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let header: Vec<String> = std::iter::once("t".to_string())
            .chain((1..=self.dim).map(|i| format!("x{i}")))
            .collect();
        writeln!(out, "{}", header.join(","))?;
        for k in 0..self.grid.len() {
            let row: Vec<String> = std::iter::once(self.grid.t(k))
                .chain(self.value(k).iter().copied())
                .map(fmt_f64)
                .collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}
