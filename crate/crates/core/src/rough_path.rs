//! Level-2 rough paths on a time grid.
//!
//! A [`RoughPath`] stores the first level `X` at every node and only the
//! second-level increments `𝕏_{t_k,t_{k+1}}` over consecutive nodes. Values
//! between arbitrary nodes are rebuilt from
//!
//! ```text
//! 𝕏_{t_i,t_j} = Σ_{k=i}^{j-1} ( 𝕏_{t_k,t_{k+1}} + X_{t_i,t_k} ⊗ X_{t_k,t_{k+1}} ),   i ≤ j
//! 𝕏_{t_i,t_j} = X_{t_i,t_j} ⊗ X_{t_i,t_j} − 𝕏_{t_j,t_i},                            i > j
//! ```
//!
//! so Chen's relation `𝕏_{s,t} − 𝕏_{s,u} − 𝕏_{u,t} = X_{s,u} ⊗ X_{u,t}` holds
//! by construction rather than up to a numerical tolerance.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{scan_pairs_max, SampledPath, TimeGrid, DEFAULT_MAX_EXHAUSTIVE_NODES};
use crate::tensor::{add_outer, euclidean_norm, frobenius_norm, outer_unchecked, sym, Mat};
use crate::fmt_f64;

/// Grids with at most this many nodes get an exhaustive Chen scan.
pub const CHEN_EXHAUSTIVE_NODES: usize = 257;
/// Number of random triples checked on larger grids.
pub const CHEN_SAMPLED_TRIPLES: usize = 20_000;

#[derive(Debug, Clone, PartialEq)]
pub struct RoughPath {
    path: SampledPath,
    blocks: Vec<Mat>,
}

/// Iterates `𝕏_{t_i,t_j}` for `j = i, i+1, ...`.
pub struct Level2Row<'a> {
    rough: &'a RoughPath,
    start: usize,
    next: usize,
    acc: Mat,
}

impl Iterator for Level2Row<'_> {
    type Item = (usize, Mat);

    fn next(&mut self) -> Option<(usize, Mat)> {
        let n = self.rough.grid().len();
        if self.next >= n {
            return None;
        }
        let j = self.next;
        if j > self.start {
            let k = j - 1;
            let x = &self.rough.path;
            self.acc += &self.rough.blocks[k];
            let from_start = x.increment_unchecked(self.start, k);
            let step = x.increment_unchecked(k, j);
            add_outer(&mut self.acc, 1.0, &from_start, &step);
        }
        self.next += 1;
        Some((j, self.acc.clone()))
    }
}

impl RoughPath {
    pub fn new(path: SampledPath, blocks: Vec<Mat>) -> Result<Self> {
        let d = path.dim();
        if blocks.len() != path.grid().steps() {
            return Err(Error::DimensionMismatch {
                context: "RoughPath::new (blocks)",
                expected: path.grid().steps(),
                found: blocks.len(),
            });
        }
        for b in &blocks {
            if b.rows() != d || b.cols() != d {
                return Err(Error::DimensionMismatch {
                    context: "RoughPath::new (block shape)",
                    expected: d,
                    found: if b.rows() != d { b.rows() } else { b.cols() },
                });
            }
            if b.data().iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidArgument("non-finite level-2 block".into()));
            }
        }
        Ok(RoughPath { path, blocks })
    }

    /// Rebuilds a rough path from `X` and the values `𝕏_{0,t_k}` at every node.
    pub fn from_level2_at_origin(path: SampledPath, from_origin: &[Mat]) -> Result<Self> {
        let n = path.grid().len();
        if from_origin.len() != n {
            return Err(Error::DimensionMismatch {
                context: "RoughPath::from_level2_at_origin",
                expected: n,
                found: from_origin.len(),
            });
        }
        let blocks = (0..n - 1)
            .map(|k| {
                let mut b = &from_origin[k + 1] - &from_origin[k];
                let a = path.increment_unchecked(0, k);
                let s = path.increment_unchecked(k, k + 1);
                add_outer(&mut b, -1.0, &a, &s);
                b
            })
            .collect();
        RoughPath::new(path, blocks)
    }

    /// Promotes an externally supplied two-parameter field to a rough path if
    /// its Chen defect over all node triples is at most `tol`.
    pub fn from_raw(path: SampledPath, raw: &RawLevel2, tol: f64) -> Result<Self> {
        let max = max_chen_defect(&path, raw)?;
        if max > tol {
            return Err(Error::ChenDefect { max, tol });
        }
        let blocks = (0..path.grid().steps())
            .map(|k| raw.get(k, k + 1).clone())
            .collect();
        RoughPath::new(path, blocks)
    }

    #[inline]
    pub fn path(&self) -> &SampledPath {
        &self.path
    }

    #[inline]
    pub fn grid(&self) -> &TimeGrid {
        self.path.grid()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.path.dim()
    }

    #[inline]
    pub fn blocks(&self) -> &[Mat] {
        &self.blocks
    }

    #[inline]
    pub fn block(&self, k: usize) -> &Mat {
        &self.blocks[k]
    }

    pub fn level2_row(&self, i: usize) -> Level2Row<'_> {
        let d = self.dim();
        Level2Row {
            rough: self,
            start: i,
            next: i,
            acc: Mat::zeros(d, d),
        }
    }

    /// `𝕏_{t_i,t_j}` for any pair of nodes.
    pub fn second_level(&self, i: usize, j: usize) -> Result<Mat> {
        self.grid().check_index(i)?;
        self.grid().check_index(j)?;
        Ok(self.second_level_unchecked(i, j))
    }

    pub(crate) fn second_level_unchecked(&self, i: usize, j: usize) -> Mat {
        if i <= j {
            let d = self.dim();
            let mut acc = Mat::zeros(d, d);
            for k in i..j {
                acc += &self.blocks[k];
                let a = self.path.increment_unchecked(i, k);
                let s = self.path.increment_unchecked(k, k + 1);
                add_outer(&mut acc, 1.0, &a, &s);
            }
            acc
        } else {
            let inc = self.path.increment_unchecked(i, j);
            let mut m = outer_unchecked(&inc, &inc);
            m -= &self.second_level_unchecked(j, i);
            m
        }
    }

    /// The rough path on nodes `a..=b`, with time measured from `t_a`.
    pub fn window(&self, a: usize, b: usize) -> Result<RoughPath> {
        self.grid().check_index(b)?;
        if a >= b {
            return Err(Error::IndexOrder(format!("window [{a}, {b}] is empty")));
        }
        let t0 = self.grid().t(a);
        let grid = TimeGrid::new(self.grid().times()[a..=b].iter().map(|t| t - t0).collect())?;
        let d = self.dim();
        let path = SampledPath::new(grid, d, self.path.values()[a * d..(b + 1) * d].to_vec())?;
        RoughPath::new(path, self.blocks[a..b].to_vec())
    }

    /// Adds the increments `F_{t_{k+1}} − F_{t_k}` of a one-parameter field to
    /// every block. Chen's relation is preserved.
    pub fn shifted_by(&self, shift: &[Mat]) -> Result<RoughPath> {
        if shift.len() != self.grid().len() {
            return Err(Error::DimensionMismatch {
                context: "RoughPath::shifted_by",
                expected: self.grid().len(),
                found: shift.len(),
            });
        }
        let blocks = self
            .blocks
            .iter()
            .enumerate()
            .map(|(k, b)| {
                let mut out = b.clone();
                out += &shift[k + 1];
                out -= &shift[k];
                out
            })
            .collect();
        RoughPath::new(self.path.clone(), blocks)
    }

    /// Largest Chen defect (Frobenius norm) over node triples `i ≤ u ≤ j`:
    /// all triples on grids with at most [`CHEN_EXHAUSTIVE_NODES`] nodes,
    /// otherwise [`CHEN_SAMPLED_TRIPLES`] triples drawn with a fixed seed.
    pub fn max_chen_defect(&self) -> f64 {
        let n = self.grid().len();
        if n <= CHEN_EXHAUSTIVE_NODES {
            let raw = RawLevel2::from_rough_path(self);
            return max_chen_defect(&self.path, &raw).expect("shapes agree by construction");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_c4e4);
        let triples: Vec<[usize; 3]> = (0..CHEN_SAMPLED_TRIPLES)
            .map(|_| {
                let mut t = [rng.gen_range(0..n), rng.gen_range(0..n), rng.gen_range(0..n)];
                t.sort_unstable();
                t
            })
            .collect();
        triples
            .par_iter()
            .map(|&[i, u, j]| {
                let mut m = self.second_level_unchecked(i, j);
                m -= &self.second_level_unchecked(i, u);
                m -= &self.second_level_unchecked(u, j);
                let a = self.path.increment_unchecked(i, u);
                let b = self.path.increment_unchecked(u, j);
                add_outer(&mut m, -1.0, &a, &b);
                frobenius_norm(&m)
            })
            .reduce(|| 0.0, f64::max)
    }

    /// One-parameter bracket `[𝐗]_t = X_{0,t} ⊗ X_{0,t} − 2 Sym(𝕏_{0,t})`.
    pub fn bracket_one_param(&self, j: usize) -> Result<Mat> {
        self.bracket_two_param(0, j)
    }

    /// Two-parameter bracket `[𝐗]_{s,t} = X_{s,t} ⊗ X_{s,t} − 2 Sym(𝕏_{s,t})`.
    pub fn bracket_two_param(&self, i: usize, j: usize) -> Result<Mat> {
        let l2 = self.second_level(i, j)?;
        let inc = self.path.increment_unchecked(i, j);
        Ok(bracket_from(&inc, &l2))
    }

    /// Brackets `[𝐗]_{t_k}` at every node, computed in one pass.
    pub fn brackets(&self) -> Vec<Mat> {
        self.level2_row(0)
            .map(|(j, l2)| bracket_from(&self.path.increment_unchecked(0, j), &l2))
            .collect()
    }

    /// `max |Sym(𝕏_{s,t}) − ½ X_{s,t} ⊗ X_{s,t}|` over node pairs.
    pub fn geometric_defect(&self) -> f64 {
        let nodes = self.grid().scan_nodes(DEFAULT_MAX_EXHAUSTIVE_NODES);
        // exponent 0 turns the Hölder scan into a plain maximum
        scan_pairs_max(self.grid(), &nodes, 0.0, |p| {
            let i = nodes[p];
            let mut out = Vec::with_capacity(nodes.len() - p - 1);
            let mut q = p + 1;
            for (j, l2) in self.level2_row(i) {
                if q == nodes.len() {
                    break;
                }
                if j == nodes[q] {
                    let inc = self.path.increment_unchecked(i, j);
                    let b = bracket_from(&inc, &l2);
                    out.push(0.5 * frobenius_norm(&b));
                    q += 1;
                }
            }
            out
        })
    }

    pub fn is_weakly_geometric(&self, tol: f64) -> Result<bool> {
        if !(tol >= 0.0) {
            return Err(Error::InvalidArgument(format!("tolerance must be ≥ 0, got {tol}")));
        }
        Ok(self.geometric_defect() <= tol)
    }

    /// `‖𝕏‖_{2α}` over grid node pairs.
    pub fn level2_seminorm(&self, alpha: f64) -> Result<f64> {
        check_rough_alpha(alpha)?;
        Ok(self.level2_scan(2.0 * alpha, None))
    }

    /// `⫴𝐗⫴_α = ‖X‖_α + ‖𝕏‖_{2α}`.
    pub fn rough_seminorm(&self, alpha: f64) -> Result<f64> {
        check_rough_alpha(alpha)?;
        Ok(self.path.holder_seminorm(alpha)? + self.level2_scan(2.0 * alpha, None))
    }

    /// `|𝐗|_α = |X_0| + ⫴𝐗⫴_α`.
    pub fn rough_norm(&self, alpha: f64) -> Result<f64> {
        Ok(euclidean_norm(self.path.value(0)) + self.rough_seminorm(alpha)?)
    }

    /// `max |𝕏_{s,t}|` over node pairs (both orientations).
    pub fn level2_sup(&self) -> f64 {
        self.level2_scan(0.0, None)
    }

    /// Max over node pairs, both orientations, of
    /// `|𝕏_{s,t} − 𝕐_{s,t}| / |t − s|^exponent` with `𝕐 ≡ 0` when `other` is
    /// `None`. Reversed pairs come from `𝕏_{t,s} = X_{s,t} ⊗ X_{s,t} − 𝕏_{s,t}`.
    fn level2_scan(&self, exponent: f64, other: Option<&RoughPath>) -> f64 {
        let nodes = self.grid().scan_nodes(DEFAULT_MAX_EXHAUSTIVE_NODES);
        scan_pairs_max(self.grid(), &nodes, exponent, |p| {
            let i = nodes[p];
            let mut out = Vec::with_capacity(nodes.len() - p - 1);
            let mut q = p + 1;
            let mut other_row = other.map(|o| o.level2_row(i));
            for (j, l2) in self.level2_row(i) {
                let o = other_row.as_mut().map(|r| r.next().unwrap().1);
                if q == nodes.len() {
                    break;
                }
                if j == nodes[q] {
                    let inc = self.path.increment_unchecked(i, j);
                    let mut forward = l2;
                    let mut sq = outer_unchecked(&inc, &inc);
                    if let (Some(m), Some(o)) = (&o, other) {
                        forward -= m;
                        let oinc = o.path.increment_unchecked(i, j);
                        add_outer(&mut sq, -1.0, &oinc, &oinc);
                    }
                    let backward = &sq - &forward;
                    out.push(frobenius_norm(&forward).max(frobenius_norm(&backward)));
                    q += 1;
                }
            }
            out
        })
    }

    pub fn to_json(&self) -> RoughPathJson {
        let g = self.grid();
        RoughPathJson {
            d: self.dim(),
            times: g.times().to_vec(),
            x: (0..g.len()).map(|k| self.path.value(k).to_vec()).collect(),
            blocks: self.blocks.iter().map(Mat::to_rows).collect(),
        }
    }

    pub fn from_json(json: &RoughPathJson) -> Result<Self> {
        let grid = TimeGrid::new(json.times.clone())?;
        if json.x.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                context: "RoughPath JSON (X rows)",
                expected: grid.len(),
                found: json.x.len(),
            });
        }
        let mut values = Vec::with_capacity(grid.len() * json.d);
        for row in &json.x {
            if row.len() != json.d {
                return Err(Error::DimensionMismatch {
                    context: "RoughPath JSON (X columns)",
                    expected: json.d,
                    found: row.len(),
                });
            }
            values.extend_from_slice(row);
        }
        let path = SampledPath::new(grid, json.d, values)?;
        let blocks = json
            .blocks
            .iter()
            .map(|b| Mat::from_rows(b))
            .collect::<Result<Vec<_>>>()?;
        RoughPath::new(path, blocks)
    }

    /// CSV table `t, b_11, b_12, ..., b_dd` of the one-parameter bracket.
    pub fn write_bracket_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let d = self.dim();
        let mut header = vec!["t".to_string()];
        for a in 1..=d {
            for b in 1..=d {
                header.push(format!("b{a}{b}"));
            }
        }
        writeln!(out, "{}", header.join(","))?;
        for (k, b) in self.brackets().iter().enumerate() {
            let row: Vec<String> = std::iter::once(self.grid().t(k))
                .chain(b.data().iter().copied())
                .map(fmt_f64)
                .collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

fn bracket_from(inc: &[f64], level2: &Mat) -> Mat {
    let mut b = outer_unchecked(inc, inc);
    b.axpy(-2.0, &sym(level2).expect("level-2 blocks are square"));
    b
}

fn check_rough_alpha(alpha: f64) -> Result<()> {
    if alpha > 1.0 / 3.0 && alpha <= 0.5 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "rough-path exponent must lie in (1/3, 1/2], got {alpha}"
        )))
    }
}

/// `d_α(𝐗, 𝐘) = |X_0 − Y_0| + ‖X − Y‖_α + ‖𝕏 − 𝕐‖_{2α}` over grid nodes.
pub fn rough_metric(a: &RoughPath, b: &RoughPath, alpha: f64) -> Result<f64> {
    check_rough_alpha(alpha)?;
    if a.grid() != b.grid() {
        return Err(Error::GridMismatch("rough paths live on different grids".into()));
    }
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            context: "rough_metric",
            expected: a.dim(),
            found: b.dim(),
        });
    }
    let diff: Vec<f64> = a
        .path
        .values()
        .iter()
        .zip(b.path.values())
        .map(|(x, y)| x - y)
        .collect();
    let diff = SampledPath::new(a.grid().clone(), a.dim(), diff)?;
    Ok(euclidean_norm(diff.value(0))
        + diff.holder_seminorm(alpha)?
        + a.level2_scan(2.0 * alpha, Some(b)))
}

/// Piecewise-linear lift: each block is the exact iterated integral
/// `½ ΔX_k ⊗ ΔX_k` of the linear interpolant on that segment.
pub fn lift_piecewise_linear(path: &SampledPath) -> RoughPath {
    let blocks = (0..path.grid().steps())
        .map(|k| {
            let inc = path.increment_unchecked(k, k + 1);
            outer_unchecked(&inc, &inc).scaled(0.5)
        })
        .collect();
    RoughPath::new(path.clone(), blocks).expect("PL lift is consistent")
}

/// An unconstrained second-level candidate on all node pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct RawLevel2 {
    nodes: usize,
    dim: usize,
    values: Vec<Mat>,
}

impl RawLevel2 {
    /// Zero diagonal is enforced: `field(i, i)` is never called.
    pub fn from_fn<F>(nodes: usize, dim: usize, field: F) -> Result<Self>
    where
        F: Fn(usize, usize) -> Mat,
    {
        let mut values = Vec::with_capacity(nodes * nodes);
        for i in 0..nodes {
            for j in 0..nodes {
                let m = if i == j { Mat::zeros(dim, dim) } else { field(i, j) };
                if m.rows() != dim || m.cols() != dim {
                    return Err(Error::DimensionMismatch {
                        context: "RawLevel2::from_fn",
                        expected: dim,
                        found: m.rows(),
                    });
                }
                values.push(m);
            }
        }
        Ok(RawLevel2 { nodes, dim, values })
    }

    pub fn from_rough_path(r: &RoughPath) -> Self {
        let n = r.grid().len();
        let d = r.dim();
        let mut values = vec![Mat::zeros(d, d); n * n];
        for i in 0..n {
            for (j, m) in r.level2_row(i) {
                values[i * n + j] = m;
            }
        }
        for i in 0..n {
            for j in 0..i {
                let inc = r.path.increment_unchecked(i, j);
                let mut m = outer_unchecked(&inc, &inc);
                m -= &values[j * n + i];
                values[i * n + j] = m;
            }
        }
        RawLevel2 {
            nodes: n,
            dim: d,
            values,
        }
    }

    #[inline]
    pub fn nodes(&self) -> usize {
        self.nodes
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> &Mat {
        &self.values[i * self.nodes + j]
    }

    pub fn get_mut(&mut self, i: usize, j: usize) -> &mut Mat {
        &mut self.values[i * self.nodes + j]
    }
}

fn check_raw(path: &SampledPath, raw: &RawLevel2) -> Result<()> {
    if raw.nodes != path.grid().len() {
        return Err(Error::GridMismatch(format!(
            "level-2 field has {} nodes, path has {}",
            raw.nodes,
            path.grid().len()
        )));
    }
    if raw.dim != path.dim() {
        return Err(Error::DimensionMismatch {
            context: "chen_defect",
            expected: path.dim(),
            found: raw.dim,
        });
    }
    Ok(())
}

/// `𝕏_{i,j} − 𝕏_{i,u} − 𝕏_{u,j} − X_{i,u} ⊗ X_{u,j}`; zero iff Chen holds.
pub fn chen_defect(
    path: &SampledPath,
    raw: &RawLevel2,
    i: usize,
    u: usize,
    j: usize,
) -> Result<Mat> {
    check_raw(path, raw)?;
    path.grid().check_index(j)?;
    if !(i <= u && u <= j) {
        return Err(Error::IndexOrder(format!("need i ≤ u ≤ j, got ({i}, {u}, {j})")));
    }
    Ok(chen_defect_unchecked(path, raw, i, u, j))
}

fn chen_defect_unchecked(path: &SampledPath, raw: &RawLevel2, i: usize, u: usize, j: usize) -> Mat {
    let mut m = raw.get(i, j).clone();
    m -= raw.get(i, u);
    m -= raw.get(u, j);
    let a = path.increment_unchecked(i, u);
    let b = path.increment_unchecked(u, j);
    add_outer(&mut m, -1.0, &a, &b);
    m
}

/// Largest Frobenius Chen defect over all triples `i ≤ u ≤ j`.
pub fn max_chen_defect(path: &SampledPath, raw: &RawLevel2) -> Result<f64> {
    check_raw(path, raw)?;
    let n = raw.nodes;
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let mut m = 0.0f64;
            for u in i..n {
                for j in u..n {
                    m = m.max(frobenius_norm(&chen_defect_unchecked(path, raw, i, u, j)));
                }
            }
            m
        })
        .reduce(|| 0.0, f64::max))
}

/// JSON form `{d, times[], X[][], blocks[][][]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoughPathJson {
    pub d: usize,
    pub times: Vec<f64>,
    #[serde(rename = "X")]
    pub x: Vec<Vec<f64>>,
    pub blocks: Vec<Vec<Vec<f64>>>,
}
