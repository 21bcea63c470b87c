//! Brownian motion on grids and its Itô and Stratonovich level-2 lifts.
//!
//! Paths are drawn on a fine grid with `q` uniform substeps per coarse step.
//! Every path owns a ChaCha8 stream selected by `(seed, path index)`, and
//! each fine step consumes a fixed number of words, so the draws of step `k`
//! of path `p` never depend on any other path or step.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{SampledPath, TimeGrid};
use crate::rough_path::RoughPath;
use crate::tensor::{add_outer, anti, Mat};

pub const DEFAULT_OVERSAMPLE: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseConfig {
    dim: usize,
    coarse: TimeGrid,
    oversample: usize,
    seed: u64,
}

impl NoiseConfig {
    pub fn new(dim: usize, coarse: TimeGrid, oversample: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("noise dimension must be positive".into()));
        }
        if oversample == 0 {
            return Err(Error::InvalidArgument("oversampling factor must be at least 1".into()));
        }
        Ok(NoiseConfig {
            dim,
            coarse,
            oversample,
            seed,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coarse(&self) -> &TimeGrid {
        &self.coarse
    }

    pub fn oversample(&self) -> usize {
        self.oversample
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// The coarse grid with every step split into `oversample` equal parts.
    pub fn fine_grid(&self) -> TimeGrid {
        let q = self.oversample;
        let times = self.coarse.times();
        let mut fine = Vec::with_capacity(self.coarse.steps() * q + 1);
        for w in times.windows(2) {
            let h = (w[1] - w[0]) / q as f64;
            fine.extend((0..q).map(|r| w[0] + r as f64 * h));
        }
        fine.push(self.coarse.horizon());
        TimeGrid::new(fine).expect("refinement of a valid grid")
    }
}

fn path_rng(seed: u64, path: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path);
    rng
}

/// Box–Muller from two uniforms; `u1` is shifted away from zero.
#[inline]
fn gaussian_pair<R: Rng>(rng: &mut R) -> (f64, f64) {
    let u1 = 1.0 - rng.gen::<f64>();
    let u2 = rng.gen::<f64>();
    let r = (-2.0 * u1.ln()).sqrt();
    let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
    (r * c, r * s)
}

/// Brownian path number `path` of the ensemble described by `cfg`, on the
/// fine grid.
pub fn sample_bm(cfg: &NoiseConfig, path: u64) -> SampledPath {
    let grid = cfg.fine_grid();
    let d = cfg.dim;
    let pairs = d.div_ceil(2);
    let mut rng = path_rng(cfg.seed, path);
    let mut values = vec![0.0; grid.len() * d];
    let mut z = vec![0.0; 2 * pairs];
    for k in 0..grid.steps() {
        for p in 0..pairs {
            let (a, b) = gaussian_pair(&mut rng);
            z[2 * p] = a;
            z[2 * p + 1] = b;
        }
        let sd = grid.dt(k).sqrt();
        for c in 0..d {
            values[(k + 1) * d + c] = values[k * d + c] + sd * z[c];
        }
    }
    SampledPath::new(grid, d, values).expect("finite by construction")
}

/// Paths `first..first+count` sampled in parallel; the result does not
/// depend on the thread count.
pub fn sample_ensemble(cfg: &NoiseConfig, first: u64, count: u64) -> Vec<SampledPath> {
    (first..first + count)
        .into_par_iter()
        .map(|p| sample_bm(cfg, p))
        .collect()
}

fn coarse_cells(fine: &SampledPath, coarse: &TimeGrid) -> Result<Vec<usize>> {
    fine.grid().embed(coarse)
}

/// Left-point iterated sums of the fine path over each cell, as raw blocks.
fn ito_blocks(fine: &SampledPath, nodes: &[usize]) -> Vec<Mat> {
    let d = fine.dim();
    nodes
        .windows(2)
        .map(|w| {
            let mut block = Mat::zeros(d, d);
            for k in w[0]..w[1] {
                let a = fine.increment_unchecked(w[0], k);
                let s = fine.increment_unchecked(k, k + 1);
                add_outer(&mut block, 1.0, &a, &s);
            }
            block
        })
        .collect()
}

/// Itô lift on `coarse`: each block is the left-point sum
/// `Σ B_{t_k,τ} ⊗ ΔB_τ` over the fine steps of the cell.
pub fn ito_enhance(fine: &SampledPath, coarse: &TimeGrid) -> Result<RoughPath> {
    let nodes = coarse_cells(fine, coarse)?;
    let blocks = ito_blocks(fine, &nodes);
    RoughPath::new(fine.restrict(&nodes)?, blocks)
}

/// Geometric lift on `coarse`: `anti(Itô block) + ½ ΔB ⊗ ΔB` per cell.
pub fn strat_enhance(fine: &SampledPath, coarse: &TimeGrid) -> Result<RoughPath> {
    let nodes = coarse_cells(fine, coarse)?;
    let blocks = ito_blocks(fine, &nodes)
        .iter()
        .zip(nodes.windows(2))
        .map(|(b, w)| {
            let mut out = anti(b).expect("square");
            let inc = fine.increment_unchecked(w[0], w[1]);
            add_outer(&mut out, 0.5, &inc, &inc);
            out
        })
        .collect();
    RoughPath::new(fine.restrict(&nodes)?, blocks)
}

/// Adds the deterministic shift `(Δt_k / 2)·Id` to every block.
pub fn strat_shift(ito: &RoughPath) -> RoughPath {
    let d = ito.dim();
    let shift: Vec<Mat> = ito
        .grid()
        .times()
        .iter()
        .map(|&t| Mat::identity(d).scaled(t / 2.0))
        .collect();
    ito.shifted_by(&shift).expect("one shift per node")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Enhancement {
    Ito,
    Strat,
    StratShift,
}

impl Enhancement {
    pub fn lift(self, fine: &SampledPath, coarse: &TimeGrid) -> Result<RoughPath> {
        match self {
            Enhancement::Ito => ito_enhance(fine, coarse),
            Enhancement::Strat => strat_enhance(fine, coarse),
            Enhancement::StratShift => Ok(strat_shift(&ito_enhance(fine, coarse)?)),
        }
    }
}

impl std::str::FromStr for Enhancement {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ito" => Ok(Enhancement::Ito),
            "strat" => Ok(Enhancement::Strat),
            "strat-shift" => Ok(Enhancement::StratShift),
            other => Err(Error::InvalidArgument(format!(
                "unknown enhancement `{other}` (expected ito, strat or strat-shift)"
            ))),
        }
    }
}

/// Samples path `path` and lifts it on the coarse grid of `cfg`.
pub fn sample_enhanced(cfg: &NoiseConfig, path: u64, kind: Enhancement) -> Result<RoughPath> {
    kind.lift(&sample_bm(cfg, path), cfg.coarse())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{frobenius_norm, outer, sym};
    use proptest::prelude::*;

    fn cfg(d: usize, n: usize, q: usize, seed: u64) -> NoiseConfig {
        NoiseConfig::new(d, TimeGrid::uniform(n, 1.0).unwrap(), q, seed).unwrap()
    }

    fn realized_qv(fine: &SampledPath) -> Mat {
        let d = fine.dim();
        let mut m = Mat::zeros(d, d);
        for k in 0..fine.grid().steps() {
            let s = fine.increment(k, k + 1).unwrap();
            m += &outer(&s, &s).unwrap();
        }
        m
    }

    #[test]
    fn config_validation() {
        let g = TimeGrid::uniform(4, 1.0).unwrap();
        assert!(NoiseConfig::new(0, g.clone(), 1, 0).is_err());
        assert!(NoiseConfig::new(1, g.clone(), 0, 0).is_err());
        let c = NoiseConfig::new(2, g, 3, 0).unwrap();
        assert_eq!(c.fine_grid().steps(), 12);
        assert!((c.fine_grid().t(3) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn deterministic_streams() {
        let c = cfg(3, 16, 4, 99);
        assert_eq!(sample_bm(&c, 5), sample_bm(&c, 5));
        assert_ne!(sample_bm(&c, 5), sample_bm(&c, 6));
        let ens = sample_ensemble(&c, 3, 4);
        assert_eq!(ens[2], sample_bm(&c, 5));
        assert_eq!(sample_bm(&c, 0).value(0), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn single_step_moments() {
        let c = cfg(2, 1, 1, 2024);
        let draws = 100_000;
        let incs: Vec<Vec<f64>> = (0..draws)
            .map(|p| sample_bm(&c, p).value(1).to_vec())
            .collect();
        let n = draws as f64;
        let var: f64 = incs.iter().map(|v| v[0] * v[0]).sum::<f64>() / n;
        let cov: f64 = incs.iter().map(|v| v[0] * v[1]).sum::<f64>() / n;
        assert!((var - 1.0).abs() < 0.03, "variance {var}");
        assert!(cov.abs() < 0.03, "covariance {cov}");
    }

    #[test]
    fn ito_without_oversampling_has_zero_blocks() {
        let c = cfg(2, 16, 1, 1);
        let r = ito_enhance(&sample_bm(&c, 0), c.coarse()).unwrap();
        assert!(r.blocks().iter().all(|b| b.max_abs() == 0.0));
    }

    #[test]
    fn scalar_identities() {
        let c = cfg(1, 64, 8, 3);
        let fine = sample_bm(&c, 0);
        let bt = fine.value(fine.grid().steps())[0];
        let qv = realized_qv(&fine)[(0, 0)];
        let ito = ito_enhance(&fine, c.coarse()).unwrap();
        let l2 = ito.second_level(0, 64).unwrap()[(0, 0)];
        assert!((l2 - 0.5 * (bt * bt - qv)).abs() < 1e-12);
        let strat = strat_enhance(&fine, c.coarse()).unwrap();
        let l2 = strat.second_level(0, 64).unwrap()[(0, 0)];
        assert!((l2 - 0.5 * bt * bt).abs() < 1e-12);
    }

    #[test]
    fn ito_bracket_is_realized_qv() {
        let c = cfg(3, 32, 4, 4);
        let fine = sample_bm(&c, 0);
        let ito = ito_enhance(&fine, c.coarse()).unwrap();
        let diff = &ito.bracket_one_param(32).unwrap() - &realized_qv(&fine);
        assert!(frobenius_norm(&diff) < 1e-12);
    }

    #[test]
    fn strat_is_geometric() {
        let c = cfg(3, 64, 4, 5);
        let strat = sample_enhanced(&c, 0, Enhancement::Strat).unwrap();
        assert!(strat.is_weakly_geometric(1e-12).unwrap());
        assert!(strat.brackets().iter().all(|b| frobenius_norm(b) < 1e-12));
    }

    #[test]
    fn shift_examples() {
        let c = cfg(2, 16, 1, 6);
        let ito = ito_enhance(&sample_bm(&c, 0), c.coarse()).unwrap();
        let shifted = strat_shift(&ito);
        for (k, b) in shifted.blocks().iter().enumerate() {
            let want = Mat::identity(2).scaled(c.coarse().dt(k) / 2.0);
            assert!(frobenius_norm(&(b - &want)) < 1e-15);
        }
        let c = cfg(2, 16, 4, 7);
        let ito = ito_enhance(&sample_bm(&c, 0), c.coarse()).unwrap();
        let shifted = strat_shift(&ito);
        for (k, (a, b)) in shifted.brackets().iter().zip(ito.brackets()).enumerate() {
            let want = &b - &Mat::identity(2).scaled(c.coarse().t(k));
            assert!(frobenius_norm(&(a - &want)) < 1e-12);
        }
        assert!(shifted.max_chen_defect() < 1e-12);
    }

    #[test]
    fn enhancement_parsing() {
        assert_eq!("ito".parse::<Enhancement>().unwrap(), Enhancement::Ito);
        assert_eq!("strat-shift".parse::<Enhancement>().unwrap(), Enhancement::StratShift);
        assert!("levy".parse::<Enhancement>().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn constructions_satisfy_chen(seed in 0u64..10_000, d in 1usize..4, q in 1usize..6) {
            let c = cfg(d, 24, q, seed);
            for kind in [Enhancement::Ito, Enhancement::Strat, Enhancement::StratShift] {
                let r = sample_enhanced(&c, seed, kind).unwrap();
                prop_assert!(r.max_chen_defect() <= 1e-12);
            }
        }

        #[test]
        fn shift_and_strat_sym_gap(seed in 0u64..10_000, q in 1usize..8) {
            let c = cfg(2, 16, q, seed);
            let fine = sample_bm(&c, 0);
            let ito = ito_enhance(&fine, c.coarse()).unwrap();
            let shifted = strat_shift(&ito);
            let strat = strat_enhance(&fine, c.coarse()).unwrap();
            let nodes = c.fine_grid().embed(c.coarse()).unwrap();
            let mut bound: f64 = 0.0;
            for (k, w) in nodes.windows(2).enumerate() {
                let mut qv = Mat::zeros(2, 2);
                for f in w[0]..w[1] {
                    let s = fine.increment(f, f + 1).unwrap();
                    qv += &outer(&s, &s).unwrap();
                }
                qv -= &Mat::identity(2).scaled(c.coarse().dt(k));
                bound = bound.max(frobenius_norm(&qv) / 2.0);
            }
            for (a, b) in shifted.blocks().iter().zip(strat.blocks()) {
                let gap = frobenius_norm(&sym(&(a - b)).unwrap());
                prop_assert!(gap <= bound + 1e-14);
            }
        }
    }
}
