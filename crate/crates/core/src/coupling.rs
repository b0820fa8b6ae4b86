//! Coupled fine/coarse path pairs for the MLMC corrections.

use crate::error::{Error, PathSide, Result};
use crate::model::Problem;
use crate::noise::generate;
use crate::schemes::{simulate_path, Path, SchemeConfig, SchemeKind};

/// Fine path at level `l` and coarse path at level `l - 1`, driven by the same
/// Brownian and Poisson realisation.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledPaths {
    pub level: u32,
    pub fine: Path,
    pub coarse: Path,
}

impl CoupledPaths {
    pub fn fine_times(&self) -> Vec<f64> {
        self.fine.times()
    }

    pub fn coarse_times(&self) -> Vec<f64> {
        self.coarse.times()
    }
}

pub fn simulate_coupled(
    problem: &Problem,
    kind: SchemeKind,
    level: u32,
    seed: u64,
    path_index: u64,
    cfg: &SchemeConfig,
) -> Result<CoupledPaths> {
    if level == 0 {
        return Err(Error::InvalidArgument("coupled paths need level >= 1".into()));
    }
    let fine_grid = generate(seed, path_index, problem, level)?;
    let coarse_grid = fine_grid.coarsen()?;
    let tag = |side| move |e| Error::Coupled { side, source: Box::new(e) };
    let fine = simulate_path(problem, kind, &fine_grid, cfg).map_err(tag(PathSide::Fine))?;
    let coarse = simulate_path(problem, kind, &coarse_grid, cfg).map_err(tag(PathSide::Coarse))?;
    Ok(CoupledPaths { level, fine, coarse })
}

/// Uncoupled path at `level`; the first term of the telescoping sum.
pub fn simulate_single(
    problem: &Problem,
    kind: SchemeKind,
    level: u32,
    seed: u64,
    path_index: u64,
    cfg: &SchemeConfig,
) -> Result<Path> {
    let grid = generate(seed, path_index, problem, level)?;
    simulate_path(problem, kind, &grid, cfg)
}

/// One-step path over the whole horizon.
pub fn simulate_level0(problem: &Problem, kind: SchemeKind, seed: u64, path_index: u64, cfg: &SchemeConfig) -> Result<Path> {
    simulate_single(problem, kind, 0, seed, path_index, cfg)
}
