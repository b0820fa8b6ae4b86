//! Brownian and Poisson increments on dyadic grids.
//!
//! Each `(seed, level, path_index)` triple owns an independent ChaCha8 stream:
//! the seed is the key and `(level, path_index)` is packed into the 64-bit
//! stream id, so a grid can be regenerated on any thread without coordination.
//! Normals use the ziggurat sampler of `rand_distr::StandardNormal`; Poisson
//! counts use inversion by sequential search.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::error::{Error, Result};
use crate::model::Problem;

pub const MAX_LEVEL: u32 = 30;

const PATH_INDEX_BITS: u32 = 56;

/// Per-step noise for one path at one level. Jump counts are stored raw; the
/// compensator `lambda * h` is subtracted by the schemes.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseGrid {
    level: u32,
    t0: f64,
    h: f64,
    intensity: f64,
    brownian_dim: usize,
    dw: Vec<f64>,
    dp: Vec<u32>,
}

impl NoiseGrid {
    /// Builds a grid from explicit increments. `dw` is step-major with
    /// `brownian_dim` entries per step.
    pub fn from_increments(
        level: u32,
        t0: f64,
        t_end: f64,
        intensity: f64,
        brownian_dim: usize,
        dw: Vec<f64>,
        dp: Vec<u32>,
    ) -> Result<Self> {
        if level > MAX_LEVEL {
            return Err(Error::LevelOutOfRange(level));
        }
        let n = 1usize << level;
        if brownian_dim == 0 || dw.len() != n * brownian_dim || dp.len() != n {
            return Err(Error::InvalidArgument(format!(
                "increment lengths ({}, {}) do not match 2^{level} steps of dimension {brownian_dim}",
                dw.len(),
                dp.len()
            )));
        }
        Ok(NoiseGrid { level, t0, h: step_size(t0, t_end, level), intensity, brownian_dim, dw, dp })
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn n_steps(&self) -> usize {
        self.dp.len()
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn intensity(&self) -> f64 {
        self.intensity
    }

    pub fn brownian_dim(&self) -> usize {
        self.brownian_dim
    }

    pub fn dw(&self) -> &[f64] {
        &self.dw
    }

    pub fn dp(&self) -> &[u32] {
        &self.dp
    }

    pub fn dw_step(&self, n: usize) -> &[f64] {
        &self.dw[n * self.brownian_dim..(n + 1) * self.brownian_dim]
    }

    /// `dP[n] - lambda * h`.
    pub fn compensated_jump(&self, n: usize) -> f64 {
        self.dp[n] as f64 - self.intensity * self.h
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_steps()).map(|i| self.t0 + i as f64 * self.h).collect()
    }

    /// Pairwise sums of consecutive increments: the level `l - 1` grid driven by
    /// the same Brownian and Poisson paths.
    pub fn coarsen(&self) -> Result<NoiseGrid> {
        if self.level == 0 {
            return Err(Error::CoarsenLevelZero);
        }
        let m = self.brownian_dim;
        let n = self.n_steps() / 2;
        let mut dw = Vec::with_capacity(n * m);
        for k in 0..n {
            let a = self.dw_step(2 * k);
            let b = self.dw_step(2 * k + 1);
            dw.extend(a.iter().zip(b).map(|(x, y)| x + y));
        }
        let dp = self.dp.chunks_exact(2).map(|c| c[0] + c[1]).collect();
        Ok(NoiseGrid {
            level: self.level - 1,
            t0: self.t0,
            h: self.h * 2.0,
            intensity: self.intensity,
            brownian_dim: m,
            dw,
            dp,
        })
    }
}

/// `(T - t0) / 2^level`.
pub fn step_size(t0: f64, t_end: f64, level: u32) -> f64 {
    (t_end - t0) / (1u64 << level) as f64
}

/// Random stream for `(seed, level, path_index)`.
pub fn stream_rng(seed: u64, level: u32, path_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let index = path_index & ((1u64 << PATH_INDEX_BITS) - 1);
    rng.set_stream(((level as u64) << PATH_INDEX_BITS) | index);
    rng
}

/// Poisson sample by inversion with sequential search (valid for `mean <= 10`,
/// falls back to `rand_distr` above that).
pub fn sample_poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u32 {
    if mean <= 0.0 {
        return 0;
    }
    if mean > 10.0 {
        let d = Poisson::new(mean).expect("positive finite mean");
        return d.sample(rng) as u32;
    }
    let u: f64 = rng.gen();
    let mut p = (-mean).exp();
    let mut cdf = p;
    let mut k = 0u32;
    while u > cdf && k < 1000 {
        k += 1;
        p *= mean / k as f64;
        cdf += p;
        if p == 0.0 {
            break;
        }
    }
    k
}

/// Draws the level-`level` grid for `path_index`. Deterministic in its arguments.
pub fn generate(seed: u64, path_index: u64, problem: &Problem, level: u32) -> Result<NoiseGrid> {
    if level > MAX_LEVEL {
        return Err(Error::LevelOutOfRange(level));
    }
    let n = 1usize << level;
    let m = problem.brownian_dim();
    let h = step_size(problem.t0(), problem.t_end(), level);
    let sd = h.sqrt();
    let mean_jumps = problem.intensity() * h;
    let mut rng = stream_rng(seed, level, path_index);
    let mut dw = Vec::with_capacity(n * m);
    let mut dp = Vec::with_capacity(n);
    for _ in 0..n {
        for _ in 0..m {
            let z: f64 = StandardNormal.sample(&mut rng);
            dw.push(sd * z);
        }
        dp.push(sample_poisson(&mut rng, mean_jumps));
    }
    Ok(NoiseGrid { level, t0: problem.t0(), h, intensity: problem.intensity(), brownian_dim: m, dw, dp })
}
