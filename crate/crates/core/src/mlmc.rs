//! Multilevel Monte Carlo estimator.
//!
//! The estimate is the telescoping sum
//!
//! ```text
//! E[P_L] = E[P_b] + sum_{l = b+1}^{L} E[P_l - P_{l-1}]
//! ```
//!
//! where each correction is sampled from coupled fine/coarse paths and the base
//! level `b` is the coarsest level the scheme can run on (level 0 unless an
//! implicit scheme needs a smaller step for `h c < 1`).

use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::coupling::{simulate_coupled, simulate_single};
use crate::error::{Error, Result};
use crate::model::Problem;
use crate::noise::{step_size, MAX_LEVEL};
use crate::payoff::Payoff;
use crate::schemes::{SchemeConfig, SchemeKind};

/// Paths per parallel batch; results are reduced in path-index order.
const BATCH: u64 = 1 << 14;

/// Running sums for one level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelStats {
    pub level: u32,
    /// True for the first level of the telescoping sum (no coarse partner).
    pub is_base: bool,
    pub n_samples: u64,
    pub sum_diff: f64,
    pub sumsq_diff: f64,
    pub sum_fine: f64,
    pub sumsq_fine: f64,
    pub cost_steps: u64,
    pub n_failures: u64,
    /// Next unused path index at this level.
    pub next_index: u64,
}

impl LevelStats {
    pub fn new(level: u32, is_base: bool) -> Self {
        LevelStats {
            level,
            is_base,
            n_samples: 0,
            sum_diff: 0.0,
            sumsq_diff: 0.0,
            sum_fine: 0.0,
            sumsq_fine: 0.0,
            cost_steps: 0,
            n_failures: 0,
            next_index: 0,
        }
    }

    /// Time steps per sample: `2^l + 2^(l-1)` for a coupled pair, `2^l` at the base.
    pub fn steps_per_sample(&self) -> u64 {
        if self.is_base {
            1 << self.level
        } else {
            (1 << self.level) + (1 << (self.level - 1))
        }
    }

    pub fn push(&mut self, fine: f64, diff: f64) {
        self.n_samples += 1;
        self.sum_diff += diff;
        self.sumsq_diff += diff * diff;
        self.sum_fine += fine;
        self.sumsq_fine += fine * fine;
        self.cost_steps += self.steps_per_sample();
    }

    /// Failed paths are charged the full per-sample cost.
    pub fn push_failure(&mut self) {
        self.n_failures += 1;
        self.cost_steps += self.steps_per_sample();
    }

    pub fn mean_diff(&self) -> f64 {
        if self.n_samples == 0 {
            0.0
        } else {
            self.sum_diff / self.n_samples as f64
        }
    }

    pub fn mean_fine(&self) -> f64 {
        if self.n_samples == 0 {
            0.0
        } else {
            self.sum_fine / self.n_samples as f64
        }
    }

    /// Bessel-corrected variance of the level difference; `None` below two samples.
    pub fn var_diff(&self) -> Option<f64> {
        sample_variance(self.n_samples, self.sum_diff, self.sumsq_diff)
    }

    pub fn var_fine(&self) -> Option<f64> {
        sample_variance(self.n_samples, self.sum_fine, self.sumsq_fine)
    }
}

fn sample_variance(n: u64, sum: f64, sumsq: f64) -> Option<f64> {
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    Some(((sumsq - sum * sum / nf) / (nf - 1.0)).max(0.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlmcResult {
    pub estimate: f64,
    pub levels: Vec<LevelStats>,
    pub base_level: u32,
    pub l_final: u32,
    pub epsilon_target: f64,
    pub total_cost_steps: u64,
    pub bias_estimate: f64,
    pub variance_of_estimator: f64,
    pub wall_time: Duration,
    /// False when the bias test still failed at the maximum level or the
    /// per-level sample cap prevented meeting the variance target.
    pub converged: bool,
    pub scheme: SchemeKind,
}

impl MlmcResult {
    fn assemble(
        levels: Vec<LevelStats>,
        eps: f64,
        bias_estimate: f64,
        converged: bool,
        scheme: SchemeKind,
        started: Instant,
    ) -> Self {
        let estimate = levels.iter().map(LevelStats::mean_diff).sum();
        let variances = level_variances(&levels);
        let variance_of_estimator = levels
            .iter()
            .zip(&variances)
            .map(|(s, v)| if s.n_samples == 0 { 0.0 } else { v / s.n_samples as f64 })
            .sum();
        MlmcResult {
            estimate,
            base_level: levels.first().map_or(0, |s| s.level),
            l_final: levels.last().map_or(0, |s| s.level),
            total_cost_steps: levels.iter().map(|s| s.cost_steps).sum(),
            levels,
            epsilon_target: eps,
            bias_estimate,
            variance_of_estimator,
            wall_time: started.elapsed(),
            converged,
            scheme,
        }
    }

    pub fn total_failures(&self) -> u64 {
        self.levels.iter().map(|s| s.n_failures).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlmcConfig {
    pub l_start: u32,
    pub l_max: u32,
    pub initial_samples: u64,
    /// Assumed weak order in the bias test `|mean_L| / (2^alpha - 1) <= eps / sqrt(2)`.
    pub alpha: f64,
    pub seed: u64,
    /// Worker threads; `None` uses the global rayon pool.
    pub threads: Option<usize>,
    /// First level of the telescoping sum; `None` picks the coarsest admissible one.
    pub base_level: Option<u32>,
    /// Cap on the samples drawn at any one level. A run whose optimal
    /// allocation exceeds it stops with `converged = false`.
    pub max_samples_per_level: u64,
    pub scheme: SchemeConfig,
}

impl MlmcConfig {
    pub fn new(seed: u64) -> Self {
        MlmcConfig {
            l_start: 2,
            l_max: 10,
            initial_samples: 10_000,
            alpha: 1.0,
            seed,
            threads: None,
            base_level: None,
            max_samples_per_level: 1_000_000,
            scheme: SchemeConfig::default(),
        }
    }
}

/// Sample counts minimising `sum M_l / h_l` subject to `sum V_l / M_l <= eps^2 / 2`:
///
/// ```text
/// M_l = ceil(2 eps^-2 sqrt(V_l h_l) sum_i sqrt(V_i / h_i)),  clamped below at 2
/// ```
pub fn optimal_allocation(variances: &[f64], steps: &[f64], eps: f64) -> Result<Vec<u64>> {
    if variances.is_empty() {
        return Err(Error::InvalidArgument("allocation needs at least one level".into()));
    }
    if variances.len() != steps.len() {
        return Err(Error::InvalidArgument(format!(
            "{} variances but {} step sizes",
            variances.len(),
            steps.len()
        )));
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument("eps must be > 0".into()));
    }
    if variances.iter().any(|v| !(*v >= 0.0 && v.is_finite())) || steps.iter().any(|h| !(*h > 0.0)) {
        return Err(Error::InvalidArgument("variances must be >= 0 and step sizes > 0".into()));
    }
    let total: f64 = variances.iter().zip(steps).map(|(v, h)| (v / h).sqrt()).sum();
    Ok(variances
        .iter()
        .zip(steps)
        .map(|(v, h)| {
            let m = 2.0 / (eps * eps) * (v * h).sqrt() * total;
            (ceil_robust(m) as u64).max(2)
        })
        .collect())
}

/// Ceiling that ignores relative rounding noise below 1e-12, so that
/// `9 / (1/3)^2 = 81.00000000000001` rounds to 81.
pub fn ceil_robust(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-12 * x.abs().max(1.0) {
        r
    } else {
        x.ceil()
    }
}

/// Explicit level/sample schedule for a fixed-schedule run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule {
    pub max_level: u32,
    /// Samples for levels `0..=max_level`.
    pub samples: Vec<u64>,
}

/// The a-priori schedule
///
/// ```text
/// L   = ceil(log2(9 (T - t0) eps^-2))
/// M_0 = ceil(9 eps^-2)
/// M_l = ceil(16 L^2 eps^-2 (T - t0) / 2^l),  l = 1..L
/// ```
pub fn theoretical_schedule(eps: f64, horizon: f64) -> Result<Schedule> {
    if !(eps > 0.0 && eps < (-1.0f64).exp()) {
        return Err(Error::InvalidArgument(format!("eps must lie in (0, 1/e), got {eps}")));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidArgument("horizon must be > 0".into()));
    }
    let inv_eps2 = 1.0 / (eps * eps);
    let max_level = (ceil_robust((9.0 * horizon * inv_eps2).log2()).max(1.0)) as u32;
    if max_level > MAX_LEVEL {
        return Err(Error::LevelOutOfRange(max_level));
    }
    let lf = max_level as f64;
    let mut samples = vec![ceil_robust(9.0 * inv_eps2) as u64];
    for l in 1..=max_level {
        let m = 16.0 * lf * lf * inv_eps2 * horizon / (1u64 << l) as f64;
        samples.push(ceil_robust(m) as u64);
    }
    Ok(Schedule { max_level, samples })
}

/// Coarsest level whose step passes the implicit-solver guard.
pub fn admissible_base_level(problem: &Problem, kind: SchemeKind, cfg: &SchemeConfig) -> Result<u32> {
    if !kind.is_implicit() {
        return Ok(0);
    }
    let c = cfg.solver.declared_c.unwrap_or(problem.one_sided_lipschitz());
    (0..=MAX_LEVEL)
        .find(|&l| step_size(problem.t0(), problem.t_end(), l) * c < 1.0)
        .ok_or(Error::NonContractive { h: step_size(problem.t0(), problem.t_end(), MAX_LEVEL), c })
}

/// One MLMC sample at `level`: `(P_l, P_l - P_{l-1})`, or `(P_b, P_b)` at the base.
pub fn level_sample(
    problem: &Problem,
    kind: SchemeKind,
    payoff: &Payoff,
    level: u32,
    is_base: bool,
    seed: u64,
    path_index: u64,
    cfg: &SchemeConfig,
) -> Result<(f64, f64)> {
    if is_base {
        let path = simulate_single(problem, kind, level, seed, path_index, cfg)?;
        let p = payoff.evaluate(&path)?;
        Ok((p, p))
    } else {
        let pair = simulate_coupled(problem, kind, level, seed, path_index, cfg)?;
        let fine = payoff.evaluate(&pair.fine)?;
        let coarse = payoff.evaluate(&pair.coarse)?;
        Ok((fine, fine - coarse))
    }
}

/// Shared context for drawing samples.
pub(crate) struct Sampler<'a> {
    pub problem: &'a Problem,
    pub kind: SchemeKind,
    pub payoff: &'a Payoff,
    pub seed: u64,
    pub cfg: &'a SchemeConfig,
}

impl Sampler<'_> {
    /// Adds `wanted` successful samples to `stats`. Explicit-scheme explosions are
    /// counted and replaced by fresh paths; every other error aborts.
    pub fn extend(&self, stats: &mut LevelStats, wanted: u64) -> Result<()> {
        let mut missing = wanted;
        while missing > 0 {
            let start = stats.next_index;
            let count = missing.min(BATCH);
            let (level, is_base) = (stats.level, stats.is_base);
            let results: Vec<Result<(f64, f64)>> = (start..start + count)
                .into_par_iter()
                .map(|i| {
                    level_sample(self.problem, self.kind, self.payoff, level, is_base, self.seed, i, self.cfg)
                })
                .collect();
            stats.next_index += count;
            for r in results {
                match r {
                    Ok((fine, diff)) => {
                        stats.push(fine, diff);
                        missing -= 1;
                    }
                    Err(e) if !self.kind.is_implicit() && e.is_explosion() => stats.push_failure(),
                    Err(e) => return Err(e),
                }
            }
            if stats.n_samples == 0 && stats.n_failures >= 1000 {
                return Err(Error::AllPathsFailed { level: stats.level, attempts: stats.n_failures });
            }
        }
        Ok(())
    }
}

/// Per-level variances; levels with fewer than two samples borrow the nearest
/// estimated level's variance scaled by `2^(-beta * distance)`.
pub fn level_variances(levels: &[LevelStats]) -> Vec<f64> {
    let known: Vec<(u32, f64)> = levels.iter().filter_map(|s| s.var_diff().map(|v| (s.level, v))).collect();
    let beta = fitted_beta(&known).unwrap_or(1.0);
    levels
        .iter()
        .map(|s| match s.var_diff() {
            Some(v) => v,
            None => match known.iter().min_by_key(|(l, _)| l.abs_diff(s.level)) {
                Some(&(l, v)) => v * 2f64.powf(-beta * (s.level as f64 - l as f64)),
                None => 0.0,
            },
        })
        .collect()
}

fn fitted_beta(known: &[(u32, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = known.iter().filter(|(_, v)| *v > 0.0).map(|&(l, v)| (l as f64, v.log2())).collect();
    if pts.len() < 2 {
        return None;
    }
    crate::analysis::ols_slope(&pts).map(|s| (-s).max(0.5))
}

pub(crate) fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Adaptive MLMC: allocate samples with [`optimal_allocation`], add levels until
/// the bias test passes or `l_max` is reached.
pub fn run_adaptive(problem: &Problem, kind: SchemeKind, payoff: &Payoff, eps: f64, config: &MlmcConfig) -> Result<MlmcResult> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument("eps must be > 0".into()));
    }
    if config.initial_samples < 2 || config.max_samples_per_level < config.initial_samples {
        return Err(Error::InvalidArgument("need 2 <= initial_samples <= max_samples_per_level".into()));
    }
    if config.l_max > MAX_LEVEL || config.l_start > config.l_max {
        return Err(Error::InvalidArgument(format!(
            "need l_start <= l_max <= {MAX_LEVEL}, got {} and {}",
            config.l_start, config.l_max
        )));
    }
    if !(config.alpha > 0.0) {
        return Err(Error::InvalidArgument("alpha must be > 0".into()));
    }
    config.scheme.solver.validate()?;
    let base = match config.base_level {
        Some(b) => b,
        None => admissible_base_level(problem, kind, &config.scheme)?,
    };
    if base >= config.l_max {
        return Err(Error::InvalidArgument(format!(
            "base level {base} leaves no correction levels below l_max = {}",
            config.l_max
        )));
    }
    let started = Instant::now();
    let sampler = Sampler { problem, kind, payoff, seed: config.seed, cfg: &config.scheme };
    let steps = |l: u32| step_size(problem.t0(), problem.t_end(), l);

    with_threads(config.threads, || {
        let mut top = config.l_start.max(base + 1);
        let mut levels: Vec<LevelStats> = (base..=top).map(|l| LevelStats::new(l, l == base)).collect();
        let mut pending: Vec<u64> = vec![config.initial_samples; levels.len()];
        let bias_factor = 2f64.powf(config.alpha) - 1.0;
        loop {
            for (stats, &want) in levels.iter_mut().zip(&pending) {
                if want > 0 {
                    sampler.extend(stats, want)?;
                }
            }
            let variances = level_variances(&levels);
            let hs: Vec<f64> = levels.iter().map(|s| steps(s.level)).collect();
            let target = optimal_allocation(&variances, &hs, eps)?;
            let cap = config.max_samples_per_level;
            pending = levels.iter().zip(&target).map(|(s, &m)| m.min(cap).saturating_sub(s.n_samples)).collect();
            if pending.iter().any(|&p| p > 0) {
                continue;
            }
            let bias = levels.last().expect("nonempty").mean_diff().abs() / bias_factor;
            if target.iter().any(|&m| m > cap) {
                return Ok(MlmcResult::assemble(levels, eps, bias, false, kind, started));
            }
            if bias <= eps / std::f64::consts::SQRT_2 {
                return Ok(MlmcResult::assemble(levels, eps, bias, true, kind, started));
            }
            if top == config.l_max {
                return Ok(MlmcResult::assemble(levels, eps, bias, false, kind, started));
            }
            top += 1;
            levels.push(LevelStats::new(top, false));
            pending.push(config.initial_samples);
        }
    })?
}

/// Runs exactly the given schedule (levels `0..=max_level`, no adaptivity).
pub fn run_fixed_schedule(
    problem: &Problem,
    kind: SchemeKind,
    payoff: &Payoff,
    schedule: &Schedule,
    seed: u64,
    threads: Option<usize>,
    cfg: &SchemeConfig,
) -> Result<MlmcResult> {
    if schedule.samples.len() != schedule.max_level as usize + 1 {
        return Err(Error::InvalidArgument("schedule needs one sample count per level 0..=L".into()));
    }
    if schedule.max_level > MAX_LEVEL {
        return Err(Error::LevelOutOfRange(schedule.max_level));
    }
    let started = Instant::now();
    let sampler = Sampler { problem, kind, payoff, seed, cfg };
    with_threads(threads, || {
        let mut levels = Vec::with_capacity(schedule.samples.len());
        for (l, &m) in schedule.samples.iter().enumerate() {
            let mut stats = LevelStats::new(l as u32, l == 0);
            sampler.extend(&mut stats, m)?;
            levels.push(stats);
        }
        let bias = levels.last().map_or(0.0, |s| s.mean_diff().abs());
        // the schedule carries its own error guarantee, so there is no bias test
        let eps = f64::NAN;
        Ok(MlmcResult::assemble(levels, eps, bias, true, kind, started))
    })?
}
