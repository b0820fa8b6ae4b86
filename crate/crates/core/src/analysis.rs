//! Empirical convergence orders and cost-vs-accuracy sweeps.

use std::ops::RangeInclusive;
use std::time::Duration;

use crate::error::{Error, Result};
use crate::mlmc::{run_adaptive, with_threads, LevelStats, MlmcConfig, Sampler};
use crate::model::Problem;
use crate::payoff::Payoff;
use crate::schemes::{SchemeConfig, SchemeKind};

/// Default fit window: levels 0..2 are far from the asymptotic regime.
pub const DEFAULT_WINDOW: (u32, u32) = (3, 8);

/// Ordinary least-squares slope of `y` on `x`; `None` for fewer than two
/// distinct abscissae.
pub fn ols_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

/// Statistics of `P_l - P_{l-1}` at one level, or the error that stopped it.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelEstimate {
    pub level: u32,
    pub samples: u64,
    pub mean_diff: f64,
    pub var_diff: f64,
    pub failures: u64,
    pub error: Option<String>,
}

impl LevelEstimate {
    pub fn log2_abs_mean(&self) -> f64 {
        self.mean_diff.abs().log2()
    }

    pub fn log2_var(&self) -> f64 {
        self.var_diff.log2()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub scheme: SchemeKind,
    pub payoff: String,
    pub levels: Vec<LevelEstimate>,
    pub window: (u32, u32),
    /// Weak order estimate: minus the slope of `log2 |E[P_l - P_{l-1}]|`.
    pub alpha_hat: Option<f64>,
    /// Variance decay estimate: minus the slope of `log2 V_l`.
    pub beta_hat: Option<f64>,
}

/// Fits `alpha_hat` and `beta_hat` over levels inside `window`; zero or
/// non-finite entries are skipped.
pub fn fit_orders(levels: &[u32], abs_means: &[f64], variances: &[f64], window: (u32, u32)) -> (Option<f64>, Option<f64>) {
    let pick = |values: &[f64]| -> Vec<(f64, f64)> {
        levels
            .iter()
            .zip(values)
            .filter(|(l, v)| **l >= window.0 && **l <= window.1 && **v > 0.0 && v.is_finite())
            .map(|(l, v)| (*l as f64, v.log2()))
            .collect()
    };
    let alpha = ols_slope(&pick(abs_means)).map(|s| -s);
    let beta = ols_slope(&pick(variances)).map(|s| -s);
    (alpha, beta)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrdersConfig {
    pub window: (u32, u32),
    pub threads: Option<usize>,
    pub scheme: SchemeConfig,
}

impl Default for OrdersConfig {
    fn default() -> Self {
        OrdersConfig { window: DEFAULT_WINDOW, threads: None, scheme: SchemeConfig::default() }
    }
}

/// Samples `samples_per_level` coupled pairs at every level of `level_range`
/// and fits the decay rates of the level means and variances.
pub fn estimate_orders(
    problem: &Problem,
    kind: SchemeKind,
    payoff: &Payoff,
    level_range: RangeInclusive<u32>,
    samples_per_level: u64,
    seed: u64,
    config: &OrdersConfig,
) -> Result<ConvergenceReport> {
    let (lo, hi) = (*level_range.start(), *level_range.end());
    if lo < 1 || hi > 12 || lo > hi {
        return Err(Error::InvalidArgument(format!("level range must lie within 1..=12, got {lo}..={hi}")));
    }
    if samples_per_level < 100 {
        return Err(Error::InvalidArgument("need at least 100 samples per level".into()));
    }
    let sampler = Sampler { problem, kind, payoff, seed, cfg: &config.scheme };
    let levels: Vec<LevelEstimate> = with_threads(config.threads, || {
        level_range
            .map(|l| {
                let mut stats = LevelStats::new(l, false);
                let outcome = sampler.extend(&mut stats, samples_per_level);
                LevelEstimate {
                    level: l,
                    samples: stats.n_samples,
                    mean_diff: stats.mean_diff(),
                    var_diff: stats.var_diff().unwrap_or(f64::NAN),
                    failures: stats.n_failures,
                    error: outcome.err().map(|e| e.to_string()),
                }
            })
            .collect()
    })?;
    let ok: Vec<&LevelEstimate> = levels.iter().filter(|e| e.error.is_none()).collect();
    let (alpha_hat, beta_hat) = fit_orders(
        &ok.iter().map(|e| e.level).collect::<Vec<_>>(),
        &ok.iter().map(|e| e.mean_diff.abs()).collect::<Vec<_>>(),
        &ok.iter().map(|e| e.var_diff).collect::<Vec<_>>(),
        config.window,
    );
    Ok(ConvergenceReport {
        scheme: kind,
        payoff: payoff.id().to_string(),
        levels,
        window: config.window,
        alpha_hat,
        beta_hat,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexityRecord {
    pub eps: f64,
    pub total_cost_steps: u64,
    pub wall_time: Duration,
    pub l_final: u32,
    pub estimate: f64,
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub scheme: SchemeKind,
    pub records: Vec<ComplexityRecord>,
    /// Slope of `log(cost)` against `log(1/eps)` over the successful runs.
    pub cost_slope: Option<f64>,
}

/// One adaptive run per tolerance. A failed run is recorded and the sweep continues.
pub fn complexity_sweep(
    problem: &Problem,
    kind: SchemeKind,
    payoff: &Payoff,
    eps_list: &[f64],
    config: &MlmcConfig,
) -> Result<SweepReport> {
    if eps_list.is_empty() {
        return Err(Error::InvalidArgument("eps list is empty".into()));
    }
    if eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument("eps list must be strictly descending".into()));
    }
    let records: Vec<ComplexityRecord> = eps_list
        .iter()
        .map(|&eps| match run_adaptive(problem, kind, payoff, eps, config) {
            Ok(r) => ComplexityRecord {
                eps,
                total_cost_steps: r.total_cost_steps,
                wall_time: r.wall_time,
                l_final: r.l_final,
                estimate: r.estimate,
                converged: r.converged,
                error: None,
            },
            Err(e) => ComplexityRecord {
                eps,
                total_cost_steps: 0,
                wall_time: Duration::ZERO,
                l_final: 0,
                estimate: f64::NAN,
                converged: false,
                error: Some(e.to_string()),
            },
        })
        .collect();
    let points: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| r.error.is_none() && r.total_cost_steps > 0)
        .map(|r| ((1.0 / r.eps).ln(), (r.total_cost_steps as f64).ln()))
        .collect();
    Ok(SweepReport { scheme: kind, records, cost_slope: ols_slope(&points) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{preset, Problem};

    #[test]
    fn geometric_inputs_recover_exponents() {
        let levels = [1, 2, 3];
        let means = [0.5, 0.25, 0.125];
        let vars = [0.25, 1.0 / 16.0, 1.0 / 64.0];
        let (a, b) = fit_orders(&levels, &means, &vars, (0, 12));
        assert_eq!(a, Some(1.0));
        assert_eq!(b, Some(2.0));
    }

    #[test]
    fn window_filters_levels() {
        let levels = [1, 2, 3, 4];
        let vars = [1.0, 1.0, 0.25, 1.0 / 16.0];
        let (_, b) = fit_orders(&levels, &vars, &vars, (3, 4));
        assert!((b.unwrap() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn ols_degenerate() {
        assert_eq!(ols_slope(&[(1.0, 2.0)]), None);
        assert_eq!(ols_slope(&[(1.0, 2.0), (1.0, 3.0)]), None);
        assert!((ols_slope(&[(0.0, 1.0), (1.0, 3.0), (2.0, 5.0)]).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn orders_argument_checks() {
        let p = preset("linear_jump_oracle").unwrap();
        let f = Payoff::terminal_identity();
        let cfg = OrdersConfig::default();
        assert!(estimate_orders(&p, SchemeKind::Ssbe, &f, 0..=3, 100, 1, &cfg).is_err());
        assert!(estimate_orders(&p, SchemeKind::Ssbe, &f, 1..=13, 100, 1, &cfg).is_err());
        assert!(estimate_orders(&p, SchemeKind::Ssbe, &f, 1..=3, 99, 1, &cfg).is_err());
    }

    #[test]
    fn orders_report_per_level_errors() {
        let p = preset("ginzburg_landau_jump").unwrap();
        let f = "mean_sq".parse::<Payoff>().unwrap();
        let r = estimate_orders(&p, SchemeKind::Ssbe, &f, 2..=4, 200, 1, &OrdersConfig::default()).unwrap();
        assert!(r.levels[0].error.is_some());
        assert!(r.levels[1].error.is_none() && r.levels[2].error.is_none());
        assert_eq!(r.levels[1].samples, 200);
    }

    #[test]
    fn orders_deterministic() {
        let p = preset("linear_jump_oracle").unwrap();
        let f = Payoff::terminal_identity();
        let cfg = OrdersConfig { window: (1, 4), ..Default::default() };
        let a = estimate_orders(&p, SchemeKind::Be, &f, 1..=4, 300, 5, &cfg).unwrap();
        let b = estimate_orders(&p, SchemeKind::Be, &f, 1..=4, 300, 5, &OrdersConfig { threads: Some(3), ..cfg }).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sweep_trivial_problem_costs_initial_samples() {
        let p = Problem::builder(1, 1).x0(vec![1.0]).build().unwrap();
        let mut cfg = MlmcConfig::new(1);
        cfg.initial_samples = 50;
        let r = complexity_sweep(&p, SchemeKind::Ssbe, &Payoff::terminal_identity(), &[0.1], &cfg).unwrap();
        assert_eq!(r.records.len(), 1);
        assert_eq!(r.records[0].total_cost_steps, 50 * (1 + 3 + 6));
        assert_eq!(r.cost_slope, None);
        assert!(complexity_sweep(&p, SchemeKind::Ssbe, &Payoff::terminal_identity(), &[0.1, 0.2], &cfg).is_err());
        assert!(complexity_sweep(&p, SchemeKind::Ssbe, &Payoff::terminal_identity(), &[], &cfg).is_err());
    }

    #[test]
    fn sweep_records_failures_and_continues() {
        let p = preset("ginzburg_landau_jump").unwrap();
        let mut cfg = MlmcConfig::new(1);
        cfg.initial_samples = 20;
        cfg.base_level = Some(0);
        let r = complexity_sweep(&p, SchemeKind::Ssbe, &Payoff::terminal_identity(), &[0.3, 0.2], &cfg).unwrap();
        assert_eq!(r.records.len(), 2);
        assert!(r.records.iter().all(|x| x.error.is_some()));
    }
}
