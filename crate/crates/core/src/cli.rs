//! Command-line front end and CSV reports.
//!
//! Configuration comes from flags and, optionally, a `key=value` file given by
//! `--config`; flags win. Every command needs an explicit seed.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path as FsPath, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::analysis::{complexity_sweep, estimate_orders, fit_orders, OrdersConfig, DEFAULT_WINDOW};
use crate::error::{Error, Result};
use crate::mlmc::{run_adaptive, run_fixed_schedule, theoretical_schedule, MlmcConfig, MlmcResult};
use crate::model::{preset_with_overrides, Problem, PRESET_NAMES};
use crate::payoff::Payoff;
use crate::schemes::{SchemeConfig, SchemeKind};

pub const LEVELS_HEADER: [&str; 8] =
    ["level", "M", "mean_diff", "var_diff", "mean_fine", "var_fine", "cost_steps", "failures"];
pub const SUMMARY_HEADER: [&str; 8] =
    ["estimate", "eps", "L_final", "total_cost", "variance", "bias_estimate", "wall_time_s", "seed"];
pub const ORDERS_HEADER: [&str; 8] =
    ["level", "samples", "mean_diff", "var_diff", "log2_abs_mean", "log2_var", "failures", "error"];
pub const ORDERS_FIT_HEADER: [&str; 6] = ["scheme", "payoff", "window_lo", "window_hi", "alpha_hat", "beta_hat"];
pub const SWEEP_HEADER: [&str; 8] =
    ["scheme", "eps", "total_cost", "L_final", "estimate", "converged", "wall_time_s", "error"];
pub const SWEEP_FIT_HEADER: [&str; 2] = ["scheme", "cost_slope"];
pub const COMPARE_SUMMARY_HEADER: [&str; 9] = [
    "scheme",
    "estimate",
    "L_final",
    "total_cost",
    "variance",
    "converged",
    "failures",
    "wall_time_s",
    "error",
];

/// Schemes run side by side by `compare`.
pub const COMPARE_SCHEMES: [SchemeKind; 3] = [SchemeKind::Ssbe, SchemeKind::Be, SchemeKind::TamedEuler];

#[derive(Debug, Parser)]
#[command(name = "jumpmlmc", version, about = "Multilevel Monte Carlo for jump-diffusion SDEs")]
pub struct Cli {
    /// Worker threads (output does not depend on this).
    #[arg(long, global = true, env = "MLMC_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one MLMC estimation and write levels.csv and summary.csv.
    Estimate(CommonArgs),
    /// Measure per-level mean and variance decay and fit their rates.
    Orders(OrdersArgs),
    /// Adaptive runs over a list of tolerances; cost against 1/eps.
    Sweep(SweepArgs),
    /// Run ssbe, be and tamed on identical seeds.
    Compare(CommonArgs),
    /// List the built-in problems.
    Presets,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// key=value file; flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub scheme: Option<String>,
    #[arg(long)]
    pub payoff: Option<String>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub l_start: Option<u32>,
    #[arg(long)]
    pub l_max: Option<u32>,
    #[arg(long)]
    pub initial_samples: Option<u64>,
    #[arg(long)]
    pub max_samples: Option<u64>,
    /// Assumed weak order in the bias test.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// adaptive | theoretical
    #[arg(long)]
    pub mode: Option<String>,
    /// Output directory for CSV files.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Preset parameter overrides, e.g. `a=0,b=0,k=0`.
    #[arg(long = "override", value_delimiter = ',')]
    pub overrides: Vec<String>,
    /// Magnitude beyond which an explicit path counts as exploded.
    #[arg(long)]
    pub explosion_bound: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct OrdersArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub level_min: Option<u32>,
    #[arg(long)]
    pub level_max: Option<u32>,
    /// Coupled samples per level.
    #[arg(long)]
    pub samples: Option<u64>,
    #[arg(long)]
    pub window_lo: Option<u32>,
    #[arg(long)]
    pub window_hi: Option<u32>,
    /// Fit synthetic geometric data instead of simulating.
    #[arg(long)]
    pub self_test: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Descending tolerances, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub eps_list: Vec<f64>,
    /// Schemes to sweep; defaults to --scheme.
    #[arg(long, value_delimiter = ',')]
    pub schemes: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Adaptive,
    Theoretical,
}

/// Fully validated run settings.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub preset: String,
    pub overrides: Vec<(String, f64)>,
    pub problem: Problem,
    pub scheme: SchemeKind,
    pub payoff: Payoff,
    pub eps: Option<f64>,
    pub seed: u64,
    pub l_start: u32,
    pub l_max: u32,
    pub initial_samples: u64,
    pub max_samples: u64,
    pub alpha: f64,
    pub mode: Mode,
    pub out: PathBuf,
    pub threads: Option<usize>,
    pub explosion_bound: f64,
}

impl RunConfig {
    pub fn mlmc(&self) -> MlmcConfig {
        let mut cfg = MlmcConfig::new(self.seed);
        cfg.l_start = self.l_start;
        cfg.l_max = self.l_max;
        cfg.initial_samples = self.initial_samples;
        cfg.max_samples_per_level = self.max_samples;
        cfg.alpha = self.alpha;
        cfg.threads = self.threads;
        cfg.scheme = self.scheme_config();
        cfg
    }

    pub fn scheme_config(&self) -> SchemeConfig {
        SchemeConfig { explosion_bound: self.explosion_bound, ..SchemeConfig::default() }
    }

    fn require_eps(&self) -> Result<f64> {
        self.eps.ok_or_else(|| Error::InvalidArgument("missing --eps".into()))
    }
}

/// Parses a `key=value` file; `#` starts a comment.
pub fn parse_config_file(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::InvalidArgument(format!("config line {}: expected key=value", n + 1)))?;
        let key = k.trim().replace('-', "_");
        if key == "override" {
            let entry: &mut String = map.entry(key).or_default();
            if !entry.is_empty() {
                entry.push(',');
            }
            entry.push_str(v.trim());
        } else {
            map.insert(key, v.trim().to_string());
        }
    }
    Ok(map)
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::InvalidArgument(format!("invalid value `{value}` for {key}")))
}

fn parse_overrides(items: &[String]) -> Result<Vec<(String, f64)>> {
    items
        .iter()
        .flat_map(|s| s.split(','))
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| Error::InvalidArgument(format!("override `{item}` is not key=value")))?;
            Ok((k.trim().to_string(), parse_value(k, v.trim())?))
        })
        .collect()
}

const CONFIG_KEYS: [&str; 15] = [
    "preset",
    "scheme",
    "payoff",
    "eps",
    "seed",
    "l_start",
    "l_max",
    "initial_samples",
    "max_samples",
    "alpha",
    "mode",
    "out",
    "override",
    "explosion_bound",
    "threads",
];

impl CommonArgs {
    /// Merges the optional config file under the flags and validates everything.
    pub fn resolve(&self, threads: Option<usize>) -> Result<RunConfig> {
        let file = match &self.config {
            Some(path) => parse_config_file(&fs::read_to_string(path)?)?,
            None => BTreeMap::new(),
        };
        if let Some(bad) = file.keys().find(|k| !CONFIG_KEYS.contains(&k.as_str())) {
            return Err(Error::InvalidArgument(format!("unknown config key `{bad}`")));
        }
        let get = |key: &str| file.get(key).map(String::as_str);
        fn pick<T: std::str::FromStr>(flag: Option<T>, file: Option<&str>, key: &str) -> Result<Option<T>> {
            match (flag, file) {
                (Some(v), _) => Ok(Some(v)),
                (None, Some(s)) => parse_value(key, s).map(Some),
                (None, None) => Ok(None),
            }
        }

        let preset = pick(self.preset.clone(), get("preset"), "preset")?
            .ok_or_else(|| Error::InvalidArgument(format!("missing --preset (one of {})", PRESET_NAMES.join(", "))))?;
        let seed: u64 = pick(self.seed, get("seed"), "seed")?
            .ok_or_else(|| Error::InvalidArgument("missing --seed; runs are never seeded from the clock".into()))?;
        let mut override_items: Vec<String> = get("override").map(|s| vec![s.to_string()]).unwrap_or_default();
        override_items.extend(self.overrides.iter().cloned());
        let overrides = parse_overrides(&override_items)?;
        let problem = preset_with_overrides(&preset, &overrides)?;
        let scheme: SchemeKind = pick(self.scheme.clone(), get("scheme"), "scheme")?.unwrap_or_else(|| "ssbe".into()).parse()?;
        let payoff: Payoff = pick(self.payoff.clone(), get("payoff"), "payoff")?.unwrap_or_else(|| "mean_sq".into()).parse()?;
        let eps: Option<f64> = pick(self.eps, get("eps"), "eps")?;
        if let Some(e) = eps {
            if !(e > 0.0 && e.is_finite()) {
                return Err(Error::InvalidArgument("eps must be > 0".into()));
            }
        }
        let l_start = pick(self.l_start, get("l_start"), "l_start")?.unwrap_or(2);
        let l_max = pick(self.l_max, get("l_max"), "l_max")?.unwrap_or(10);
        if l_start > l_max || l_max > crate::noise::MAX_LEVEL {
            return Err(Error::InvalidArgument(format!("need l_start <= l_max <= 30, got {l_start}, {l_max}")));
        }
        let initial_samples = pick(self.initial_samples, get("initial_samples"), "initial_samples")?.unwrap_or(10_000);
        let max_samples = pick(self.max_samples, get("max_samples"), "max_samples")?.unwrap_or(1_000_000);
        if initial_samples < 2 || max_samples < initial_samples {
            return Err(Error::InvalidArgument("need 2 <= initial_samples <= max_samples".into()));
        }
        let alpha = pick(self.alpha, get("alpha"), "alpha")?.unwrap_or(1.0);
        if !(alpha > 0.0) {
            return Err(Error::InvalidArgument("alpha must be > 0".into()));
        }
        let mode = match pick(self.mode.clone(), get("mode"), "mode")?.as_deref().unwrap_or("adaptive") {
            "adaptive" => Mode::Adaptive,
            "theoretical" => Mode::Theoretical,
            other => return Err(Error::InvalidArgument(format!("unknown mode `{other}` (adaptive, theoretical)"))),
        };
        let out = pick(self.out.clone(), get("out"), "out")?.unwrap_or_else(|| PathBuf::from("."));
        let threads = match threads {
            Some(t) => Some(t),
            None => get("threads").map(|s| parse_value("threads", s)).transpose()?,
        };
        if threads == Some(0) {
            return Err(Error::InvalidArgument("threads must be >= 1".into()));
        }
        let explosion_bound =
            pick(self.explosion_bound, get("explosion_bound"), "explosion_bound")?.unwrap_or(SchemeConfig::default().explosion_bound);
        if !(explosion_bound > 0.0) {
            return Err(Error::InvalidArgument("explosion_bound must be > 0".into()));
        }
        Ok(RunConfig {
            preset,
            overrides,
            problem,
            scheme,
            payoff,
            eps,
            seed,
            l_start,
            l_max,
            initial_samples,
            max_samples,
            alpha,
            mode,
            out,
            threads,
            explosion_bound,
        })
    }
}

/// Outcome of a successful command; maps to the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    NotConverged,
}

impl Outcome {
    pub fn exit_code(self) -> u8 {
        match self {
            Outcome::Success => 0,
            Outcome::NotConverged => 2,
        }
    }
}

pub fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Estimate(args) => cmd_estimate(&args.resolve(cli.threads)?),
        Command::Orders(args) => cmd_orders(&args, cli.threads),
        Command::Sweep(args) => cmd_sweep(&args, cli.threads),
        Command::Compare(args) => cmd_compare(&args.resolve(cli.threads)?),
        Command::Presets => {
            print!("{}", presets_table()?);
            Ok(Outcome::Success)
        }
    }
}

fn fmt_f(v: f64) -> String {
    format!("{v}")
}

fn writer(dir: &FsPath, name: &str) -> Result<csv::Writer<fs::File>> {
    fs::create_dir_all(dir)?;
    Ok(csv::Writer::from_path(dir.join(name))?)
}

pub fn write_levels_csv(path: &FsPath, result: &MlmcResult) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(LEVELS_HEADER)?;
    for s in &result.levels {
        w.write_record([
            s.level.to_string(),
            s.n_samples.to_string(),
            fmt_f(s.mean_diff()),
            fmt_f(s.var_diff().unwrap_or(f64::NAN)),
            fmt_f(s.mean_fine()),
            fmt_f(s.var_fine().unwrap_or(f64::NAN)),
            s.cost_steps.to_string(),
            s.n_failures.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_csv(path: &FsPath, result: &MlmcResult, eps: f64, seed: u64) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(SUMMARY_HEADER)?;
    w.write_record([
        fmt_f(result.estimate),
        fmt_f(eps),
        result.l_final.to_string(),
        result.total_cost_steps.to_string(),
        fmt_f(result.variance_of_estimator),
        fmt_f(result.bias_estimate),
        fmt_f(result.wall_time.as_secs_f64()),
        seed.to_string(),
    ])?;
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelRow {
    pub level: u32,
    pub m: u64,
    pub mean_diff: f64,
    pub var_diff: f64,
    pub mean_fine: f64,
    pub var_fine: f64,
    pub cost_steps: u64,
    pub failures: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub estimate: f64,
    pub eps: f64,
    pub l_final: u32,
    pub total_cost: u64,
    pub variance: f64,
    pub bias_estimate: f64,
    pub wall_time_s: f64,
    pub seed: u64,
}

/// Reads any CSV this tool writes: header plus string rows. Fails if the
/// header differs from `expected`.
pub fn read_table(path: &FsPath, expected: &[&str]) -> Result<Vec<Vec<String>>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != expected {
        return Err(Error::Csv(format!("{}: unexpected header {header:?}", path.display())));
    }
    r.records()
        .map(|rec| Ok(rec?.iter().map(str::to_string).collect()))
        .collect()
}

pub fn read_levels_csv(path: &FsPath) -> Result<Vec<LevelRow>> {
    read_table(path, &LEVELS_HEADER)?
        .into_iter()
        .map(|r| {
            Ok(LevelRow {
                level: parse_value("level", &r[0])?,
                m: parse_value("M", &r[1])?,
                mean_diff: parse_value("mean_diff", &r[2])?,
                var_diff: parse_value("var_diff", &r[3])?,
                mean_fine: parse_value("mean_fine", &r[4])?,
                var_fine: parse_value("var_fine", &r[5])?,
                cost_steps: parse_value("cost_steps", &r[6])?,
                failures: parse_value("failures", &r[7])?,
            })
        })
        .collect()
}

pub fn read_summary_csv(path: &FsPath) -> Result<SummaryRow> {
    let rows = read_table(path, &SUMMARY_HEADER)?;
    let r = rows.first().ok_or_else(|| Error::Csv("summary has no data row".into()))?;
    Ok(SummaryRow {
        estimate: parse_value("estimate", &r[0])?,
        eps: parse_value("eps", &r[1])?,
        l_final: parse_value("L_final", &r[2])?,
        total_cost: parse_value("total_cost", &r[3])?,
        variance: parse_value("variance", &r[4])?,
        bias_estimate: parse_value("bias_estimate", &r[5])?,
        wall_time_s: parse_value("wall_time_s", &r[6])?,
        seed: parse_value("seed", &r[7])?,
    })
}

fn run_single(cfg: &RunConfig, scheme: SchemeKind) -> Result<MlmcResult> {
    let eps = cfg.require_eps()?;
    match cfg.mode {
        Mode::Adaptive => run_adaptive(&cfg.problem, scheme, &cfg.payoff, eps, &cfg.mlmc()),
        Mode::Theoretical => {
            let schedule = theoretical_schedule(eps, cfg.problem.horizon())?;
            run_fixed_schedule(&cfg.problem, scheme, &cfg.payoff, &schedule, cfg.seed, cfg.threads, &cfg.scheme_config())
        }
    }
}

pub fn cmd_estimate(cfg: &RunConfig) -> Result<Outcome> {
    let eps = cfg.require_eps()?;
    let result = run_single(cfg, cfg.scheme)?;
    fs::create_dir_all(&cfg.out)?;
    write_levels_csv(&cfg.out.join("levels.csv"), &result)?;
    write_summary_csv(&cfg.out.join("summary.csv"), &result, eps, cfg.seed)?;
    println!("{}", result.estimate);
    let failures = result.total_failures();
    if failures > 0 {
        eprintln!("warning: {failures} exploded paths excluded");
    }
    if result.converged {
        Ok(Outcome::Success)
    } else {
        eprintln!(
            "warning: target not met at L = {} (bias estimate {}, estimator variance {})",
            result.l_final, result.bias_estimate, result.variance_of_estimator
        );
        Ok(Outcome::NotConverged)
    }
}

pub fn cmd_orders(args: &OrdersArgs, threads: Option<usize>) -> Result<Outcome> {
    let window = (args.window_lo.unwrap_or(DEFAULT_WINDOW.0), args.window_hi.unwrap_or(DEFAULT_WINDOW.1));
    if args.self_test {
        let out = args.common.out.clone().unwrap_or_else(|| PathBuf::from("."));
        let levels = [1u32, 2, 3];
        let means = [0.5, 0.25, 0.125];
        let vars = [0.25, 0.0625, 0.015625];
        let (alpha, beta) = fit_orders(&levels, &means, &vars, (1, 3));
        let mut w = writer(&out, "orders.csv")?;
        w.write_record(ORDERS_HEADER)?;
        for i in 0..3 {
            w.write_record([
                levels[i].to_string(),
                "0".into(),
                fmt_f(means[i]),
                fmt_f(vars[i]),
                fmt_f(means[i].log2()),
                fmt_f(vars[i].log2()),
                "0".into(),
                String::new(),
            ])?;
        }
        w.flush()?;
        write_orders_fit(&out, "synthetic", "synthetic", (1, 3), alpha, beta)?;
        println!("alpha_hat={} beta_hat={}", fmt_opt(alpha), fmt_opt(beta));
        return Ok(Outcome::Success);
    }
    let cfg = args.common.resolve(threads)?;
    let lo = args.level_min.unwrap_or(window.0);
    let hi = args.level_max.unwrap_or(window.1);
    let samples = args.samples.unwrap_or(cfg.initial_samples);
    let orders_cfg = OrdersConfig { window, threads: cfg.threads, scheme: cfg.scheme_config() };
    let report = estimate_orders(&cfg.problem, cfg.scheme, &cfg.payoff, lo..=hi, samples, cfg.seed, &orders_cfg)?;
    let mut w = writer(&cfg.out, "orders.csv")?;
    w.write_record(ORDERS_HEADER)?;
    for e in &report.levels {
        w.write_record([
            e.level.to_string(),
            e.samples.to_string(),
            fmt_f(e.mean_diff),
            fmt_f(e.var_diff),
            fmt_f(e.log2_abs_mean()),
            fmt_f(e.log2_var()),
            e.failures.to_string(),
            e.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    write_orders_fit(&cfg.out, cfg.scheme.id(), cfg.payoff.id(), window, report.alpha_hat, report.beta_hat)?;
    println!("alpha_hat={} beta_hat={}", fmt_opt(report.alpha_hat), fmt_opt(report.beta_hat));
    Ok(Outcome::Success)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f).unwrap_or_default()
}

fn write_orders_fit(out: &FsPath, scheme: &str, payoff: &str, window: (u32, u32), alpha: Option<f64>, beta: Option<f64>) -> Result<()> {
    let mut w = writer(out, "orders_fit.csv")?;
    w.write_record(ORDERS_FIT_HEADER)?;
    w.write_record([scheme.to_string(), payoff.to_string(), window.0.to_string(), window.1.to_string(), fmt_opt(alpha), fmt_opt(beta)])?;
    w.flush()?;
    Ok(())
}

pub fn cmd_sweep(args: &SweepArgs, threads: Option<usize>) -> Result<Outcome> {
    let cfg = args.common.resolve(threads)?;
    if args.eps_list.is_empty() {
        return Err(Error::InvalidArgument("missing --eps-list".into()));
    }
    let schemes: Vec<SchemeKind> = if args.schemes.is_empty() {
        vec![cfg.scheme]
    } else {
        args.schemes.iter().map(|s| s.parse()).collect::<Result<_>>()?
    };
    let mut w = writer(&cfg.out, "sweep.csv")?;
    w.write_record(SWEEP_HEADER)?;
    let mut fit = writer(&cfg.out, "sweep_fit.csv")?;
    fit.write_record(SWEEP_FIT_HEADER)?;
    for scheme in schemes {
        let report = complexity_sweep(&cfg.problem, scheme, &cfg.payoff, &args.eps_list, &cfg.mlmc())?;
        for r in &report.records {
            w.write_record([
                scheme.id().to_string(),
                fmt_f(r.eps),
                r.total_cost_steps.to_string(),
                r.l_final.to_string(),
                fmt_f(r.estimate),
                r.converged.to_string(),
                fmt_f(r.wall_time.as_secs_f64()),
                r.error.clone().unwrap_or_default(),
            ])?;
        }
        fit.write_record([scheme.id().to_string(), fmt_opt(report.cost_slope)])?;
        println!("{scheme}: cost_slope={}", fmt_opt(report.cost_slope));
    }
    w.flush()?;
    fit.flush()?;
    Ok(Outcome::Success)
}

pub fn cmd_compare(cfg: &RunConfig) -> Result<Outcome> {
    cfg.require_eps()?;
    let results: Vec<(SchemeKind, Result<MlmcResult>)> =
        COMPARE_SCHEMES.iter().map(|&s| (s, run_single(cfg, s))).collect();

    let mut w = writer(&cfg.out, "compare_summary.csv")?;
    w.write_record(COMPARE_SUMMARY_HEADER)?;
    for (scheme, r) in &results {
        let row = match r {
            Ok(r) => [
                scheme.id().to_string(),
                fmt_f(r.estimate),
                r.l_final.to_string(),
                r.total_cost_steps.to_string(),
                fmt_f(r.variance_of_estimator),
                r.converged.to_string(),
                r.total_failures().to_string(),
                fmt_f(r.wall_time.as_secs_f64()),
                String::new(),
            ],
            Err(e) => [
                scheme.id().to_string(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                "false".into(),
                String::new(),
                String::new(),
                e.to_string(),
            ],
        };
        w.write_record(row)?;
    }
    w.flush()?;

    let mut header = vec!["level".to_string()];
    for s in COMPARE_SCHEMES {
        for col in ["M", "var_diff", "cost_steps"] {
            header.push(format!("{}_{col}", s.id()));
        }
    }
    let top = results.iter().filter_map(|(_, r)| r.as_ref().ok()).map(|r| r.l_final).max().unwrap_or(0);
    let mut w = writer(&cfg.out, "compare_levels.csv")?;
    w.write_record(&header)?;
    for level in 0..=top {
        let mut row = vec![level.to_string()];
        for (_, r) in &results {
            match r.as_ref().ok().and_then(|r| r.levels.iter().find(|s| s.level == level)) {
                Some(s) => {
                    row.push(s.n_samples.to_string());
                    row.push(fmt_f(s.var_diff().unwrap_or(f64::NAN)));
                    row.push(s.cost_steps.to_string());
                }
                None => row.extend([String::new(), String::new(), String::new()]),
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    for (scheme, r) in &results {
        match r {
            Ok(r) => println!("{scheme}: estimate={} L_final={} total_cost={}", r.estimate, r.l_final, r.total_cost_steps),
            Err(e) => println!("{scheme}: error: {e}"),
        }
    }
    Ok(Outcome::Success)
}

pub fn presets_table() -> Result<String> {
    let mut out = String::from("name\tdrift\tdiffusion\tjump\tlambda\tx0\tinterval\tc\n");
    let formulas = [
        ("ginzburg_landau_jump", "2x - x^3", "2x", "x"),
        ("cubic_additive_jump", "x - x^3", "1", "x"),
        ("linear_jump_oracle", "a x (a=0.05)", "b x (b=0.2)", "k x (k=0.1)"),
    ];
    for (name, mu, sigma, nu) in formulas {
        let p = crate::model::preset(name)?;
        out.push_str(&format!(
            "{name}\t{mu}\t{sigma}\t{nu}\t{}\t{}\t[{}, {}]\t{}\n",
            p.intensity(),
            p.x0()[0],
            p.t0(),
            p.t_end(),
            p.one_sided_lipschitz()
        ));
    }
    Ok(out)
}
