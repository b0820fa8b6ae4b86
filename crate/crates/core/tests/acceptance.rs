//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.

use std::path::{Path as FsPath, PathBuf};
use std::process::{Command, ExitCode, Stdio};
use std::time::{Duration, Instant};

use jumpmlmc::analysis::{complexity_sweep, estimate_orders, OrdersConfig};
use jumpmlmc::coupling::simulate_single;
use jumpmlmc::mlmc::{level_sample, optimal_allocation, theoretical_schedule};
use jumpmlmc::model::preset_with_overrides;
use jumpmlmc::noise::{generate, NoiseGrid};
use jumpmlmc::schemes::{implicit_drift_solve, simulate_path, ImplicitSolveConfig};
use jumpmlmc::{preset, run_adaptive, Error, MlmcConfig, Payoff, Problem, SchemeConfig, SchemeKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn oracle_accuracy() -> Verdict {
    let p = preset("linear_jump_oracle").unwrap();
    let truth = 0.05f64.exp();
    let started = Instant::now();
    let mut hits = 0;
    let mut worst = 0.0f64;
    for seed in 1..=10 {
        let r = run_adaptive(&p, SchemeKind::Ssbe, &Payoff::terminal_identity(), 0.02, &MlmcConfig::new(seed)).unwrap();
        let err = (r.estimate - truth).abs();
        worst = worst.max(err);
        if err <= 0.06 {
            hits += 1;
        }
    }
    let elapsed = started.elapsed();
    verdict(
        hits >= 9 && elapsed <= Duration::from_secs(30),
        format!("{hits}/10 seeds within 0.06 (worst {worst:.4}), {:.1}s", elapsed.as_secs_f64()),
    )
}

fn variance_decay() -> Verdict {
    let p = preset("ginzburg_landau_jump").unwrap();
    let started = Instant::now();
    let cfg = OrdersConfig { window: (3, 8), ..Default::default() };
    let r = estimate_orders(&p, SchemeKind::Ssbe, &"mean_sq".parse().unwrap(), 3..=8, 10_000, 1, &cfg).unwrap();
    let elapsed = started.elapsed();
    let beta = r.beta_hat.unwrap_or(f64::NAN);
    verdict(
        (0.7..=1.4).contains(&beta) && elapsed <= Duration::from_secs(120),
        format!("beta_hat = {beta:.3} (band [0.7, 1.4]), {:.1}s", elapsed.as_secs_f64()),
    )
}

fn complexity() -> Verdict {
    let p = preset("ginzburg_landau_jump").unwrap();
    let mut cfg = MlmcConfig::new(1);
    cfg.initial_samples = 500;
    let started = Instant::now();
    let r = complexity_sweep(&p, SchemeKind::Ssbe, &"mean_sq".parse().unwrap(), &[0.1, 0.05, 0.02], &cfg).unwrap();
    let elapsed = started.elapsed();
    let slope = r.cost_slope.unwrap_or(f64::NAN);
    let costs: Vec<u64> = r.records.iter().map(|x| x.total_cost_steps).collect();
    verdict(
        (1.7..=2.6).contains(&slope) && r.records.iter().all(|x| x.error.is_none()) && elapsed <= Duration::from_secs(300),
        format!("cost slope = {slope:.3} (band [1.7, 2.6]), costs {costs:?}, {:.1}s", elapsed.as_secs_f64()),
    )
}

fn divergence_contrast() -> Verdict {
    let gl = preset("ginzburg_landau_jump").unwrap();
    let cfg = SchemeConfig::default();
    let count = |kind| {
        (0..10_000u64)
            .filter(|&i| matches!(simulate_single(&gl, kind, 2, 7, i, &cfg), Err(e) if e.root().is_explosion()))
            .count()
    };
    let (euler, ssbe) = (count(SchemeKind::Euler), count(SchemeKind::Ssbe));

    let cubic = preset("cubic_additive_jump").unwrap();
    let payoff: Payoff = "mean_sq".parse().unwrap();
    let mut mc = MlmcConfig::new(1);
    mc.l_start = 5;
    mc.l_max = 5;
    let tamed = run_adaptive(&cubic, SchemeKind::TamedEuler, &payoff, 1e-2, &mc).unwrap();
    let split = run_adaptive(&cubic, SchemeKind::Ssbe, &payoff, 1e-2, &mc).unwrap();
    let var_at = |r: &jumpmlmc::MlmcResult, l: u32| r.levels.iter().find(|s| s.level == l).and_then(|s| s.var_diff());
    let mut ratios = Vec::new();
    let mut ordered = true;
    for l in 3..=5 {
        match (var_at(&tamed, l), var_at(&split, l)) {
            (Some(t), Some(s)) => {
                ratios.push(t / s);
                ordered &= t >= s;
            }
            _ => ordered = false,
        }
    }
    let ratios: Vec<String> = ratios.iter().map(|r| format!("{r:.2}")).collect();
    verdict(
        euler >= 1 && ssbe == 0 && ordered,
        format!("GL level 2 explosions euler={euler} ssbe={ssbe}; cubic V_tamed/V_ssbe at l=3..5 = [{}]", ratios.join(", ")),
    )
}

/// Independent reference: plain bisection on the increasing map y - h(2y - y^3) - x.
fn bisect_gl(x: f64, h: f64) -> f64 {
    let g = |y: f64| y - h * (2.0 * y - y * y * y) - x;
    let (mut lo, mut hi) = (-10.0f64, 10.0f64);
    assert!(g(lo) < 0.0 && g(hi) > 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if g(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

fn implicit_solver() -> Verdict {
    let p = preset("ginzburg_landau_jump").unwrap();
    let cfg = ImplicitSolveConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut worst_res, mut worst_gap, mut errors) = (0.0f64, 0.0f64, 0);
    for _ in 0..100_000 {
        let x = rng.gen_range(-5.0..=5.0);
        let h = rng.gen_range(0.0..=0.45);
        match implicit_drift_solve(&p, &[x], h, &cfg) {
            Ok(y) => {
                let y = y[0];
                worst_res = worst_res.max((y - h * (2.0 * y - y * y * y) - x).abs());
                worst_gap = worst_gap.max((y - bisect_gl(x, h)).abs());
            }
            Err(_) => errors += 1,
        }
    }
    let guard = matches!(implicit_drift_solve(&p, &[0.3], 1.0, &cfg), Err(Error::NonContractive { .. }));
    verdict(
        errors == 0 && worst_res <= 1e-12 && worst_gap <= 1e-9 && guard,
        format!("max residual {worst_res:.2e}, max gap to bisection {worst_gap:.2e}, solver errors {errors}, NonContractive at h=1: {guard}"),
    )
}

fn coupling_exactness() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut exact = true;
    for _ in 0..1000 {
        let level = rng.gen_range(1..=10u32);
        let m = rng.gen_range(1..=3usize);
        let n = 1usize << level;
        let dw: Vec<f64> = (0..n * m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let dp: Vec<u32> = (0..n).map(|_| rng.gen_range(0..4)).collect();
        let fine = NoiseGrid::from_increments(level, 0.0, 1.0, 1.0, m, dw, dp).unwrap();
        let coarse = fine.coarsen().unwrap();
        for j in 0..n / 2 {
            for k in 0..m {
                exact &= coarse.dw_step(j)[k] == fine.dw_step(2 * j)[k] + fine.dw_step(2 * j + 1)[k];
            }
            exact &= coarse.dp()[j] == fine.dp()[2 * j] + fine.dp()[2 * j + 1];
        }
        exact &= coarse.h() == 2.0 * fine.h();
    }

    // E[P_l - P_{l-1}] from coupled pairs against independent single-level runs.
    let p = preset("linear_jump_oracle").unwrap();
    let f = Payoff::terminal_identity();
    let cfg = SchemeConfig::default();
    let n = 100_000u64;
    let moments = |xs: &mut dyn Iterator<Item = f64>| {
        let (mut s, mut s2) = (0.0, 0.0);
        for x in xs {
            s += x;
            s2 += x * x;
        }
        let mean = s / n as f64;
        (mean, (s2 / n as f64 - mean * mean) / n as f64)
    };
    let single = |level: u32, seed: u64| {
        moments(&mut (0..n).map(|i| level_sample(&p, SchemeKind::Ssbe, &f, level, true, seed, i, &cfg).unwrap().0))
    };
    let mut worst_z = 0.0f64;
    for l in 1..=3u32 {
        let (d, vd) = moments(&mut (0..n).map(|i| level_sample(&p, SchemeKind::Ssbe, &f, l, false, 11, i, &cfg).unwrap().1));
        let (a, va) = single(l, 12 + l as u64);
        let (b, vb) = single(l - 1, 22 + l as u64);
        worst_z = worst_z.max((d - (a - b)).abs() / (vd + va + vb).sqrt());
    }
    verdict(
        exact && worst_z <= 4.0,
        format!("pairwise identity bit-exact on 1000 grids: {exact}; telescoping worst |z| = {worst_z:.2} (limit 4)"),
    )
}

fn allocation() -> Verdict {
    let hand = optimal_allocation(&[4.0, 1.0], &[1.0, 0.5], 0.1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut budget_ok = true;
    for _ in 0..1000 {
        let levels = rng.gen_range(1..=8usize);
        let v: Vec<f64> = (0..levels).map(|_| 10f64.powf(rng.gen_range(-6.0..1.0))).collect();
        let h: Vec<f64> = (0..levels).map(|l| 0.5f64.powi(l as i32)).collect();
        let eps = rng.gen_range(0.005..0.5);
        let m = optimal_allocation(&v, &h, eps).unwrap();
        let spent: f64 = v.iter().zip(&m).map(|(v, m)| v / *m as f64).sum();
        budget_ok &= spent <= eps * eps / 2.0 * (1.0 + 1e-12);
    }
    let s = theoretical_schedule(1.0 / 3.0, 1.0).unwrap();
    verdict(
        hand == [1366, 483] && budget_ok && s.max_level == 7 && s.samples[0] == 81,
        format!("hand case {hand:?}; budget held on 1000 draws: {budget_ok}; schedule(1/3) L={} M_0={}", s.max_level, s.samples[0]),
    )
}

fn run_estimate(out: &FsPath, threads: &str) -> bool {
    Command::new(env!("CARGO_BIN_EXE_jumpmlmc"))
        .args(["--threads", threads, "estimate", "--preset", "ginzburg_landau_jump", "--scheme", "ssbe"])
        .args(["--payoff", "mean_sq", "--eps", "0.1", "--seed", "42", "--out"])
        .arg(out)
        .stdout(Stdio::null())
        .status()
        .map(|s| s.code() == Some(0))
        .unwrap_or(false)
}

fn summary_without_wall_time(path: &FsPath) -> Vec<Vec<String>> {
    let text = std::fs::read_to_string(path).unwrap_or_default();
    text.lines()
        .map(|line| line.split(',').enumerate().filter(|(i, _)| *i != 6).map(|(_, c)| c.to_string()).collect())
        .collect()
}

fn determinism() -> Verdict {
    let root: PathBuf = std::env::temp_dir().join(format!("jumpmlmc-acceptance-{}", std::process::id()));
    let (one, eight) = (root.join("t1"), root.join("t8"));
    let ran = run_estimate(&one, "1") && run_estimate(&eight, "8");
    let levels_equal = ran && std::fs::read(one.join("levels.csv")).ok() == std::fs::read(eight.join("levels.csv")).ok();
    let summary_equal = ran && summary_without_wall_time(&one.join("summary.csv")) == summary_without_wall_time(&eight.join("summary.csv"));
    std::fs::remove_dir_all(&root).ok();
    verdict(
        ran && levels_equal && summary_equal,
        format!("runs ok: {ran}; levels.csv identical: {levels_equal}; summary.csv identical except wall time: {summary_equal}"),
    )
}

fn degeneracies() -> Verdict {
    let cfg = SchemeConfig::default();
    let driftless = Problem::scalar(|_| 0.0, |x| 0.3 * x, |x| 0.5 * x).x0(vec![1.0]).intensity(2.0).build().unwrap();
    let mut identical = true;
    for seed in 0..20 {
        let grid = generate(seed, seed * 3, &driftless, 6).unwrap();
        let reference = simulate_path(&driftless, SchemeKind::Euler, &grid, &cfg).unwrap();
        for kind in SchemeKind::ALL {
            identical &= simulate_path(&driftless, kind, &grid, &cfg).unwrap().raw() == reference.raw();
        }
    }

    let zero = [("lambda".to_string(), 0.0)];
    let with_jumps = preset_with_overrides("ginzburg_landau_jump", &zero).unwrap();
    let pure = ginzburg_landau_without_jumps();
    let mut reduced = true;
    for seed in 0..20 {
        let a = generate(seed, 0, &with_jumps, 6).unwrap();
        reduced &= a.dp().iter().all(|&k| k == 0) && (0..a.n_steps()).all(|n| a.compensated_jump(n) == 0.0);
        let b = generate(seed, 0, &pure, 6).unwrap();
        for kind in SchemeKind::ALL {
            let x = simulate_path(&with_jumps, kind, &a, &cfg).map(|p| p.raw().to_vec());
            let y = simulate_path(&pure, kind, &b, &cfg).map(|p| p.raw().to_vec());
            reduced &= format!("{x:?}") == format!("{y:?}");
        }
    }
    let f: Payoff = "mean_sq".parse().unwrap();
    let mut mc = MlmcConfig::new(3);
    mc.initial_samples = 2000;
    let r1 = run_adaptive(&with_jumps, SchemeKind::Ssbe, &f, 0.1, &mc).unwrap();
    let r2 = run_adaptive(&pure, SchemeKind::Ssbe, &f, 0.1, &mc).unwrap();
    let runs_equal = r1.estimate == r2.estimate && r1.total_cost_steps == r2.total_cost_steps;
    verdict(
        identical && reduced && runs_equal,
        format!("mu=0 schemes identical: {identical}; lambda=0 paths equal pure diffusion: {reduced}; MLMC runs equal: {runs_equal}"),
    )
}

fn ginzburg_landau_without_jumps() -> Problem {
    Problem::scalar(|x| 2.0 * x - x * x * x, |x| 2.0 * x, |_| 0.0)
        .drift_derivative(|x| 2.0 - 3.0 * x * x)
        .x0(vec![1.0])
        .intensity(0.0)
        .one_sided_lipschitz(2.0)
        .build()
        .unwrap()
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Verdict); 9] = [
        ("oracle accuracy", oracle_accuracy),
        ("variance decay", variance_decay),
        ("complexity order", complexity),
        ("divergence contrast", divergence_contrast),
        ("implicit solver", implicit_solver),
        ("coupling exactness", coupling_exactness),
        ("allocation formulas", allocation),
        ("determinism", determinism),
        ("scheme degeneracies", degeneracies),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let v = check();
        println!("[{}] {} {name}: {}", if v.pass { "PASS" } else { "FAIL" }, i + 1, v.detail);
        if !v.pass {
            failed += 1;
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
