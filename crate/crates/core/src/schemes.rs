//! One-step integrators and path simulation.
//!
//! All schemes use the compensated jump increment `dN~ = dP - lambda h`:
//!
//! ```text
//! Euler       y + mu(y) h + sigma(y) dW + nu(y) dN~
//! TamedEuler  y + mu(y) h / (1 + h |mu(y)|) + sigma(y) dW + nu(y) dN~
//! SSBE        z = F_h(y);  z + sigma(z) dW + nu(z) dN~
//! BE          F_h(y + sigma(y) dW + nu(y) dN~)
//! ```
//!
//! where `F_h(x)` is the unique `y` with `y - h mu(y) = x`, which exists when
//! `h c < 1` for the one-sided Lipschitz constant `c` of the drift.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::Problem;
use crate::noise::NoiseGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchemeKind {
    Euler,
    TamedEuler,
    Ssbe,
    Be,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 4] = [SchemeKind::Euler, SchemeKind::TamedEuler, SchemeKind::Ssbe, SchemeKind::Be];

    pub fn is_implicit(self) -> bool {
        matches!(self, SchemeKind::Ssbe | SchemeKind::Be)
    }

    pub fn id(self) -> &'static str {
        match self {
            SchemeKind::Euler => "euler",
            SchemeKind::TamedEuler => "tamed",
            SchemeKind::Ssbe => "ssbe",
            SchemeKind::Be => "be",
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "euler" => Ok(SchemeKind::Euler),
            "tamed" | "tamed_euler" | "tamedeuler" => Ok(SchemeKind::TamedEuler),
            "ssbe" => Ok(SchemeKind::Ssbe),
            "be" | "backward_euler" => Ok(SchemeKind::Be),
            other => Err(Error::InvalidArgument(format!(
                "unknown scheme `{other}` (valid: euler, tamed, ssbe, be)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImplicitSolveConfig {
    pub tol: f64,
    pub max_newton_iters: usize,
    pub max_bisection_iters: usize,
    pub bracket_expansion: f64,
    /// Overrides the problem's one-sided Lipschitz constant in the `h c < 1` guard.
    pub declared_c: Option<f64>,
}

impl Default for ImplicitSolveConfig {
    fn default() -> Self {
        ImplicitSolveConfig {
            tol: 1e-12,
            max_newton_iters: 50,
            max_bisection_iters: 200,
            bracket_expansion: 2.0,
            declared_c: None,
        }
    }
}

impl ImplicitSolveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument("solver tol must be > 0".into()));
        }
        if self.max_newton_iters == 0 || self.max_bisection_iters == 0 {
            return Err(Error::InvalidArgument("solver iteration counts must be >= 1".into()));
        }
        if !(self.bracket_expansion > 0.0) {
            return Err(Error::InvalidArgument("bracket expansion must be > 0".into()));
        }
        Ok(())
    }
}

/// Solver settings plus the magnitude beyond which a state counts as exploded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeConfig {
    pub solver: ImplicitSolveConfig,
    pub explosion_bound: f64,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        SchemeConfig { solver: ImplicitSolveConfig::default(), explosion_bound: 1e8 }
    }
}

/// Checks `h c < 1` for the drift's one-sided Lipschitz constant.
pub fn check_contractive(problem: &Problem, h: f64, cfg: &ImplicitSolveConfig) -> Result<()> {
    let c = cfg.declared_c.unwrap_or(problem.one_sided_lipschitz());
    if h * c >= 1.0 {
        Err(Error::NonContractive { h, c })
    } else {
        Ok(())
    }
}

/// Solves `y - h mu(y) = x`.
pub fn implicit_drift_solve(problem: &Problem, x: &[f64], h: f64, cfg: &ImplicitSolveConfig) -> Result<Vec<f64>> {
    let mut ws = Workspace::new(problem);
    let mut y = vec![0.0; problem.dim()];
    ws.solve_implicit(problem, x, h, cfg, &mut y)?;
    Ok(y)
}

/// Applies one step of `kind` from `y`.
pub fn step(
    problem: &Problem,
    kind: SchemeKind,
    y: &[f64],
    h: f64,
    dw: &[f64],
    dp: u32,
    cfg: &SchemeConfig,
) -> Result<Vec<f64>> {
    let mut ws = Workspace::new(problem);
    let mut out = vec![0.0; problem.dim()];
    ws.step(problem, kind, y, h, dw, dp, cfg, &mut out)?;
    Ok(out)
}

/// States on a uniform grid, `path[0] = x0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    dim: usize,
    t0: f64,
    h: f64,
    states: Vec<f64>,
}

impl Path {
    pub fn new(dim: usize, t0: f64, h: f64, states: Vec<f64>) -> Self {
        assert!(dim > 0 && states.len() % dim == 0);
        Path { dim, t0, h, states }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.states.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn n_steps(&self) -> usize {
        self.len().saturating_sub(1)
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn terminal(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    pub fn states(&self) -> impl Iterator<Item = &[f64]> {
        self.states.chunks_exact(self.dim)
    }

    pub fn raw(&self) -> &[f64] {
        &self.states
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.t0 + i as f64 * self.h).collect()
    }
}

/// Iterates `step` across `grid`, starting from the problem's `x0`.
pub fn simulate_path(problem: &Problem, kind: SchemeKind, grid: &NoiseGrid, cfg: &SchemeConfig) -> Result<Path> {
    let n = grid.n_steps();
    let span = grid.h() * n as f64;
    if (span - problem.horizon()).abs() > 4.0 * f64::EPSILON * problem.horizon().abs().max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "grid spans {span} but problem horizon is {}",
            problem.horizon()
        )));
    }
    if grid.brownian_dim() != problem.brownian_dim() {
        return Err(Error::InvalidArgument("grid Brownian dimension does not match problem".into()));
    }
    let d = problem.dim();
    let mut ws = Workspace::new(problem);
    let mut states = vec![0.0; (n + 1) * d];
    states[..d].copy_from_slice(problem.x0());
    for i in 0..n {
        let (done, rest) = states.split_at_mut((i + 1) * d);
        let y = &done[i * d..];
        ws.step(problem, kind, y, grid.h(), grid.dw_step(i), grid.dp()[i], cfg, &mut rest[..d])
            .map_err(|e| Error::AtStep { step: i, source: Box::new(e) })?;
    }
    Ok(Path::new(d, grid.t0(), grid.h(), states))
}

/// Scratch buffers reused across steps of one path.
struct Workspace {
    d: usize,
    m: usize,
    drift: Vec<f64>,
    diffusion: Vec<f64>,
    jump: Vec<f64>,
    target: Vec<f64>,
    jac: Vec<f64>,
    g: Vec<f64>,
    trial: Vec<f64>,
    trial_g: Vec<f64>,
    fd: Vec<f64>,
}

impl Workspace {
    fn new(problem: &Problem) -> Self {
        let d = problem.dim();
        let m = problem.brownian_dim();
        Workspace {
            d,
            m,
            drift: vec![0.0; d],
            diffusion: vec![0.0; d * m],
            jump: vec![0.0; d],
            target: vec![0.0; d],
            jac: vec![0.0; d * d],
            g: vec![0.0; d],
            trial: vec![0.0; d],
            trial_g: vec![0.0; d],
            fd: vec![0.0; 2 * d],
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn step(
        &mut self,
        problem: &Problem,
        kind: SchemeKind,
        y: &[f64],
        h: f64,
        dw: &[f64],
        dp: u32,
        cfg: &SchemeConfig,
        out: &mut [f64],
    ) -> Result<()> {
        if !(h > 0.0) {
            return Err(Error::InvalidArgument("step size must be > 0".into()));
        }
        if dw.len() != self.m {
            return Err(Error::InvalidArgument("Brownian increment has wrong dimension".into()));
        }
        let dn = dp as f64 - problem.intensity() * h;
        match kind {
            SchemeKind::Euler | SchemeKind::TamedEuler => {
                problem.drift_into(y, &mut self.drift);
                let scale = if kind == SchemeKind::TamedEuler { 1.0 + h * norm2(&self.drift) } else { 1.0 };
                for (o, (yi, mi)) in out.iter_mut().zip(y.iter().zip(&self.drift)) {
                    *o = yi + mi * h / scale;
                }
                self.add_noise(problem, y, dw, dn, out);
            }
            SchemeKind::Ssbe => {
                let mut z = std::mem::take(&mut self.target);
                let solved = self.solve_implicit(problem, y, h, &cfg.solver, &mut z);
                if let Err(e) = solved {
                    self.target = z;
                    return Err(e);
                }
                out.copy_from_slice(&z);
                self.add_noise(problem, &z, dw, dn, out);
                self.target = z;
            }
            SchemeKind::Be => {
                let mut r = std::mem::take(&mut self.target);
                r.copy_from_slice(y);
                self.add_noise(problem, y, dw, dn, &mut r);
                let solved = self.solve_implicit(problem, &r, h, &cfg.solver, out);
                self.target = r;
                solved?;
            }
        }
        if let Some(&bad) = out.iter().find(|v| !v.is_finite() || v.abs() > cfg.explosion_bound) {
            return Err(Error::PathExploded { value: bad });
        }
        Ok(())
    }

    /// `out += sigma(at) dw + nu(at) dn`.
    fn add_noise(&mut self, problem: &Problem, at: &[f64], dw: &[f64], dn: f64, out: &mut [f64]) {
        problem.diffusion_into(at, &mut self.diffusion);
        problem.jump_into(at, &mut self.jump);
        for i in 0..self.d {
            let row = &self.diffusion[i * self.m..(i + 1) * self.m];
            let brownian: f64 = row.iter().zip(dw).map(|(s, w)| s * w).sum();
            out[i] += brownian + self.jump[i] * dn;
        }
    }

    /// g(y) = y - h mu(y) - x, returns its max-norm.
    fn residual(&mut self, problem: &Problem, y: &[f64], x: &[f64], h: f64, g: &mut [f64]) -> (f64, f64) {
        problem.drift_into(y, &mut self.drift);
        let mut r = 0.0f64;
        let mut scale = 0.0f64;
        for i in 0..self.d {
            let hm = h * self.drift[i];
            g[i] = y[i] - hm - x[i];
            r = r.max(g[i].abs());
            scale = scale.max(y[i].abs() + hm.abs() + x[i].abs());
        }
        // Below this the residual is dominated by rounding in y - h mu(y) - x.
        let floor = 8.0 * f64::EPSILON * scale;
        (if r.is_nan() { f64::INFINITY } else { r }, floor)
    }

    fn jacobian(&mut self, problem: &Problem, y: &[f64]) {
        let d = self.d;
        if problem.drift_jacobian_into(y, &mut self.jac) {
            return;
        }
        let mut probe = y.to_vec();
        for j in 0..d {
            let e = 1e-6 * y[j].abs().max(1.0);
            probe[j] = y[j] + e;
            let (plus, minus) = self.fd.split_at_mut(d);
            problem.drift_into(&probe, plus);
            probe[j] = y[j] - e;
            problem.drift_into(&probe, minus);
            probe[j] = y[j];
            for i in 0..d {
                self.jac[i * d + j] = (plus[i] - minus[i]) / (2.0 * e);
            }
        }
    }

    fn solve_implicit(
        &mut self,
        problem: &Problem,
        x: &[f64],
        h: f64,
        cfg: &ImplicitSolveConfig,
        y: &mut [f64],
    ) -> Result<()> {
        check_contractive(problem, h, cfg)?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::PathExploded { value: x.iter().copied().find(|v| !v.is_finite()).unwrap() });
        }
        let d = self.d;
        y.copy_from_slice(x);
        let mut g = std::mem::take(&mut self.g);
        let (mut res, mut floor) = self.residual(problem, y, x, h, &mut g);
        let mut best = res;
        if res <= cfg.tol.max(floor) {
            self.g = g;
            return Ok(());
        }

        'newton: for _ in 0..cfg.max_newton_iters {
            self.jacobian(problem, y);
            let delta: Vec<f64> = if d == 1 {
                vec![-g[0] / (1.0 - h * self.jac[0])]
            } else {
                let a = DMatrix::from_fn(d, d, |i, j| {
                    let id = if i == j { 1.0 } else { 0.0 };
                    id - h * self.jac[i * d + j]
                });
                let rhs = DVector::from_iterator(d, g.iter().map(|v| -v));
                match a.lu().solve(&rhs) {
                    Some(s) => s.iter().copied().collect(),
                    None => break 'newton,
                }
            };
            if delta.iter().any(|v| !v.is_finite()) {
                break;
            }
            let mut t = 1.0;
            let mut trial_g = std::mem::take(&mut self.trial_g);
            let mut trial = std::mem::take(&mut self.trial);
            let mut accepted = false;
            for _ in 0..40 {
                for i in 0..d {
                    trial[i] = y[i] + t * delta[i];
                }
                let (r, f) = self.residual(problem, &trial, x, h, &mut trial_g);
                if r < res {
                    y.copy_from_slice(&trial);
                    g.copy_from_slice(&trial_g);
                    res = r;
                    floor = f;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            self.trial_g = trial_g;
            self.trial = trial;
            best = best.min(res);
            if res <= cfg.tol.max(floor) {
                self.g = g;
                return Ok(());
            }
            if !accepted {
                break;
            }
        }
        self.g = g;

        if d == 1 {
            return self.bisect(problem, x[0], h, cfg, y);
        }
        Err(Error::SolverDiverged { start: x.to_vec(), residual: best })
    }

    /// Scalar fallback: g is increasing when `h c < 1`, so expand a bracket
    /// around `x` until it changes sign, then bisect.
    fn bisect(&mut self, problem: &Problem, x: f64, h: f64, cfg: &ImplicitSolveConfig, y: &mut [f64]) -> Result<()> {
        let mut g = [0.0];
        let mut eval = |ws: &mut Self, v: f64| {
            let (_, floor) = ws.residual(problem, &[v], &[x], h, &mut g);
            (g[0], floor)
        };
        let mut width = x.abs().max(1.0);
        let mut lo = x - width;
        let mut hi = x + width;
        let (mut g_lo, _) = eval(self, lo);
        let (mut g_hi, _) = eval(self, hi);
        let mut budget = cfg.max_bisection_iters;
        while !(g_lo <= 0.0 && g_hi >= 0.0) {
            if budget == 0 {
                return Err(Error::SolverDiverged { start: vec![x], residual: f64::INFINITY });
            }
            budget -= 1;
            width *= 1.0 + cfg.bracket_expansion;
            if !(g_lo <= 0.0) {
                lo = x - width;
                g_lo = eval(self, lo).0;
            }
            if !(g_hi >= 0.0) {
                hi = x + width;
                g_hi = eval(self, hi).0;
            }
        }
        let mut best = (f64::INFINITY, x);
        for _ in 0..cfg.max_bisection_iters {
            let mid = 0.5 * (lo + hi);
            let (gm, floor) = eval(self, mid);
            if gm.abs() < best.0 {
                best = (gm.abs(), mid);
            }
            if gm.abs() <= cfg.tol.max(floor) {
                y[0] = mid;
                return Ok(());
            }
            if mid <= lo || mid >= hi {
                break;
            }
            if gm < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (_, floor) = eval(self, best.1);
        if best.0 <= cfg.tol.max(floor) {
            y[0] = best.1;
            return Ok(());
        }
        Err(Error::SolverDiverged { start: vec![x], residual: best.0 })
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
