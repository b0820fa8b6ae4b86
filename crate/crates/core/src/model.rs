//! Jump-diffusion problems of the form
//!
//! ```text
//! dX_t = mu(X_t) dt + sigma(X_t) dW_t + nu(X_t) dN~_t,   X_{t0} = x0,   t in [t0, T]
//! ```
//!
//! where `W` is an `m`-dimensional Brownian motion and `N~` a scalar compensated
//! Poisson process with intensity `lambda`. The drift may grow superlinearly as
//! long as it is one-sided Lipschitz.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// In-place coefficient evaluation: `f(x, out)`.
pub type Coefficient = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Stable identifiers of the shipped presets.
pub const PRESET_NAMES: [&str; 3] = ["ginzburg_landau_jump", "cubic_additive_jump", "linear_jump_oracle"];

#[derive(Clone)]
pub struct Problem {
    name: String,
    dim: usize,
    brownian_dim: usize,
    drift: Coefficient,
    drift_jacobian: Option<Coefficient>,
    diffusion: Coefficient,
    jump_coeff: Coefficient,
    intensity: f64,
    x0: Vec<f64>,
    t0: f64,
    t_end: f64,
    one_sided_lipschitz: f64,
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("brownian_dim", &self.brownian_dim)
            .field("intensity", &self.intensity)
            .field("x0", &self.x0)
            .field("t0", &self.t0)
            .field("t_end", &self.t_end)
            .field("one_sided_lipschitz", &self.one_sided_lipschitz)
            .finish_non_exhaustive()
    }
}

impl Problem {
    pub fn builder(dim: usize, brownian_dim: usize) -> ProblemBuilder {
        ProblemBuilder::new(dim, brownian_dim)
    }

    /// Scalar problem (`d = m = 1`) from plain functions.
    pub fn scalar<D, S, J>(drift: D, diffusion: S, jump: J) -> ProblemBuilder
    where
        D: Fn(f64) -> f64 + Send + Sync + 'static,
        S: Fn(f64) -> f64 + Send + Sync + 'static,
        J: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        ProblemBuilder::new(1, 1)
            .drift(move |x, out| out[0] = drift(x[0]))
            .diffusion(move |x, out| out[0] = diffusion(x[0]))
            .jump(move |x, out| out[0] = jump(x[0]))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn brownian_dim(&self) -> usize {
        self.brownian_dim
    }

    pub fn intensity(&self) -> f64 {
        self.intensity
    }

    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn horizon(&self) -> f64 {
        self.t_end - self.t0
    }

    /// Constant `c` used by the implicit step guard `h * c < 1`. Declared by the
    /// builder or, failing that, estimated by [`probe_one_sided_lipschitz`].
    pub fn one_sided_lipschitz(&self) -> f64 {
        self.one_sided_lipschitz
    }

    pub fn has_drift_jacobian(&self) -> bool {
        self.drift_jacobian.is_some()
    }

    pub fn drift_into(&self, x: &[f64], out: &mut [f64]) {
        (self.drift)(x, out)
    }

    /// Row-major `d x d` Jacobian of the drift, if one was supplied.
    pub fn drift_jacobian_into(&self, x: &[f64], out: &mut [f64]) -> bool {
        match &self.drift_jacobian {
            Some(j) => {
                j(x, out);
                true
            }
            None => false,
        }
    }

    /// Row-major `d x m` diffusion matrix.
    pub fn diffusion_into(&self, x: &[f64], out: &mut [f64]) {
        (self.diffusion)(x, out)
    }

    pub fn jump_into(&self, x: &[f64], out: &mut [f64]) {
        (self.jump_coeff)(x, out)
    }

    pub fn drift(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.drift_into(x, &mut out);
        out
    }

    pub fn diffusion(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim * self.brownian_dim];
        self.diffusion_into(x, &mut out);
        out
    }

    pub fn jump(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.jump_into(x, &mut out);
        out
    }

    /// Same problem with a different declared one-sided Lipschitz constant.
    pub fn with_one_sided_lipschitz(mut self, c: f64) -> Self {
        self.one_sided_lipschitz = c;
        self
    }
}

pub struct ProblemBuilder {
    name: String,
    dim: usize,
    brownian_dim: usize,
    drift: Option<Coefficient>,
    drift_jacobian: Option<Coefficient>,
    diffusion: Option<Coefficient>,
    jump_coeff: Option<Coefficient>,
    intensity: f64,
    x0: Option<Vec<f64>>,
    t0: f64,
    t_end: f64,
    one_sided_lipschitz: Option<f64>,
}

impl ProblemBuilder {
    fn new(dim: usize, brownian_dim: usize) -> Self {
        ProblemBuilder {
            name: "custom".to_string(),
            dim,
            brownian_dim,
            drift: None,
            drift_jacobian: None,
            diffusion: None,
            jump_coeff: None,
            intensity: 0.0,
            x0: None,
            t0: 0.0,
            t_end: 1.0,
            one_sided_lipschitz: None,
        }
    }

    pub fn name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn drift(mut self, f: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.drift = Some(Arc::new(f));
        self
    }

    pub fn drift_jacobian(mut self, f: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.drift_jacobian = Some(Arc::new(f));
        self
    }

    /// Scalar convenience for [`drift_jacobian`](Self::drift_jacobian).
    pub fn drift_derivative(self, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.drift_jacobian(move |x, out| out[0] = f(x[0]))
    }

    pub fn diffusion(mut self, f: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.diffusion = Some(Arc::new(f));
        self
    }

    pub fn jump(mut self, f: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.jump_coeff = Some(Arc::new(f));
        self
    }

    pub fn intensity(mut self, lambda: f64) -> Self {
        self.intensity = lambda;
        self
    }

    pub fn x0(mut self, x0: Vec<f64>) -> Self {
        self.x0 = Some(x0);
        self
    }

    pub fn interval(mut self, t0: f64, t_end: f64) -> Self {
        self.t0 = t0;
        self.t_end = t_end;
        self
    }

    pub fn one_sided_lipschitz(mut self, c: f64) -> Self {
        self.one_sided_lipschitz = Some(c);
        self
    }

    pub fn build(self) -> Result<Problem> {
        let invalid = |msg: &str| Err(Error::InvalidProblem(msg.to_string()));
        if self.dim == 0 {
            return invalid("dim must be >= 1");
        }
        if self.brownian_dim == 0 {
            return invalid("brownian_dim must be >= 1");
        }
        if !(self.intensity >= 0.0 && self.intensity.is_finite()) {
            return invalid("intensity must be finite and >= 0");
        }
        if !(self.t0.is_finite() && self.t_end.is_finite() && self.t_end > self.t0) {
            return invalid("time interval must satisfy t0 < T");
        }
        let x0 = self.x0.unwrap_or_else(|| vec![0.0; self.dim]);
        if x0.len() != self.dim {
            return invalid("x0 length does not match dim");
        }
        if x0.iter().any(|v| !v.is_finite()) {
            return invalid("x0 must be finite");
        }
        let zero: Coefficient = Arc::new(|_: &[f64], out: &mut [f64]| out.fill(0.0));
        let mut problem = Problem {
            name: self.name,
            dim: self.dim,
            brownian_dim: self.brownian_dim,
            drift: self.drift.unwrap_or_else(|| zero.clone()),
            drift_jacobian: self.drift_jacobian,
            diffusion: self.diffusion.unwrap_or_else(|| zero.clone()),
            jump_coeff: self.jump_coeff.unwrap_or(zero),
            intensity: self.intensity,
            x0,
            t0: self.t0,
            t_end: self.t_end,
            one_sided_lipschitz: 0.0,
        };
        problem.one_sided_lipschitz = match self.one_sided_lipschitz {
            Some(c) if c.is_finite() => c,
            Some(_) => return invalid("one-sided Lipschitz constant must be finite"),
            None => probe_one_sided_lipschitz(&problem, 10.0, 4096, 0)?.c_estimate,
        };
        Ok(problem)
    }
}

/// Empirical check of `<x - y, mu(x) - mu(y)> <= c |x - y|^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OneSidedLipschitzCert {
    pub c_estimate: f64,
    pub probes: usize,
    pub domain_radius: f64,
}

/// Samples `n` pairs uniformly from the cube `[-radius, radius]^d` and returns the
/// largest observed one-sided Lipschitz quotient.
pub fn probe_one_sided_lipschitz(
    problem: &Problem,
    radius: f64,
    n: usize,
    seed: u64,
) -> Result<OneSidedLipschitzCert> {
    if n < 2 {
        return Err(Error::InvalidArgument("probe count must be >= 2".into()));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidArgument("probe radius must be positive".into()));
    }
    let d = problem.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = vec![0.0; d];
    let mut y = vec![0.0; d];
    let mut mx = vec![0.0; d];
    let mut my = vec![0.0; d];
    let mut best = f64::NEG_INFINITY;
    for _ in 0..n {
        for (xi, yi) in x.iter_mut().zip(y.iter_mut()) {
            *xi = rng.gen_range(-radius..=radius);
            *yi = rng.gen_range(-radius..=radius);
        }
        problem.drift_into(&x, &mut mx);
        problem.drift_into(&y, &mut my);
        if let Some(bad) = [(&x, &mx), (&y, &my)]
            .into_iter()
            .find(|(_, m)| m.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::NonFiniteDrift { point: bad.0.clone() });
        }
        let mut dot = 0.0;
        let mut sq = 0.0;
        for i in 0..d {
            let dx = x[i] - y[i];
            dot += dx * (mx[i] - my[i]);
            sq += dx * dx;
        }
        if sq > 0.0 {
            best = best.max(dot / sq);
        }
    }
    if best == f64::NEG_INFINITY {
        best = 0.0;
    }
    Ok(OneSidedLipschitzCert { c_estimate: best, probes: n, domain_radius: radius })
}

/// Parameters of the linear oracle preset `dX = aX dt + bX dW + kX dN~`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearOracleParams {
    pub a: f64,
    pub b: f64,
    pub k: f64,
}

impl Default for LinearOracleParams {
    fn default() -> Self {
        LinearOracleParams { a: 0.05, b: 0.2, k: 0.1 }
    }
}

/// Stochastic Ginzburg-Landau with multiplicative noise and jumps:
/// `mu = 2x - x^3`, `sigma = 2x`, `nu = x`, `lambda = 1`, `x0 = 1` on `[0, 1]`.
pub fn ginzburg_landau_jump() -> ProblemBuilder {
    Problem::scalar(|x| 2.0 * x - x * x * x, |x| 2.0 * x, |x| x)
        .name("ginzburg_landau_jump")
        .drift_derivative(|x| 2.0 - 3.0 * x * x)
        .intensity(1.0)
        .x0(vec![1.0])
        .interval(0.0, 1.0)
        .one_sided_lipschitz(2.0)
}

/// `mu = x - x^3`, additive unit noise, `nu = x`, `lambda = 1`, `x0 = 0` on `[0, 1]`.
pub fn cubic_additive_jump() -> ProblemBuilder {
    Problem::scalar(|x| x - x * x * x, |_| 1.0, |x| x)
        .name("cubic_additive_jump")
        .drift_derivative(|x| 1.0 - 3.0 * x * x)
        .intensity(1.0)
        .x0(vec![0.0])
        .interval(0.0, 1.0)
        .one_sided_lipschitz(1.0)
}

/// Linear SDE with known mean `E[X_t] = x0 exp(a t)`.
pub fn linear_jump_oracle(params: LinearOracleParams) -> ProblemBuilder {
    let LinearOracleParams { a, b, k } = params;
    Problem::scalar(move |x| a * x, move |x| b * x, move |x| k * x)
        .name("linear_jump_oracle")
        .drift_derivative(move |_| a)
        .intensity(1.0)
        .x0(vec![1.0])
        .interval(0.0, 1.0)
        .one_sided_lipschitz(a)
}

pub fn preset(name: &str) -> Result<Problem> {
    preset_with_overrides(name, &[])
}

/// Builds a preset, applying `key=value` overrides. Every preset accepts
/// `lambda`, `x0`, `t0` and `T`; the linear oracle also accepts `a`, `b`, `k`.
pub fn preset_with_overrides(name: &str, overrides: &[(String, f64)]) -> Result<Problem> {
    let lookup = |key: &str| overrides.iter().rev().find(|(k, _)| k == key).map(|(_, v)| *v);
    let builder = match name {
        "ginzburg_landau_jump" => ginzburg_landau_jump(),
        "cubic_additive_jump" => cubic_additive_jump(),
        "linear_jump_oracle" => {
            let mut params = LinearOracleParams::default();
            if let Some(v) = lookup("a") {
                params.a = v;
            }
            if let Some(v) = lookup("b") {
                params.b = v;
            }
            if let Some(v) = lookup("k") {
                params.k = v;
            }
            linear_jump_oracle(params)
        }
        _ => {
            return Err(Error::UnknownPreset {
                name: name.to_string(),
                valid: PRESET_NAMES.join(", "),
            })
        }
    };
    let allowed: &[&str] = match name {
        "linear_jump_oracle" => &["a", "b", "k", "lambda", "x0", "t0", "T"],
        _ => &["lambda", "x0", "t0", "T"],
    };
    if let Some((bad, _)) = overrides.iter().find(|(k, _)| !allowed.contains(&k.as_str())) {
        return Err(Error::InvalidArgument(format!(
            "override `{bad}` not accepted by preset {name} (allowed: {})",
            allowed.join(", ")
        )));
    }
    let mut builder = builder;
    if let Some(v) = lookup("lambda") {
        builder = builder.intensity(v);
    }
    if let Some(v) = lookup("x0") {
        builder = builder.x0(vec![v]);
    }
    let t0 = lookup("t0").unwrap_or(0.0);
    let t_end = lookup("T").unwrap_or(1.0);
    builder.interval(t0, t_end).build()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_values() {
        let gl = preset("ginzburg_landau_jump").unwrap();
        assert_eq!(gl.drift(&[1.0]), vec![1.0]);
        assert_eq!(gl.diffusion(&[1.5]), vec![3.0]);
        assert_eq!(gl.jump(&[1.5]), vec![1.5]);
        assert_eq!(gl.intensity(), 1.0);
        assert_eq!(gl.x0(), &[1.0]);
        assert_eq!((gl.t0(), gl.t_end()), (0.0, 1.0));

        let cubic = preset("cubic_additive_jump").unwrap();
        assert_eq!(cubic.x0(), &[0.0]);
        assert_eq!(cubic.drift(&[2.0]), vec![-6.0]);
        assert_eq!(cubic.diffusion(&[7.0]), vec![1.0]);

        let lin = preset("linear_jump_oracle").unwrap();
        assert_eq!(lin.drift(&[2.0]), vec![0.1]);
        assert_eq!(lin.diffusion(&[2.0]), vec![0.4]);
        assert_eq!(lin.jump(&[2.0]), vec![0.2]);
    }

    #[test]
    fn unknown_preset_names_valid_set() {
        let err = preset("heston").unwrap_err();
        match err {
            Error::UnknownPreset { name, valid } => {
                assert_eq!(name, "heston");
                for p in PRESET_NAMES {
                    assert!(valid.contains(p));
                }
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn overrides_apply_and_reject_unknown_keys() {
        let ov = vec![("a".to_string(), 0.0), ("b".to_string(), 0.0), ("k".to_string(), 0.0)];
        let p = preset_with_overrides("linear_jump_oracle", &ov).unwrap();
        assert_eq!(p.drift(&[3.0]), vec![0.0]);
        assert_eq!(p.one_sided_lipschitz(), 0.0);
        let bad = vec![("a".to_string(), 1.0)];
        assert!(preset_with_overrides("ginzburg_landau_jump", &bad).is_err());
    }

    #[test]
    fn builder_rejects_invalid() {
        assert!(Problem::builder(0, 1).build().is_err());
        assert!(Problem::builder(1, 0).build().is_err());
        assert!(Problem::builder(1, 1).intensity(-1.0).build().is_err());
        assert!(Problem::builder(1, 1).interval(1.0, 1.0).build().is_err());
        assert!(Problem::builder(2, 1).x0(vec![1.0]).build().is_err());
    }

    #[test]
    fn probe_known_drifts() {
        let neg = Problem::scalar(|x| -x, |_| 0.0, |_| 0.0).build().unwrap();
        let c = probe_one_sided_lipschitz(&neg, 5.0, 500, 3).unwrap().c_estimate;
        assert!((c + 1.0).abs() < 1e-12, "{c}");

        let zero = Problem::builder(1, 1).build().unwrap();
        assert_eq!(probe_one_sided_lipschitz(&zero, 5.0, 500, 3).unwrap().c_estimate, 0.0);
        assert_eq!(zero.one_sided_lipschitz(), 0.0);

        let gl = preset("ginzburg_landau_jump").unwrap();
        let cert = probe_one_sided_lipschitz(&gl, 10.0, 20_000, 7).unwrap();
        assert!(cert.c_estimate <= 2.0 + 1e-9);
        assert!(cert.c_estimate > 1.5);
        assert_eq!(cert.probes, 20_000);
    }

    #[test]
    fn probe_grid_scan_oracle_for_cubic_drift() {
        // Dense grid scan of 2 - (x^2 + xy + y^2) over [-10, 10]^2.
        let mut sup = f64::NEG_INFINITY;
        let n = 401;
        for i in 0..n {
            for j in 0..n {
                let x = -10.0 + 20.0 * i as f64 / (n - 1) as f64;
                let y = -10.0 + 20.0 * j as f64 / (n - 1) as f64;
                if i != j {
                    let q = ((x - y) * ((2.0 * x - x * x * x) - (2.0 * y - y * y * y))) / ((x - y) * (x - y));
                    sup = sup.max(q);
                }
            }
        }
        assert!(sup <= 2.0 + 1e-9);
        assert!(sup > 1.99);
    }

    #[test]
    fn probe_reports_nan_point() {
        let p = Problem::scalar(|x| if x > 0.0 { f64::NAN } else { 0.0 }, |_| 0.0, |_| 0.0)
            .one_sided_lipschitz(0.0)
            .build()
            .unwrap();
        let err = probe_one_sided_lipschitz(&p, 1.0, 100, 1).unwrap_err();
        match err {
            Error::NonFiniteDrift { point } => assert!(point[0] > 0.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn probe_argument_checks() {
        let p = Problem::builder(1, 1).build().unwrap();
        assert!(probe_one_sided_lipschitz(&p, 1.0, 1, 0).is_err());
        assert!(probe_one_sided_lipschitz(&p, 0.0, 10, 0).is_err());
    }

    #[test]
    fn probe_is_deterministic() {
        let p = Problem::scalar(|x| x.sin() * 3.0, |_| 0.0, |_| 0.0).one_sided_lipschitz(3.0).build().unwrap();
        let a = probe_one_sided_lipschitz(&p, 4.0, 300, 11).unwrap();
        let b = probe_one_sided_lipschitz(&p, 4.0, 300, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn presets_finite_on_large_inputs() {
        for name in PRESET_NAMES {
            let p = preset(name).unwrap();
            for x in [-1e6, -3.5, 0.0, 2.0, 1e6] {
                for v in p.drift(&[x]).into_iter().chain(p.diffusion(&[x])).chain(p.jump(&[x])) {
                    assert!(v.is_finite(), "{name} at {x}");
                }
            }
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for name in PRESET_NAMES {
            let p = preset(name).unwrap();
            assert!(p.has_drift_jacobian());
            for _ in 0..200 {
                let x = rng.gen_range(-5.0..5.0);
                let v: f64 = rng.gen_range(-1.0..1.0);
                let eps = 1e-4;
                let mut j = [0.0];
                p.drift_jacobian_into(&[x], &mut j);
                let lhs = (p.drift(&[x + eps * v])[0] - p.drift(&[x])[0] - eps * j[0] * v).abs();
                // second derivative of the cubic presets is bounded by 6|x| <= 30 here
                assert!(lhs <= 30.0 * eps * eps + 1e-12, "{name}: {lhs}");
            }
        }
    }
}
