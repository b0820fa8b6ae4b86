//! Path functionals `P = f(X)` evaluated on discrete grid paths.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::schemes::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PayoffKind {
    Terminal,
    RunningSup,
    /// Left-endpoint average, i.e. the integral of the piecewise-constant
    /// interpolant divided by the horizon.
    RunningMean,
}

pub type StateMap = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct Payoff {
    kind: PayoffKind,
    inner: StateMap,
    growth_exponent: f64,
    id: String,
}

impl fmt::Debug for Payoff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Payoff")
            .field("id", &self.id)
            .field("kind", &self.kind)
            .field("growth_exponent", &self.growth_exponent)
            .finish_non_exhaustive()
    }
}

pub const PAYOFF_IDS: [&str; 4] = ["terminal_sq", "sup_sq", "mean_sq", "terminal_id"];

fn squared_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

impl Payoff {
    pub fn new(kind: PayoffKind, inner: impl Fn(&[f64]) -> f64 + Send + Sync + 'static, growth_exponent: f64) -> Self {
        Payoff { kind, inner: Arc::new(inner), growth_exponent, id: "custom".into() }
    }

    /// `g(x) = |x|^2`.
    pub fn squared(kind: PayoffKind) -> Self {
        let id = match kind {
            PayoffKind::Terminal => "terminal_sq",
            PayoffKind::RunningSup => "sup_sq",
            PayoffKind::RunningMean => "mean_sq",
        };
        Payoff { kind, inner: Arc::new(squared_norm), growth_exponent: 1.0, id: id.into() }
    }

    /// First component of the terminal state.
    pub fn terminal_identity() -> Self {
        Payoff { kind: PayoffKind::Terminal, inner: Arc::new(|x: &[f64]| x[0]), growth_exponent: 1.0, id: "terminal_id".into() }
    }

    pub fn kind(&self) -> PayoffKind {
        self.kind
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    /// Declared `c'` in the local Lipschitz bound
    /// `|f(x) - f(y)| <= c' (1 + |x|^c' + |y|^c') |x - y|_sup`.
    pub fn growth_exponent(&self) -> f64 {
        self.growth_exponent
    }

    pub fn inner(&self, x: &[f64]) -> f64 {
        (self.inner)(x)
    }

    /// Evaluates on states `0..len`, all of dimension `dim`, stored contiguously.
    pub fn evaluate_states(&self, states: &[f64], dim: usize) -> Result<f64> {
        if states.is_empty() || dim == 0 {
            return Err(Error::EmptyPath);
        }
        let mut it = states.chunks_exact(dim);
        Ok(match self.kind {
            PayoffKind::Terminal => self.inner(it.next_back().expect("nonempty")),
            PayoffKind::RunningSup => it.map(|s| self.inner(s)).fold(f64::NEG_INFINITY, f64::max),
            PayoffKind::RunningMean => {
                let n = states.len() / dim;
                if n == 1 {
                    self.inner(&states[..dim])
                } else {
                    let sum: f64 = it.take(n - 1).map(|s| self.inner(s)).sum();
                    sum / (n - 1) as f64
                }
            }
        })
    }

    pub fn evaluate(&self, path: &Path) -> Result<f64> {
        self.evaluate_states(path.raw(), path.dim())
    }

    /// Evaluates with an explicit time array, checked against the path length.
    pub fn evaluate_with_times(&self, path: &Path, times: &[f64]) -> Result<f64> {
        if times.len() != path.len() {
            return Err(Error::InvalidArgument(format!(
                "path has {} states but {} times",
                path.len(),
                times.len()
            )));
        }
        self.evaluate(path)
    }
}

impl FromStr for Payoff {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "terminal_sq" => Ok(Payoff::squared(PayoffKind::Terminal)),
            "sup_sq" => Ok(Payoff::squared(PayoffKind::RunningSup)),
            "mean_sq" => Ok(Payoff::squared(PayoffKind::RunningMean)),
            "terminal_id" => Ok(Payoff::terminal_identity()),
            other => Err(Error::InvalidArgument(format!(
                "unknown payoff `{other}` (valid: {})",
                PAYOFF_IDS.join(", ")
            ))),
        }
    }
}
