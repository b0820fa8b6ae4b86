//! Multilevel Monte Carlo estimation for jump-diffusion SDEs with
//! superlinear, one-sided Lipschitz drift.

pub mod analysis;
pub mod cli;
pub mod coupling;
pub mod error;
pub mod mlmc;
pub mod model;
pub mod noise;
pub mod payoff;
pub mod schemes;

pub use error::{Error, Result};
pub use mlmc::{run_adaptive, run_fixed_schedule, MlmcConfig, MlmcResult};
pub use model::{preset, Problem};
pub use payoff::{Payoff, PayoffKind};
pub use schemes::{SchemeConfig, SchemeKind};
