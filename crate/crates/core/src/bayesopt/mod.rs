//! Gaussian-process Bayesian optimization with expected improvement.

pub mod acquisition;
pub mod gp;
pub mod space;
pub mod tune;

pub use acquisition::{expected_improvement, norm_cdf, propose_next};
pub use gp::{gp_posterior, GpState, KernelParams};
pub use space::{Dimension, Scale, SearchSpace};
pub use tune::{initial_design_size, tune, tune_with_initial, Evaluation, Params, TuneResult};
