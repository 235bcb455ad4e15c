//! Monte Carlo toolkit for asymmetric trap models on the complete graph,
//! their K-process scaling limits and the self-similar small-time limit.
//!
//! - [`mod@env`]: Pareto landscapes, stable jump fields and the limit constants.
//! - [`process`]: path simulators and rescalings.
//! - [`analysis`]: Laplace exponents, aging estimators and the arcsine oracle.
//! - [`experiment`]: configuration and the `ktrap` command-line driver.

pub mod analysis;
pub mod env;
pub mod error;
pub mod experiment;
pub mod parallel;
pub mod path;
pub mod process;
pub mod quad;
pub mod seed;
pub mod special;

pub use analysis::{
    arcsine_pi, empirical_laplace, estimate_pi, estimate_q, estimate_r, ks_statistic,
    occupation_fractions, rescaled_laplace, AgingEstimate, CurveLabel, LaplaceCurve,
};
pub use env::{
    alpha_hat, c_hat, normalizer_cn, sample_pareto_env, sample_stable_jumps, tail_time_mass,
    AlphaHat, Environment, JumpField,
};
pub use error::{Error, Result};
pub use path::{rescale_path, ClockRecord, EventKind, JumpConvention, PathEvent, StepPath};
pub use process::{simulate_k_path, simulate_trap_path, simulate_zhat_path};
pub use seed::mix64;
