//! Estimation of the time-0 optimal control of finite-horizon stochastic
//! control problems with additive control and quadratic control cost.
//!
//! The control is written as a ratio of path integrals under the uncontrolled
//! diffusion. Those path integrals are expectations under the smoothing
//! distribution of a state space model whose latent process is the
//! Euler–Maruyama chain and whose potentials are the exponentiated running and
//! terminal costs. The crate samples that smoothing distribution with particle
//! independent Metropolis–Hastings and combines levels of time discretization
//! with a multilevel telescoping estimator.
//!
//! Module map:
//!
//! - [`rng`]: counter-based keyed random streams.
//! - [`model`]: control problems (generic, LQG, SIVR) and reference solutions.
//! - [`simulate`]: Euler–Maruyama paths and coupled fine/coarse paths.
//! - [`ssm`]: potentials, coupled potentials, Radon–Nikodym weights and the
//!   control test function.
//! - [`smc`]: bootstrap particle filters for the single and coupled models.
//! - [`pimh`]: particle independent Metropolis–Hastings chains.
//! - [`estimate`]: plain Monte Carlo, single-level, level-difference and
//!   multilevel estimators, level schedules and cost accounting.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]

extern crate alloc;

pub mod error;
pub mod estimate;
pub mod linalg;
pub mod model;
pub mod pimh;
pub mod rng;
pub mod simulate;
pub mod smc;
pub mod ssm;
pub mod stats;

pub use error::{Error, Result};
pub use model::{ControlProblem, CustomProblem, Lqg, LqgParams, Sivr, SivrParams};
pub use rng::{Purpose, Stream, StreamKey};
pub use simulate::{CoupledPath, DiscretePath, LevelGrid};
