//! Noise-free Bayesian optimization with Matérn Gaussian-process emulators.
//!
//! The crate provides exact-interpolation GP conditioning ([`gp`]), per-round
//! hyperparameter estimation ([`hyperest`]), the GP-UCB and GP-TS acquisition
//! loops ([`policies`]), ground-truth objectives with known RKHS norm
//! ([`testbed`]), and regret accounting plus executable checks of the
//! concentration and distance-sum inequalities behind the regret rates
//! ([`analysis`]). [`experiment`] ties these together into reproducible runs.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix the scalar to `f64`.

pub mod analysis;
pub mod domain;
pub mod error;
pub mod experiment;
pub mod gp;
pub mod hyperest;
pub mod kernels;
pub mod linalg;
pub mod points;
pub mod policies;
pub mod scalar;
pub mod search;
pub mod testbed;

pub use domain::BallDomain;
pub use error::{Error, Result};
pub use kernels::{matern_eval, Smoothness};
pub use scalar::Scalar;

/// Default working precision.
pub type Real = f64;

pub type HyperParams = kernels::HyperParams<Real>;
pub type MaternSpec = kernels::MaternSpec<Real>;
pub type PointSet = points::PointSet<Real>;
pub type History = gp::History<Real>;
pub type Posterior = gp::Posterior<Real>;
pub type ThetaBox = hyperest::ThetaBox<Real>;
pub type EstimatorConfig = hyperest::EstimatorConfig<Real>;
pub type RkhsFunction = testbed::RkhsFunction<Real>;
pub type GridFunction = testbed::GridFunction<Real>;
pub type PolicyState = policies::PolicyState<Real>;
pub type RegretTrace = analysis::RegretTrace<Real>;

/// Single-precision variants for memory-bound evaluation workloads.
pub type MaternSpecF32 = kernels::MaternSpec<f32>;
pub type PosteriorF32 = gp::Posterior<f32>;
