//! Stochastic sequential quadratic programming for inequality-constrained
//! problems with a noisy objective.
//!
//! The crate provides
//!
//! * an exact, differentiable augmented Lagrangian merit function
//!   ([`merit`]),
//! * active-set SQP and regularized-Newton search directions
//!   ([`kkt_directions`]),
//! * the adaptive line-search solver with adaptive batch sizes and penalty
//!   parameters ([`solver_adaptive`]),
//! * a local scheme with prescribed stepsizes used as a baseline
//!   ([`solver_local`]),
//! * a small suite of analytic test problems and a Gaussian noise oracle
//!   ([`problem`], [`oracle`]).
//!
//! Every routine is generic over [`Scalar`] (`f32` or `f64`). The aliases at
//! the crate root fix the scalar to `f64`.

pub mod error;
pub mod kkt_directions;
pub mod merit;
pub mod oracle;
pub mod problem;
pub mod scalar;
pub mod solver_adaptive;
pub mod solver_local;
pub mod trace;

pub use nalgebra;

pub use error::{Result, SolverError};
pub use kkt_directions::{ActiveSet, DirectionKind, SingularBlock};
pub use oracle::StreamKey;
pub use problem::{builtin_suite, problem_by_name};
pub use scalar::Scalar;
pub use solver_adaptive::FallbackKind;
pub use trace::{RunStatus, StepType};

pub type Iterate = merit::Iterate<f64>;
pub type PenaltyParams = merit::PenaltyParams<f64>;
pub type MeritEval = merit::MeritEval<f64>;
pub type MeritGradient = merit::MeritGradient<f64>;
pub type ObjectiveSample = merit::ObjectiveSample<f64>;
pub type NoiseModel = oracle::NoiseModel<f64>;
pub type OracleBatch = oracle::OracleBatch<f64>;
pub type DirectionResult = kkt_directions::DirectionResult<f64>;
pub type AdaptiveConfig = solver_adaptive::AdaptiveConfig<f64>;
pub type SolverState = solver_adaptive::SolverState<f64>;
pub type LocalConfig = solver_local::LocalConfig<f64>;
pub type IterationRecord = trace::IterationRecord<f64>;
pub type RunTrace = trace::RunTrace<f64>;
pub type DynProblem = dyn problem::Problem<f64>;

pub type Iterate32 = merit::Iterate<f32>;
pub type AdaptiveConfig32 = solver_adaptive::AdaptiveConfig<f32>;
pub type RunTrace32 = trace::RunTrace<f32>;
