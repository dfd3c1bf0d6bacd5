use thiserror::Error;

/// Errors raised by the problem oracles, the merit machinery and the solvers.
///
/// Conditions the algorithms branch on (an unsolvable SQP system, a primal
/// test point leaving the perturbed feasible set during the line search) are
/// not errors; they are reported through return values.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("non-finite input: {0}")]
    Domain(&'static str),

    #[error("point lies outside the perturbed feasible set (a(x) = {a}, nu = {nu})")]
    OutOfPerturbedSet { a: f64, nu: f64 },

    #[error("batch size {requested} exceeds the cap {cap}")]
    BatchExplosion { requested: u64, cap: u64 },

    #[error("penalty parameter underflowed ({eps:e}) without satisfying the step conditions")]
    StalledEpsilon { eps: f64 },

    #[error("regularized Newton matrix is numerically singular")]
    SingularRegularizedNewton,

    #[error("non-finite merit estimate")]
    NonFiniteMerit,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T, E = SolverError> = std::result::Result<T, E>;
