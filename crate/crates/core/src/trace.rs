//! Per-iteration records and run summaries shared by both solvers.

use crate::kkt_directions::DirectionKind;
use crate::merit::Iterate;
use crate::scalar::Scalar;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RunStatus {
    Converged,
    MaxIters,
    Divergent,
    /// The gradient batch hit its size cap; the residual is too small to be
    /// resolved by sampling and the run is treated as converged.
    ConvergedByBatchCap,
}

impl RunStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            RunStatus::Converged => "Converged",
            RunStatus::MaxIters => "MaxIters",
            RunStatus::Divergent => "Divergent",
            RunStatus::ConvergedByBatchCap => "ConvergedByBatchCap",
        }
    }

    pub fn is_converged(&self) -> bool {
        matches!(self, RunStatus::Converged | RunStatus::ConvergedByBatchCap)
    }
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for RunStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Converged" => Ok(RunStatus::Converged),
            "MaxIters" => Ok(RunStatus::MaxIters),
            "Divergent" => Ok(RunStatus::Divergent),
            "ConvergedByBatchCap" => Ok(RunStatus::ConvergedByBatchCap),
            other => Err(format!("unknown run status `{other}`")),
        }
    }
}

/// Outcome of one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StepType {
    /// Armijo held and the predicted decrease exceeded `δ̄`.
    Reliable,
    /// Armijo held, predicted decrease below `δ̄`.
    Unreliable,
    /// Armijo failed; the test point was rejected.
    Unsuccessful,
    /// The primal test point left `T_ν`; `ν̄` was enlarged.
    NuIncrease,
    /// Step with a prescribed stepsize (local scheme).
    Prescribed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord<T: Scalar> {
    pub iter: usize,
    /// `R_t` with exact derivatives.
    pub kkt_residual_exact: T,
    /// `R̄_t` with the estimated gradient.
    pub kkt_residual_est: T,
    pub step_type: StepType,
    pub direction_kind: DirectionKind,
    pub direction_norm: T,
    /// Stepsize used in this iteration.
    pub alpha_bar: T,
    /// Penalty parameter after the `ε̄` search of this iteration.
    pub eps_bar: T,
    pub nu_bar: T,
    pub delta_bar: T,
    pub batch1: u64,
    /// Merit-estimation batch; zero when none was drawn.
    pub batch2: u64,
    pub batch2_capped: bool,
    /// Estimated merit value at the current iterate; NaN when not estimated.
    pub merit_est: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace<T: Scalar> {
    pub problem: String,
    pub status: RunStatus,
    pub records: Vec<IterationRecord<T>>,
    pub final_iterate: Iterate<T>,
    pub final_kkt_residual: T,
    pub final_alpha: T,
    pub final_eps: T,
    pub final_nu: T,
    pub final_delta: T,
    pub total_samples: u64,
}

impl<T: Scalar> RunTrace<T> {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }
}
