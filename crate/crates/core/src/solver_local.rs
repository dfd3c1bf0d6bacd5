//! Local stochastic SQP with prescribed stepsizes.
//!
//! Each iteration draws two independent single samples, one for the
//! Lagrangian gradient and one for the second-order matrices, identifies the
//! active set for a fixed `ε`, solves the coupled SQP system and moves by a
//! deterministic stepsize. Only `ν` is adjusted, to keep the iterate inside
//! `T_ν`.

use crate::error::{Result, SolverError};
use crate::kkt_directions::{identify_active_set, solve_sqp_system, DirectionKind, SqpInputs, SqpSolve};
use crate::merit::{eval_a, eval_q, kkt_residual_at};
use crate::oracle::{sample_batch, NoiseModel, StreamKey};
use crate::problem::{ConstraintEval, Problem};
use crate::scalar::Scalar;
use crate::solver_adaptive::{enlarged_nu, STREAM_DERIVATIVES, STREAM_MERIT};
use crate::trace::{IterationRecord, RunStatus, RunTrace, StepType};
use nalgebra::DMatrix;
use std::fmt;

/// Prescribed stepsize sequence, indexed from `t = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stepsize<T: Scalar> {
    Const(T),
    /// `α_t = t^(−p)`.
    Decay(T),
}

impl<T: Scalar> Stepsize<T> {
    /// Stepsize of the iteration with zero-based index `iter`.
    pub fn at(&self, iter: usize) -> T {
        match *self {
            Stepsize::Const(a) => a,
            Stepsize::Decay(p) => T::one() / T::lit((iter + 1) as f64).powf(p),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Stepsize::Const(a) if a > T::zero() && a.is_finite() => Ok(()),
            Stepsize::Decay(p) if p > T::lit(0.5) && p <= T::one() => Ok(()),
            _ => Err(SolverError::InvalidConfig(format!("invalid stepsize {self}"))),
        }
    }
}

impl<T: Scalar> fmt::Display for Stepsize<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stepsize::Const(a) => write!(f, "{a}"),
            Stepsize::Decay(p) => write!(f, "t^-{p}"),
        }
    }
}

impl<T: Scalar> std::str::FromStr for Stepsize<T> {
    type Err = String;

    /// Parses `0.5` as a constant and `t^-0.6` as a decay exponent.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let s = s.trim();
        let parse = |v: &str| v.parse::<f64>().map(T::lit).map_err(|e| format!("bad stepsize `{s}`: {e}"));
        let step = match s.strip_prefix("t^-") {
            Some(p) => Stepsize::Decay(parse(p)?),
            None => Stepsize::Const(parse(s)?),
        };
        step.validate().map_err(|e| e.to_string())?;
        Ok(step)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalConfig<T: Scalar> {
    pub epsilon: T,
    pub stepsize: Stepsize<T>,
    /// Initial `ν`; defaults to `2·a(x⁰) + 1`.
    pub nu0: Option<T>,
    /// Enlargement factor for `ν`.
    pub rho: T,
    pub max_iters: usize,
    pub tol: T,
}

impl<T: Scalar> LocalConfig<T> {
    pub fn new(stepsize: Stepsize<T>) -> Self {
        Self {
            epsilon: T::lit(1e-3),
            stepsize,
            nu0: None,
            rho: T::lit(2.0),
            max_iters: 100_000,
            tol: T::lit(1e-5),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > T::zero()) {
            return Err(SolverError::InvalidConfig("epsilon must be positive".into()));
        }
        if !(self.rho > T::one()) {
            return Err(SolverError::InvalidConfig("rho must exceed 1".into()));
        }
        if let Some(nu) = self.nu0 {
            if !(nu > T::zero()) {
                return Err(SolverError::InvalidConfig("nu0 must be positive".into()));
            }
        }
        self.stepsize.validate()
    }
}

/// Runs the local scheme. An unsolvable SQP system or a non-finite iterate
/// ends the run with status `Divergent`.
pub fn run_local<T: Scalar, P: Problem<T> + ?Sized>(
    problem: &P,
    noise: &NoiseModel<T>,
    cfg: &LocalConfig<T>,
) -> Result<RunTrace<T>> {
    cfg.validate()?;
    let mut it = problem.initial_iterate();
    if !it.is_finite() {
        return Err(SolverError::Domain("initial iterate"));
    }
    let d = problem.dim_x();
    let b = DMatrix::<T>::identity(d, d);
    let mut nu = cfg
        .nu0
        .unwrap_or_else(|| T::lit(2.0) * eval_a(&problem.g(&it.x)) + T::one());
    let mut records = Vec::new();
    let mut total_samples = 0u64;
    let mut alpha_last = cfg.stepsize.at(0);
    let mut iter = 0usize;

    let status = loop {
        if !it.is_finite() {
            break RunStatus::Divergent;
        }
        let ce = ConstraintEval::new(problem, &it.x);
        let r_exact = kkt_residual_at(&ce, &it, &problem.grad_f(&it.x));
        if r_exact <= cfg.tol {
            break RunStatus::Converged;
        }
        if iter >= cfg.max_iters {
            break RunStatus::MaxIters;
        }

        let a_x = eval_a(&ce.g);
        if a_x > nu / T::lit(2.0) {
            nu = enlarged_nu(nu, a_x, cfg.rho);
        }
        let q = eval_q(a_x, &it.lambda, nu);

        let t = iter as u64;
        let s1 = sample_batch(problem, noise, &it.x, 1, StreamKey::new(STREAM_DERIVATIVES, t))?;
        let s2 = sample_batch(problem, noise, &it.x, 1, StreamKey::new(STREAM_MERIT, t))?;
        total_samples += 2;

        let aset = identify_active_set(&ce.g, &it.lambda, cfg.epsilon * q);
        let inputs = SqpInputs { grad: &s1.gradbar, q_grad: &s2.gradbar, q_hess: &s2.hessbar };
        let dir = match solve_sqp_system(&ce, &it, &aset, &b, inputs) {
            SqpSolve::Solved(dir) => dir,
            SqpSolve::Unsolvable(_) => break RunStatus::Divergent,
        };

        let alpha = cfg.stepsize.at(iter);
        alpha_last = alpha;
        let dir_norm = dir.norm();
        if alpha * dir_norm <= cfg.tol {
            break RunStatus::Converged;
        }

        records.push(IterationRecord {
            iter,
            kkt_residual_exact: r_exact,
            kkt_residual_est: kkt_residual_at(&ce, &it, &s1.gradbar),
            step_type: StepType::Prescribed,
            direction_kind: DirectionKind::Sqp,
            direction_norm: dir_norm,
            alpha_bar: alpha,
            eps_bar: cfg.epsilon,
            nu_bar: nu,
            delta_bar: T::zero(),
            batch1: 1,
            batch2: 1,
            batch2_capped: false,
            merit_est: T::lit(f64::NAN),
        });
        it = dir.step_from(&it, alpha);
        iter += 1;
    };

    let final_kkt_residual = if it.is_finite() {
        let ce = ConstraintEval::new(problem, &it.x);
        kkt_residual_at(&ce, &it, &problem.grad_f(&it.x))
    } else {
        T::lit(f64::INFINITY)
    };
    Ok(RunTrace {
        problem: problem.name().to_string(),
        status,
        records,
        final_iterate: it,
        final_kkt_residual,
        final_alpha: alpha_last,
        final_eps: cfg.epsilon,
        final_nu: nu,
        final_delta: T::zero(),
        total_samples,
    })
}
