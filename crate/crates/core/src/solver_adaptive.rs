//! Adaptive stochastic SQP with a stochastic Armijo line search.
//!
//! Each iteration runs five steps:
//!
//! 1. estimate `∇f`, `∇²f` on a batch large enough for the gradient error to
//!    be dominated by `κ_grad·ᾱ·R̄`;
//! 2. shrink `ε̄` until the feasibility error is bounded by the merit gradient
//!    and, when the SQP system is solvable, the dominant part of the merit
//!    gradient gives sufficient descent along the SQP direction;
//! 3. keep the SQP direction unless it is unavailable or the higher-order part
//!    of the merit gradient spoils descent, in which case take a regularized
//!    Newton (or steepest descent) step on the merit function;
//! 4. form the test point; enlarge `ν̄` if it leaves `T_ν̄`, otherwise
//!    estimate the merit function at both points from a fresh batch;
//! 5. accept or reject by the Armijo test and update `ᾱ`, `δ̄`.

use crate::error::{Result, SolverError};
use crate::kkt_directions::{
    build_reg_newton_matrix, identify_active_set, solve_fallback, solve_sqp_system, ActiveSet,
    DirectionKind, DirectionResult, SqpInputs, SqpSolve,
};
use crate::merit::{
    eval_a, eval_merit_at, eval_merit_gradient_at, eval_q, kkt_residual_at, lagrangian_hessian,
    Iterate, MeritGradient, ObjectiveSample, PenaltyParams,
};
use crate::oracle::{sample_batch, NoiseModel, OracleBatch, StreamKey};
use crate::problem::{check_finite, ConstraintEval, Problem};
use crate::scalar::Scalar;
use crate::trace::{IterationRecord, RunStatus, RunTrace, StepType};
use nalgebra::DMatrix;

/// Stream used for the derivative batch `ξ₁`.
pub const STREAM_DERIVATIVES: u64 = 1;
/// Stream used for the merit-estimation batch `ξ₂`.
pub const STREAM_MERIT: u64 = 2;

/// Backup direction used when the SQP step is rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FallbackKind {
    RegNewton,
    SteepestDescent,
}

/// Choice of the Hessian approximation `B` in the SQP system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HessianApprox {
    #[default]
    Identity,
    /// `∇²ₓL` built from the sampled objective Hessian.
    Lagrangian,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveConfig<T: Scalar> {
    /// Initial and maximal stepsize `ᾱ₀ = α_max`.
    pub alpha_max: T,
    pub eta: T,
    pub gamma_b: T,
    /// Initial `ν̄`; defaults to `2·a(x⁰) + 1`.
    pub nu0: Option<T>,
    pub eps0: T,
    pub delta0: T,
    /// Armijo slope.
    pub beta: T,
    /// Parameter update factor, `> 1`.
    pub rho: T,
    pub kappa_grad: T,
    /// Must satisfy `κ_f ≤ β/(4α_max)`.
    pub kappa_f: T,
    pub p_grad: T,
    pub p_f: T,
    /// Constant in both batch-size formulas.
    pub big_o_const: T,
    /// Multiply the batch-size constant by the noise variance `σ²`.
    pub variance_scaled_batches: bool,
    pub fallback: FallbackKind,
    pub hessian: HessianApprox,
    pub max_iters: usize,
    pub tol: T,
    pub max_batch: u64,
}

impl<T: Scalar> Default for AdaptiveConfig<T> {
    fn default() -> Self {
        Self {
            alpha_max: T::lit(1.5),
            eta: T::one(),
            gamma_b: T::lit(0.1),
            nu0: None,
            eps0: T::one(),
            delta0: T::one(),
            beta: T::lit(0.3),
            rho: T::lit(2.0),
            kappa_grad: T::one(),
            kappa_f: T::lit(0.04),
            p_grad: T::lit(0.9),
            p_f: T::lit(0.9),
            big_o_const: T::lit(2.0),
            variance_scaled_batches: true,
            fallback: FallbackKind::RegNewton,
            hessian: HessianApprox::Identity,
            max_iters: 100_000,
            tol: T::lit(1e-5),
            max_batch: 1_000_000,
        }
    }
}

impl<T: Scalar> AdaptiveConfig<T> {
    pub fn with_fallback(mut self, fallback: FallbackKind) -> Self {
        self.fallback = fallback;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let zero = T::zero();
        let one = T::one();
        let bad = |msg: &str| Err(SolverError::InvalidConfig(msg.to_string()));
        if !(self.alpha_max > zero) {
            return bad("alpha_max must be positive");
        }
        if !(self.eta > zero && self.gamma_b > zero && self.eps0 > zero && self.delta0 > zero) {
            return bad("eta, gamma_b, eps0 and delta0 must be positive");
        }
        if !(self.kappa_grad > zero && self.big_o_const > zero) {
            return bad("kappa_grad and the batch constant must be positive");
        }
        if !(self.beta > zero && self.beta < one) {
            return bad("beta must lie in (0, 1)");
        }
        if !(self.rho > one) {
            return bad("rho must exceed 1");
        }
        if !(self.p_grad > zero && self.p_grad < one && self.p_f > zero && self.p_f < one) {
            return bad("p_grad and p_f must lie in (0, 1)");
        }
        if !(self.kappa_f > zero && self.kappa_f <= self.beta / (T::lit(4.0) * self.alpha_max)) {
            return bad("kappa_f must lie in (0, beta/(4 alpha_max)]");
        }
        if let Some(nu0) = self.nu0 {
            if !(nu0 > zero) {
                return bad("nu0 must be positive");
            }
        }
        if self.max_batch == 0 {
            return bad("max_batch must be at least 1");
        }
        Ok(())
    }

    /// Constant used in the batch-size formulas for a given noise level:
    /// `C·σ²` when variance scaling is on, `C` otherwise.
    pub fn batch_constant(&self, noise: &NoiseModel<T>) -> T {
        if self.variance_scaled_batches {
            self.big_o_const * noise.sigma2
        } else {
            self.big_o_const
        }
    }

    fn min_gamma_eta(&self) -> T {
        self.gamma_b.min(self.eta)
    }
}

/// Solver quantities carried between iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState<T: Scalar> {
    pub it: Iterate<T>,
    pub alpha_bar: T,
    pub eps_bar: T,
    pub nu_bar: T,
    pub delta_bar: T,
    pub iter: usize,
    /// Size of the previous derivative batch (`0` before the first).
    pub last_batch1: u64,
    /// `R̄` of the previous iteration.
    pub last_rbar: Option<T>,
}

impl<T: Scalar> SolverState<T> {
    /// Initial state; `ν̄₀` defaults to `2·a(x⁰) + 1`.
    pub fn initial<P: Problem<T> + ?Sized>(problem: &P, cfg: &AdaptiveConfig<T>) -> Result<Self> {
        let it = problem.initial_iterate();
        if !it.is_finite() {
            return Err(SolverError::Domain("initial iterate"));
        }
        let a0 = eval_a(&problem.g(&it.x));
        let nu = cfg.nu0.unwrap_or_else(|| T::lit(2.0) * a0 + T::one());
        if a0 > nu / T::lit(2.0) {
            return Err(SolverError::InvalidConfig(format!(
                "x0 is outside T_nu0 (a(x0) = {a0}, nu0 = {nu})"
            )));
        }
        Ok(Self {
            it,
            alpha_bar: cfg.alpha_max,
            eps_bar: cfg.eps0,
            nu_bar: nu,
            delta_bar: cfg.delta0,
            iter: 0,
            last_batch1: 0,
            last_rbar: None,
        })
    }

    pub fn penalty(&self, eta: T) -> PenaltyParams<T> {
        PenaltyParams::new(self.eps_bar, self.nu_bar, eta)
    }
}

fn ceil_to_u64<T: Scalar>(v: T) -> Option<u64> {
    let v = v.ceil().to_f64_lossy();
    if v.is_finite() && v < u64::MAX as f64 {
        Some(v.max(1.0) as u64)
    } else {
        None
    }
}

/// `⌈C·log(d/p_grad)/((κ_grad²ᾱ² ∧ 1)·R̄²)⌉`, the starting size of the
/// derivative batch given a residual estimate. `None` when unbounded.
pub fn grad_batch_lower_bound<T: Scalar>(
    constant: T,
    cfg: &AdaptiveConfig<T>,
    d: usize,
    alpha: T,
    rbar: T,
) -> Option<u64> {
    let log_term = (T::lit(d as f64) / cfg.p_grad).ln();
    let k = (cfg.kappa_grad * cfg.kappa_grad * alpha * alpha).min(T::one());
    ceil_to_u64(constant * log_term / (k * rbar * rbar))
}

/// `C·log(d/p_grad)/(κ_grad²ᾱ²R̄²)`, the size the realized batch must reach.
pub fn grad_batch_requirement<T: Scalar>(constant: T, cfg: &AdaptiveConfig<T>, d: usize, alpha: T, rbar: T) -> T {
    let log_term = (T::lit(d as f64) / cfg.p_grad).ln();
    let k = cfg.kappa_grad * cfg.kappa_grad * alpha * alpha;
    constant * log_term / (k * rbar * rbar)
}

/// `⌈C·log(1/p_f)/min{κ_f²ᾱ⁴(∇LᵀΔ)², δ̄²}⌉`, `None` when unbounded.
pub fn merit_batch_size<T: Scalar>(
    constant: T,
    cfg: &AdaptiveConfig<T>,
    alpha: T,
    grad_dot_dir: T,
    delta: T,
) -> Option<u64> {
    let a2 = alpha * alpha;
    let t1 = cfg.kappa_f * cfg.kappa_f * a2 * a2 * grad_dot_dir * grad_dot_dir;
    let denom = t1.min(delta * delta);
    ceil_to_u64(constant * (T::one() / cfg.p_f).ln() / denom)
}

/// `ν̄ρʲ` with `j = ⌈log(2a/ν̄)/log ρ⌉`, `j ≥ 1`.
pub fn enlarged_nu<T: Scalar>(nu: T, a_trial: T, rho: T) -> T {
    let j = ((T::lit(2.0) * a_trial / nu).ln() / rho.ln()).ceil().max(T::one());
    nu * rho.powf(j)
}

/// Result of Step 1.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeEstimate<T: Scalar> {
    pub batch: OracleBatch<T>,
    pub rbar: T,
    pub batch1: u64,
    /// Samples drawn across all attempts of the While loop.
    pub samples: u64,
}

/// Step 1: draws derivative batches of doubling size until the realized
/// residual estimate justifies the batch size.
pub fn step1_estimate<T: Scalar, P: Problem<T> + ?Sized>(
    state: &SolverState<T>,
    problem: &P,
    ce: &ConstraintEval<T>,
    noise: &NoiseModel<T>,
    cfg: &AdaptiveConfig<T>,
) -> Result<DerivativeEstimate<T>> {
    let d = problem.dim_x();
    let x = &state.it.x;
    let t = state.iter as u64;
    let cap = cfg.max_batch;
    let mut n = state.last_batch1 + 1;

    if noise.is_exact() {
        // The estimation error is identically zero, so any batch size
        // satisfies the accuracy event.
        if n > cap {
            return Err(SolverError::BatchExplosion { requested: n, cap });
        }
        let batch = sample_batch(problem, noise, x, n, StreamKey::new(STREAM_DERIVATIVES, t << 16))?;
        let rbar = kkt_residual_at(ce, &state.it, &batch.gradbar);
        return Ok(DerivativeEstimate { batch, rbar, batch1: n, samples: n });
    }

    let constant = cfg.batch_constant(noise);
    if let Some(prev) = state.last_rbar {
        match grad_batch_lower_bound(constant, cfg, d, state.alpha_bar, prev) {
            Some(lb) => n = n.max(lb),
            None => return Err(SolverError::BatchExplosion { requested: u64::MAX, cap }),
        }
    }

    let mut samples = 0u64;
    let mut attempt = 0u64;
    loop {
        if n > cap {
            return Err(SolverError::BatchExplosion { requested: n, cap });
        }
        let key = StreamKey::new(STREAM_DERIVATIVES, (t << 16) | attempt.min(0xffff));
        let batch = sample_batch(problem, noise, x, n, key)?;
        samples += n;
        let rbar = kkt_residual_at(ce, &state.it, &batch.gradbar);
        let required = grad_batch_requirement(constant, cfg, d, state.alpha_bar, rbar);
        if T::lit(n as f64) >= required {
            return Ok(DerivativeEstimate { batch, rbar, batch1: n, samples });
        }
        n = n.saturating_mul(2);
        attempt += 1;
    }
}

/// Result of Step 2.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonSearch<T: Scalar> {
    pub eps_bar: T,
    pub aset: ActiveSet,
    pub merit_grad: MeritGradient<T>,
    /// SQP outcome at the final `ε̄`, with the descent products filled in.
    pub sqp: SqpSolve<T>,
    pub b: DMatrix<T>,
    /// `‖(c; w)‖` at the final `ε̄`.
    pub feasibility: T,
    pub halvings: u32,
}

fn hessian_approx<T: Scalar>(
    cfg: &AdaptiveConfig<T>,
    ce: &ConstraintEval<T>,
    it: &Iterate<T>,
    hessbar: &DMatrix<T>,
) -> DMatrix<T> {
    match cfg.hessian {
        HessianApprox::Identity => DMatrix::identity(it.x.len(), it.x.len()),
        HessianApprox::Lagrangian => lagrangian_hessian(hessbar, ce, it),
    }
}

/// Checks the feasibility bound `‖(c; w)‖ ≤ ‖∇L‖`.
pub fn feasibility_bounded<T: Scalar>(ce: &ConstraintEval<T>, mg: &MeritGradient<T>) -> (bool, T) {
    let feas = (ce.c.norm_squared() + mg.w.norm_squared()).sqrt();
    (feas <= mg.full().norm(), feas)
}

/// Checks `(∇L⁽¹⁾)ᵀΔ ≤ −((γ_B ∧ η)/2)·rhs` for a solved SQP direction.
pub fn dominant_descent_holds<T: Scalar>(cfg: &AdaptiveConfig<T>, dir: &DirectionResult<T>) -> bool {
    dir.diag.descent_lhs1 <= -(cfg.min_gamma_eta() / T::lit(2.0)) * dir.diag.descent_rhs
}

/// Checks whether the higher-order part spoils descent,
/// `(∇L⁽²⁾)ᵀΔ > ((γ_B ∧ η)/4)·rhs`.
pub fn higher_order_spoils_descent<T: Scalar>(cfg: &AdaptiveConfig<T>, dir: &DirectionResult<T>) -> bool {
    dir.diag.descent_lhs2 > (cfg.min_gamma_eta() / T::lit(4.0)) * dir.diag.descent_rhs
}

/// Step 2: decreases `ε̄` by `ρ` until both step conditions hold. The active
/// set, merit gradient and SQP system are recomputed at each trial value.
pub fn step2_set_epsilon<T: Scalar>(
    state: &SolverState<T>,
    ce: &ConstraintEval<T>,
    est: &OracleBatch<T>,
    cfg: &AdaptiveConfig<T>,
) -> Result<EpsilonSearch<T>> {
    let it = &state.it;
    let a_x = eval_a(&ce.g);
    let q = eval_q(a_x, &it.lambda, state.nu_bar);
    let b = hessian_approx(cfg, ce, it, &est.hessbar);
    let inputs = SqpInputs { grad: &est.gradbar, q_grad: &est.gradbar, q_hess: &est.hessbar };

    let mut eps = state.eps_bar;
    let mut halvings = 0;
    loop {
        let p = PenaltyParams::new(eps, state.nu_bar, cfg.eta);
        let aset = identify_active_set(&ce.g, &it.lambda, eps * q);
        let mg = eval_merit_gradient_at(ce, it, &p, &est.gradbar, &est.hessbar, &aset)?;
        let sqp = match solve_sqp_system(ce, it, &aset, &b, inputs) {
            SqpSolve::Solved(d) => SqpSolve::Solved(d.with_descent_products(&mg)),
            other => other,
        };
        let (cond_feas, feasibility) = feasibility_bounded(ce, &mg);
        let cond_descent = sqp.direction().is_none_or(|d| dominant_descent_holds(cfg, d));
        if cond_feas && cond_descent {
            return Ok(EpsilonSearch { eps_bar: eps, aset, merit_grad: mg, sqp, b, feasibility, halvings });
        }
        eps /= cfg.rho;
        halvings += 1;
        if eps < T::tiny() {
            return Err(SolverError::StalledEpsilon { eps: eps.to_f64_lossy() });
        }
    }
}

/// Step 3: keeps the SQP direction when it is available and the
/// higher-order gradient part does not spoil descent, otherwise solves the
/// fallback system.
pub fn step3_choose_direction<T: Scalar>(
    state: &SolverState<T>,
    ce: &ConstraintEval<T>,
    search: &EpsilonSearch<T>,
    cfg: &AdaptiveConfig<T>,
) -> Result<DirectionResult<T>> {
    if let SqpSolve::Solved(d) = &search.sqp {
        if !higher_order_spoils_descent(cfg, d) {
            return Ok(d.clone());
        }
    }
    let it = &state.it;
    let grad = search.merit_grad.full();
    let dims = (it.x.len(), it.mu.len());
    let solvable = search.sqp.is_solvable();
    let dir = match cfg.fallback {
        FallbackKind::SteepestDescent => solve_fallback(None, &grad, dims, solvable)?,
        FallbackKind::RegNewton => {
            let p = PenaltyParams::new(search.eps_bar, state.nu_bar, cfg.eta);
            let hhat = build_reg_newton_matrix(ce, it, &search.aset, &p, &search.b, cfg.gamma_b);
            solve_fallback(Some(&hhat), &grad, dims, solvable)?
        }
    };
    Ok(dir.with_descent_products(&search.merit_grad))
}

/// Result of Step 4.
#[derive(Debug, Clone, PartialEq)]
pub enum MeritEstimates<T: Scalar> {
    /// The test point left `T_ν̄`; carries the enlarged `ν̄`.
    NuIncreased(T),
    Estimates {
        current: T,
        trial: T,
        trial_iterate: Iterate<T>,
        batch2: u64,
        capped: bool,
    },
}

/// Step 4: forms the test point and estimates the merit function at both
/// points from a single batch.
pub fn step4_estimate_merit<T: Scalar, P: Problem<T> + ?Sized>(
    state: &SolverState<T>,
    problem: &P,
    ce: &ConstraintEval<T>,
    noise: &NoiseModel<T>,
    dir: &DirectionResult<T>,
    grad_dot_dir: T,
    cfg: &AdaptiveConfig<T>,
) -> Result<MeritEstimates<T>> {
    let trial = dir.step_from(&state.it, state.alpha_bar);
    check_finite(&trial.x, "trial point")?;
    let ce_trial = ConstraintEval::new(problem, &trial.x);
    let a_trial = eval_a(&ce_trial.g);
    if a_trial > state.nu_bar / T::lit(2.0) {
        return Ok(MeritEstimates::NuIncreased(enlarged_nu(state.nu_bar, a_trial, cfg.rho)));
    }

    let constant = cfg.batch_constant(noise);
    let (n2, capped) = match merit_batch_size(constant, cfg, state.alpha_bar, grad_dot_dir, state.delta_bar) {
        Some(n) if n <= cfg.max_batch => (n, false),
        _ => (cfg.max_batch, true),
    };
    // One batch of samples evaluated at both points.
    let key = StreamKey::new(STREAM_MERIT, state.iter as u64);
    let b_cur = sample_batch(problem, noise, &state.it.x, n2, key)?;
    let b_trial = sample_batch(problem, noise, &trial.x, n2, key)?;

    let p = state.penalty(cfg.eta);
    let current = eval_merit_at(ce, &state.it, &p, &ObjectiveSample { f: b_cur.fbar, grad: b_cur.gradbar })?.value;
    let trial_val =
        eval_merit_at(&ce_trial, &trial, &p, &ObjectiveSample { f: b_trial.fbar, grad: b_trial.gradbar })?.value;
    if !(current.is_finite() && trial_val.is_finite()) {
        return Err(SolverError::NonFiniteMerit);
    }
    Ok(MeritEstimates::Estimates { current, trial: trial_val, trial_iterate: trial, batch2: n2, capped })
}

/// Step 5: Armijo test with reliability-controlled `δ̄`.
pub fn step5_line_search<T: Scalar>(
    state: &SolverState<T>,
    current: T,
    trial: T,
    trial_iterate: &Iterate<T>,
    grad_dot_dir: T,
    cfg: &AdaptiveConfig<T>,
) -> (SolverState<T>, StepType) {
    let mut next = state.clone();
    let predicted = cfg.beta * state.alpha_bar * grad_dot_dir;
    if trial <= current + predicted {
        next.it = trial_iterate.clone();
        next.alpha_bar = (cfg.rho * state.alpha_bar).min(cfg.alpha_max);
        if -predicted >= state.delta_bar {
            next.delta_bar = cfg.rho * state.delta_bar;
            (next, StepType::Reliable)
        } else {
            next.delta_bar = state.delta_bar / cfg.rho;
            (next, StepType::Unreliable)
        }
    } else {
        next.alpha_bar = state.alpha_bar / cfg.rho;
        next.delta_bar = state.delta_bar / cfg.rho;
        (next, StepType::Unsuccessful)
    }
}

fn exact_residual<T: Scalar, P: Problem<T> + ?Sized>(problem: &P, ce: &ConstraintEval<T>, it: &Iterate<T>) -> T {
    kkt_residual_at(ce, it, &problem.grad_f(&it.x))
}

/// Runs the adaptive scheme until `min{ᾱ‖Δ̌‖, R} ≤ tol` or the iteration
/// budget is spent.
pub fn run<T: Scalar, P: Problem<T> + ?Sized>(
    problem: &P,
    noise: &NoiseModel<T>,
    cfg: &AdaptiveConfig<T>,
) -> Result<RunTrace<T>> {
    cfg.validate()?;
    let mut state = SolverState::initial(problem, cfg)?;
    let mut records = Vec::new();
    let mut total_samples = 0u64;

    let status = loop {
        let ce = ConstraintEval::new(problem, &state.it.x);
        let r_exact = exact_residual(problem, &ce, &state.it);
        if r_exact <= cfg.tol {
            break RunStatus::Converged;
        }
        if state.iter >= cfg.max_iters {
            break RunStatus::MaxIters;
        }
        debug_assert!(eval_a(&ce.g) <= state.nu_bar / T::lit(2.0));

        let est = match step1_estimate(&state, problem, &ce, noise, cfg) {
            Ok(est) => est,
            Err(SolverError::BatchExplosion { .. }) => break RunStatus::ConvergedByBatchCap,
            Err(e) => return Err(e),
        };
        total_samples += est.samples;
        state.last_batch1 = est.batch1;
        state.last_rbar = Some(est.rbar);

        let search = step2_set_epsilon(&state, &ce, &est.batch, cfg)?;
        state.eps_bar = search.eps_bar;
        debug_assert!(search.feasibility <= search.merit_grad.full().norm());

        let dir = step3_choose_direction(&state, &ce, &search, cfg)?;
        let dir_norm = dir.norm();
        if state.alpha_bar * dir_norm <= cfg.tol {
            break RunStatus::Converged;
        }
        let grad_dot_dir = search.merit_grad.full().dot(&dir.stacked());

        let mut record = IterationRecord {
            iter: state.iter,
            kkt_residual_exact: r_exact,
            kkt_residual_est: est.rbar,
            step_type: StepType::Unsuccessful,
            direction_kind: dir.kind,
            direction_norm: dir_norm,
            alpha_bar: state.alpha_bar,
            eps_bar: state.eps_bar,
            nu_bar: state.nu_bar,
            delta_bar: state.delta_bar,
            batch1: est.batch1,
            batch2: 0,
            batch2_capped: false,
            merit_est: T::lit(f64::NAN),
        };

        let next = if dir_norm == T::zero() {
            let (next, _) = step5_line_search(&state, T::zero(), T::one(), &state.it, T::zero(), cfg);
            next
        } else {
            match step4_estimate_merit(&state, problem, &ce, noise, &dir, grad_dot_dir, cfg)? {
                MeritEstimates::NuIncreased(nu) => {
                    record.step_type = StepType::NuIncrease;
                    let mut next = state.clone();
                    next.nu_bar = nu;
                    next
                }
                MeritEstimates::Estimates { current, trial, trial_iterate, batch2, capped } => {
                    total_samples += batch2;
                    record.batch2 = batch2;
                    record.batch2_capped = capped;
                    record.merit_est = current;
                    let (next, kind) = step5_line_search(&state, current, trial, &trial_iterate, grad_dot_dir, cfg);
                    record.step_type = kind;
                    next
                }
            }
        };
        records.push(record);
        state = next;
        state.iter += 1;
    };

    let ce = ConstraintEval::new(problem, &state.it.x);
    Ok(RunTrace {
        problem: problem.name().to_string(),
        status,
        records,
        final_kkt_residual: exact_residual(problem, &ce, &state.it),
        final_iterate: state.it,
        final_alpha: state.alpha_bar,
        final_eps: state.eps_bar,
        final_nu: state.nu_bar,
        final_delta: state.delta_bar,
        total_samples,
    })
}

/// Fraction of recorded iterations that used the SQP direction.
pub fn sqp_fraction<T: Scalar>(trace: &RunTrace<T>) -> f64 {
    if trace.records.is_empty() {
        return 0.0;
    }
    let n = trace.records.iter().filter(|r| r.direction_kind == DirectionKind::Sqp).count();
    n as f64 / trace.records.len() as f64
}
