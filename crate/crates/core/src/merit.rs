//! Exact augmented Lagrangian merit function.
//!
//! For penalty parameters `ε, ν, η > 0` the merit function over `(x, μ, λ)` is
//!
//! ```text
//! L_{ε,ν,η} = f + μᵀc + λᵀg + ‖c‖²/(2ε) + (‖g‖² − ‖b‖²)/(2εq)
//!           + (η/2)‖(J∇ₓL ; G∇ₓL + diag²(g)λ)‖²
//! ```
//!
//! where `a(x) = Σ max{gᵢ, 0}³`, `q = (ν − a)/(1 + ‖λ‖²)`,
//! `b = min{0, g + εqλ}` and `w = g − b = max{g, −εqλ}`. The function is
//! only meaningful on the perturbed feasible set `T_ν = {x : a(x) ≤ ν/2}`.

use crate::error::{Result, SolverError};
use crate::kkt_directions::ActiveSet;
use crate::problem::{ConstraintEval, Problem};
use crate::scalar::Scalar;
use nalgebra::{DMatrix, DVector};

/// Primal-dual triple `(x, μ, λ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Iterate<T: Scalar> {
    pub x: DVector<T>,
    pub mu: DVector<T>,
    pub lambda: DVector<T>,
}

impl<T: Scalar> Iterate<T> {
    pub fn new(x: DVector<T>, mu: DVector<T>, lambda: DVector<T>) -> Self {
        Self { x, mu, lambda }
    }

    pub fn dim(&self) -> usize {
        self.x.len() + self.mu.len() + self.lambda.len()
    }

    /// `(x; μ; λ)` as one vector.
    pub fn stacked(&self) -> DVector<T> {
        stack3(&self.x, &self.mu, &self.lambda)
    }

    /// Inverse of [`Iterate::stacked`] with the block sizes of `self`.
    pub fn unstack_like(&self, v: &DVector<T>) -> Self {
        let (x, mu, lambda) = split3(v, self.x.len(), self.mu.len());
        Self { x, mu, lambda }
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(self.mu.iter()).chain(self.lambda.iter()).all(|v| v.is_finite())
    }
}

pub(crate) fn stack3<T: Scalar>(a: &DVector<T>, b: &DVector<T>, c: &DVector<T>) -> DVector<T> {
    DVector::from_iterator(
        a.len() + b.len() + c.len(),
        a.iter().chain(b.iter()).chain(c.iter()).copied(),
    )
}

pub(crate) fn split3<T: Scalar>(
    v: &DVector<T>,
    d: usize,
    m: usize,
) -> (DVector<T>, DVector<T>, DVector<T>) {
    let r = v.len() - d - m;
    (
        v.rows(0, d).into_owned(),
        v.rows(d, m).into_owned(),
        v.rows(d + m, r).into_owned(),
    )
}

/// Penalty parameters `(ε, ν, η)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyParams<T: Scalar> {
    pub epsilon: T,
    pub nu: T,
    pub eta: T,
}

impl<T: Scalar> PenaltyParams<T> {
    pub fn new(epsilon: T, nu: T, eta: T) -> Self {
        assert!(
            epsilon > T::zero() && nu > T::zero() && eta > T::zero(),
            "penalty parameters must be strictly positive"
        );
        Self { epsilon, nu, eta }
    }
}

/// Objective value and gradient used to evaluate the merit function; either
/// exact or a sample mean.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveSample<T: Scalar> {
    pub f: T,
    pub grad: DVector<T>,
}

impl<T: Scalar> ObjectiveSample<T> {
    pub fn exact<P: Problem<T> + ?Sized>(problem: &P, x: &DVector<T>) -> Self {
        Self { f: problem.f(x), grad: problem.grad_f(x) }
    }
}

/// `a(x) = Σ max{gᵢ, 0}³`.
pub fn eval_a<T: Scalar>(g: &DVector<T>) -> T {
    g.iter().fold(T::zero(), |acc, &gi| {
        let p = gi.max(T::zero());
        acc + p * p * p
    })
}

/// `q_ν = (ν − a)/(1 + ‖λ‖²)`. May be nonpositive outside `T_ν`.
pub fn eval_q<T: Scalar>(a: T, lambda: &DVector<T>, nu: T) -> T {
    (nu - a) / (T::one() + lambda.norm_squared())
}

/// Returns `(w, b)` with `w = max{g, −εqλ}` and `b = g − w`.
///
/// Ties resolve to the `g` branch.
pub fn eval_w<T: Scalar>(g: &DVector<T>, lambda: &DVector<T>, eps_q: T) -> (DVector<T>, DVector<T>) {
    let w = g.zip_map(lambda, |gi, li| {
        let other = -eps_q * li;
        if gi >= other {
            gi
        } else {
            other
        }
    });
    let b = g - &w;
    (w, b)
}

/// `ℓ(x) = diag(max{g, 0}) max{g, 0}`.
fn ell<T: Scalar>(g: &DVector<T>) -> DVector<T> {
    g.map(|gi| {
        let p = gi.max(T::zero());
        p * p
    })
}

/// `∇ₓL = ∇f + Jᵀμ + Gᵀλ`.
pub fn lagrangian_gradient<T: Scalar>(
    grad_f: &DVector<T>,
    ce: &ConstraintEval<T>,
    it: &Iterate<T>,
) -> DVector<T> {
    grad_f + ce.jac_c.tr_mul(&it.mu) + ce.jac_g.tr_mul(&it.lambda)
}

/// `∇²ₓL = ∇²f + Σ μᵢ∇²cᵢ + Σ λᵢ∇²gᵢ`.
pub fn lagrangian_hessian<T: Scalar>(
    hess_f: &DMatrix<T>,
    ce: &ConstraintEval<T>,
    it: &Iterate<T>,
) -> DMatrix<T> {
    let mut h = hess_f.clone();
    for (hc, &mu) in ce.hess_c.iter().zip(it.mu.iter()) {
        h += hc * mu;
    }
    for (hg, &l) in ce.hess_g.iter().zip(it.lambda.iter()) {
        h += hg * l;
    }
    h
}

/// Block matrix `[[JJᵀ, JGᵀ], [GJᵀ, GGᵀ + diag²(s)]]` for a given diagonal
/// source `s` (the constraint values, or a projection of them).
pub fn m_matrix_with<T: Scalar>(ce: &ConstraintEval<T>, s: &DVector<T>) -> DMatrix<T> {
    let m = ce.dim_eq();
    let r = ce.dim_ineq();
    let jg = stacked_jacobian(ce);
    let mut out = &jg * jg.transpose();
    for i in 0..r {
        out[(m + i, m + i)] += s[i] * s[i];
    }
    out
}

/// `M = [[JJᵀ, JGᵀ], [GJᵀ, GGᵀ + diag²(g)]]`.
pub fn m_matrix<T: Scalar>(ce: &ConstraintEval<T>) -> DMatrix<T> {
    m_matrix_with(ce, &ce.g)
}

/// `(J; G)`, an `(m + r) × d` matrix.
pub(crate) fn stacked_jacobian<T: Scalar>(ce: &ConstraintEval<T>) -> DMatrix<T> {
    let m = ce.dim_eq();
    let r = ce.dim_ineq();
    let d = ce.dim_x();
    let mut jg = DMatrix::zeros(m + r, d);
    jg.rows_mut(0, m).copy_from(&ce.jac_c);
    jg.rows_mut(m, r).copy_from(&ce.jac_g);
    jg
}

/// Returns `(Q₁, Q₂)`:
///
/// ```text
/// Q₁ = ∇²ₓL Jᵀ + Σᵢ ∇²cᵢ ∇ₓL eᵢᵀ
/// Q₂ = ∇²ₓL Gᵀ + Σᵢ ∇²gᵢ ∇ₓL eᵢᵀ + 2Gᵀ diag(g) diag(λ)
/// ```
pub fn q_matrices<T: Scalar>(
    ce: &ConstraintEval<T>,
    it: &Iterate<T>,
    grad_lag: &DVector<T>,
    hess_lag: &DMatrix<T>,
) -> (DMatrix<T>, DMatrix<T>) {
    let mut q1 = hess_lag * ce.jac_c.transpose();
    for (i, hc) in ce.hess_c.iter().enumerate() {
        let col = hc * grad_lag;
        let mut dst = q1.column_mut(i);
        dst += &col;
    }
    let mut q2 = hess_lag * ce.jac_g.transpose();
    let two = T::lit(2.0);
    for (i, hg) in ce.hess_g.iter().enumerate() {
        let col = hg * grad_lag;
        let scale = two * ce.g[i] * it.lambda[i];
        let grow = ce.jac_g.row(i).transpose();
        let mut dst = q2.column_mut(i);
        dst += &col;
        dst += &grow * scale;
    }
    (q1, q2)
}

/// `(J∇ₓL ; G∇ₓL + diag²(g)λ)`, optionally with the `diag²(g)λ` term
/// restricted to the complement of an active set.
pub fn optimality_block<T: Scalar>(
    ce: &ConstraintEval<T>,
    it: &Iterate<T>,
    grad_lag: &DVector<T>,
    inactive_only: Option<&ActiveSet>,
) -> DVector<T> {
    let m = ce.dim_eq();
    let r = ce.dim_ineq();
    let jgl = &ce.jac_c * grad_lag;
    let mut ggl = &ce.jac_g * grad_lag;
    for i in 0..r {
        let keep = inactive_only.is_none_or(|a| !a.contains(i));
        if keep {
            ggl[i] += ce.g[i] * ce.g[i] * it.lambda[i];
        }
    }
    DVector::from_iterator(m + r, jgl.iter().chain(ggl.iter()).copied())
}

/// Evaluated merit function with the intermediate quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct MeritEval<T: Scalar> {
    pub value: T,
    pub a_x: T,
    pub q: T,
    pub w: DVector<T>,
    pub b: DVector<T>,
    pub in_t_nu: bool,
}

/// Evaluates `L_{ε,ν,η}` from precomputed constraint data.
pub fn eval_merit_at<T: Scalar>(
    ce: &ConstraintEval<T>,
    it: &Iterate<T>,
    p: &PenaltyParams<T>,
    obj: &ObjectiveSample<T>,
) -> Result<MeritEval<T>> {
    let a_x = eval_a(&ce.g);
    let two = T::lit(2.0);
    if a_x > p.nu / two {
        return Err(SolverError::OutOfPerturbedSet {
            a: a_x.to_f64_lossy(),
            nu: p.nu.to_f64_lossy(),
        });
    }
    let q = eval_q(a_x, &it.lambda, p.nu);
    let eps_q = p.epsilon * q;
    let (w, b) = eval_w(&ce.g, &it.lambda, eps_q);

    let grad_lag = lagrangian_gradient(&obj.grad, ce, it);
    let v = optimality_block(ce, it, &grad_lag, None);

    let lagrangian = obj.f + it.mu.dot(&ce.c) + it.lambda.dot(&ce.g);
    let value = lagrangian
        + ce.c.norm_squared() / (two * p.epsilon)
        + (ce.g.norm_squared() - b.norm_squared()) / (two * eps_q)
        + p.eta / two * v.norm_squared();

    Ok(MeritEval { value, a_x, q, w, b, in_t_nu: true })
}

/// Evaluates `L_{ε,ν,η}` at `it` using `obj` for the objective.
pub fn eval_merit<T: Scalar, P: Problem<T> + ?Sized>(
    problem: &P,
    it: &Iterate<T>,
    p: &PenaltyParams<T>,
    obj: &ObjectiveSample<T>,
) -> Result<MeritEval<T>> {
    let ce = ConstraintEval::new(problem, &it.x);
    eval_merit_at(&ce, it, p, obj)
}

/// Gradient of the merit function and its split into the dominant part
/// `∇L⁽¹⁾` (linear in `∇ₓL, c, g_a, λ_c`) and the higher-order part `∇L⁽²⁾`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeritGradient<T: Scalar> {
    pub grad_x: DVector<T>,
    pub grad_mu: DVector<T>,
    pub grad_lambda: DVector<T>,
    pub part1: DVector<T>,
    pub part2: DVector<T>,
    pub q1: DMatrix<T>,
    pub q2: DMatrix<T>,
    pub m: DMatrix<T>,
    /// `∇ₓL` built from the supplied gradient.
    pub grad_lag: DVector<T>,
    pub q: T,
    pub a_x: T,
    pub w: DVector<T>,
}

impl<T: Scalar> MeritGradient<T> {
    /// `(∇ₓ ; ∇_μ ; ∇_λ)` as one vector.
    pub fn full(&self) -> DVector<T> {
        stack3(&self.grad_x, &self.grad_mu, &self.grad_lambda)
    }
}

/// Gradient of `L_{ε,ν,η}` from precomputed constraint data, using
/// `gradbar`/`hessbar` for the objective derivatives.
///
/// `aset` only affects the split into `part1`/`part2`; the full gradient does
/// not depend on it.
pub fn eval_merit_gradient_at<T: Scalar>(
    ce: &ConstraintEval<T>,
    it: &Iterate<T>,
    p: &PenaltyParams<T>,
    gradbar: &DVector<T>,
    hessbar: &DMatrix<T>,
    aset: &ActiveSet,
) -> Result<MeritGradient<T>> {
    let m = ce.dim_eq();
    let r = ce.dim_ineq();
    let a_x = eval_a(&ce.g);
    let a_nu = p.nu - a_x;
    let q = eval_q(a_x, &it.lambda, p.nu);
    if q <= T::zero() {
        return Err(SolverError::OutOfPerturbedSet {
            a: a_x.to_f64_lossy(),
            nu: p.nu.to_f64_lossy(),
        });
    }
    let eps = p.epsilon;
    let eta = p.eta;
    let eps_q = eps * q;
    let (w, _b) = eval_w(&ce.g, &it.lambda, eps_q);
    let w_sq = w.norm_squared();
    let ell = ell(&ce.g);

    let grad_lag = lagrangian_gradient(gradbar, ce, it);
    let hess_lag = lagrangian_hessian(hessbar, ce, it);
    let (q1, q2) = q_matrices(ce, it, &grad_lag, &hess_lag);
    let mmat = m_matrix(ce);

    // [Q₁ Q₂] as one d × (m + r) block.
    let d = ce.dim_x();
    let mut qq = DMatrix::zeros(d, m + r);
    qq.columns_mut(0, m).copy_from(&q1);
    qq.columns_mut(m, r).copy_from(&q2);

    let three = T::lit(3.0);
    let two = T::lit(2.0);
    let gt_ell = ce.jac_g.tr_mul(&ell);
    let ell_coef = three * w_sq / (two * eps_q * a_nu);
    let lam_coef = w_sq / (eps * a_nu);

    // Full gradient, term by term.
    let v = optimality_block(ce, it, &grad_lag, None);
    let grad_x = &grad_lag
        + &qq * &v * eta
        + ce.jac_c.tr_mul(&ce.c) / eps
        + ce.jac_g.tr_mul(&w) / eps_q
        + &gt_ell * ell_coef;
    let mv = &mmat * &v * eta;
    let grad_mu = &ce.c + mv.rows(0, m);
    let grad_lambda = &w + &it.lambda * lam_coef + mv.rows(m, r);

    // Split: the η-terms act on the inactive part of diag²(g)λ in part1 and
    // on the active part in part2.
    let v_c = optimality_block(ce, it, &grad_lag, Some(aset));
    let mut act = DVector::zeros(m + r);
    for i in aset.iter() {
        act[m + i] = ce.g[i] * ce.g[i] * it.lambda[i];
    }

    let p1x = &grad_lag
        + ce.jac_c.tr_mul(&ce.c) / eps
        + ce.jac_g.tr_mul(&w) / eps_q
        + &qq * &v_c * eta;
    let p1y = &mmat * &v_c * eta;
    let part1 = stack3(
        &p1x,
        &(&ce.c + p1y.rows(0, m)),
        &(&w + p1y.rows(m, r)),
    );

    let p2x = &gt_ell * ell_coef + &qq * &act * eta;
    let p2y = &mmat * &act * eta;
    let part2 = stack3(
        &p2x,
        &p2y.rows(0, m).into_owned(),
        &(&it.lambda * lam_coef + p2y.rows(m, r)),
    );

    Ok(MeritGradient {
        grad_x,
        grad_mu: grad_mu.into_owned(),
        grad_lambda: grad_lambda.into_owned(),
        part1,
        part2,
        q1,
        q2,
        m: mmat,
        grad_lag,
        q,
        a_x,
        w,
    })
}

/// Gradient of `L_{ε,ν,η}` at `it`.
pub fn eval_merit_gradient<T: Scalar, P: Problem<T> + ?Sized>(
    problem: &P,
    it: &Iterate<T>,
    p: &PenaltyParams<T>,
    gradbar: &DVector<T>,
    hessbar: &DMatrix<T>,
    aset: &ActiveSet,
) -> Result<MeritGradient<T>> {
    let ce = ConstraintEval::new(problem, &it.x);
    eval_merit_gradient_at(&ce, it, p, gradbar, hessbar, aset)
}

/// `R = ‖(∇ₓL ; c ; max{g, −λ})‖`.
pub fn kkt_residual_at<T: Scalar>(
    ce: &ConstraintEval<T>,
    it: &Iterate<T>,
    grad_f: &DVector<T>,
) -> T {
    let grad_lag = lagrangian_gradient(grad_f, ce, it);
    let comp = ce.g.zip_map(&it.lambda, |g, l| g.max(-l));
    (grad_lag.norm_squared() + ce.c.norm_squared() + comp.norm_squared()).sqrt()
}

/// KKT residual of `it` with `grad_f` standing in for `∇f(x)`.
pub fn kkt_residual<T: Scalar, P: Problem<T> + ?Sized>(
    problem: &P,
    it: &Iterate<T>,
    grad_f: &DVector<T>,
) -> T {
    let ce = ConstraintEval::new(problem, &it.x);
    kkt_residual_at(&ce, it, grad_f)
}
