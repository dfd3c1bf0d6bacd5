//! Search directions: active-set SQP and the merit-function fallbacks.
//!
//! The SQP direction comes from two coupled dense solves. The primal step
//! solves the equality-constrained QP over the identified active set,
//!
//! ```text
//! [B  Jᵀ  G_aᵀ] [Δx ]     [∇ₓL − G_cᵀλ_c]
//! [J  0   0   ] [Δμ̃ ] = − [c            ]
//! [G_a 0  0   ] [Δλ̃_a]    [g_a          ]
//! ```
//!
//! and the dual step for all multipliers solves
//!
//! ```text
//! M (Δμ; Δλ) = −{(J∇ₓL; G∇ₓL + Π_c(diag²(g)λ)) + (Q₁ᵀ; Q₂ᵀ)Δx}.
//! ```

use crate::error::{Result, SolverError};
use crate::merit::{
    eval_a, eval_q, lagrangian_gradient, lagrangian_hessian, m_matrix, m_matrix_with,
    optimality_block, q_matrices, split3, stack3, stacked_jacobian, Iterate, MeritGradient,
    PenaltyParams,
};
use crate::problem::ConstraintEval;
use crate::scalar::{pivot_tolerance, residual_tolerance, Scalar};
use nalgebra::{DMatrix, DVector};

/// Inequality indices treated as equalities, `{i : gᵢ ≥ −εqλᵢ}`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ActiveSet {
    mask: Vec<bool>,
}

impl ActiveSet {
    pub fn from_indices(r: usize, indices: &[usize]) -> Self {
        let mut mask = vec![false; r];
        for &i in indices {
            mask[i] = true;
        }
        Self { mask }
    }

    pub fn empty(r: usize) -> Self {
        Self { mask: vec![false; r] }
    }

    pub fn contains(&self, i: usize) -> bool {
        self.mask[i]
    }

    /// Active indices in increasing order.
    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask.iter().enumerate().filter(|(_, &a)| a).map(|(i, _)| i)
    }

    pub fn complement(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask.iter().enumerate().filter(|(_, &a)| !a).map(|(i, _)| i)
    }

    pub fn indices(&self) -> Vec<usize> {
        self.iter().collect()
    }

    pub fn len(&self) -> usize {
        self.mask.iter().filter(|&&a| a).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of inequality constraints `r`.
    pub fn universe(&self) -> usize {
        self.mask.len()
    }
}

pub fn identify_active_set<T: Scalar>(g: &DVector<T>, lambda: &DVector<T>, eps_q: T) -> ActiveSet {
    ActiveSet {
        mask: g.iter().zip(lambda.iter()).map(|(&gi, &li)| gi >= -eps_q * li).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DirectionKind {
    Sqp,
    RegularizedNewton,
    SteepestDescent,
}

impl DirectionKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            DirectionKind::Sqp => "sqp",
            DirectionKind::RegularizedNewton => "reg-newton",
            DirectionKind::SteepestDescent => "steepest-descent",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DirectionDiagnostics<T: Scalar> {
    /// Ratio of extreme pivot magnitudes of the `K_a` factorization.
    pub cond_estimate_ka: T,
    pub cond_estimate_m: T,
    /// `(∇L⁽¹⁾)ᵀΔ`.
    pub descent_lhs1: T,
    /// `(∇L⁽²⁾)ᵀΔ`.
    pub descent_lhs2: T,
    /// `‖(Δx; J∇ₓL; G∇ₓL + Π_c(diag²(g)λ))‖²`.
    pub descent_rhs: T,
}

/// A search direction `(Δx, Δμ, Δλ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionResult<T: Scalar> {
    pub kind: DirectionKind,
    pub dx: DVector<T>,
    pub dmu: DVector<T>,
    pub dlambda: DVector<T>,
    /// Whether the SQP system was solvable at the iterate this direction was
    /// computed for. Always true for `Sqp`.
    pub solvable: bool,
    pub diag: DirectionDiagnostics<T>,
}

impl<T: Scalar> DirectionResult<T> {
    pub fn stacked(&self) -> DVector<T> {
        stack3(&self.dx, &self.dmu, &self.dlambda)
    }

    pub fn norm(&self) -> T {
        self.stacked().norm()
    }

    /// Fills `descent_lhs1` and `descent_lhs2` from a merit gradient split.
    pub fn with_descent_products(mut self, mg: &MeritGradient<T>) -> Self {
        let s = self.stacked();
        self.diag.descent_lhs1 = mg.part1.dot(&s);
        self.diag.descent_lhs2 = mg.part2.dot(&s);
        self
    }

    /// `(x + αΔx, μ + αΔμ, λ + αΔλ)`.
    pub fn step_from(&self, it: &Iterate<T>, alpha: T) -> Iterate<T> {
        Iterate::new(
            &it.x + &self.dx * alpha,
            &it.mu + &self.dmu * alpha,
            &it.lambda + &self.dlambda * alpha,
        )
    }
}

/// Which block of the coupled system failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SingularBlock {
    Kkt,
    M,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SqpSolve<T: Scalar> {
    Solved(DirectionResult<T>),
    Unsolvable(SingularBlock),
}

impl<T: Scalar> SqpSolve<T> {
    pub fn direction(&self) -> Option<&DirectionResult<T>> {
        match self {
            SqpSolve::Solved(d) => Some(d),
            SqpSolve::Unsolvable(_) => None,
        }
    }

    pub fn is_solvable(&self) -> bool {
        matches!(self, SqpSolve::Solved(_))
    }
}

/// Dense solve with the singularity rule: full-pivot LU, reject when the
/// smallest pivot is below `tol·max(1, ‖A‖∞)` or the residual exceeds
/// `tol'·(1 + ‖b‖)`. Returns the solution and the pivot-ratio estimate.
pub fn guarded_solve<T: Scalar>(a: &DMatrix<T>, b: &DVector<T>) -> Option<(DVector<T>, T)> {
    let n = a.nrows();
    if n == 0 {
        return Some((DVector::zeros(0), T::one()));
    }
    let norm_inf = a
        .row_iter()
        .map(|row| row.iter().fold(T::zero(), |acc, v| acc + v.abs()))
        .fold(T::zero(), |acc, v| acc.max(v));
    let lu = a.clone().full_piv_lu();
    let u = lu.u();
    let (mut pmin, mut pmax) = (T::max_value().unwrap(), T::zero());
    for i in 0..n {
        let p = u[(i, i)].abs();
        pmin = pmin.min(p);
        pmax = pmax.max(p);
    }
    if !(pmin >= pivot_tolerance::<T>() * norm_inf.max(T::one())) {
        return None;
    }
    let x = lu.solve(b)?;
    let res = (a * &x - b).norm();
    if !(res <= residual_tolerance::<T>() * (T::one() + b.norm())) {
        return None;
    }
    Some((x, pmax / pmin))
}

/// Primal and second-order inputs to the SQP system.
///
/// `grad` feeds `∇̄ₓL` on the right-hand sides; `(q_grad, q_hess)` feed the
/// `Q̄₁, Q̄₂` matrices. The adaptive scheme passes one batch for both, the
/// local scheme two independent samples.
#[derive(Debug, Clone, Copy)]
pub struct SqpInputs<'a, T: Scalar> {
    pub grad: &'a DVector<T>,
    pub q_grad: &'a DVector<T>,
    pub q_hess: &'a DMatrix<T>,
}

/// Solves the coupled active-set SQP system.
pub fn solve_sqp_system<T: Scalar>(
    ce: &ConstraintEval<T>,
    it: &Iterate<T>,
    aset: &ActiveSet,
    b: &DMatrix<T>,
    inputs: SqpInputs<'_, T>,
) -> SqpSolve<T> {
    let d = ce.dim_x();
    let m = ce.dim_eq();
    let r = ce.dim_ineq();
    let act = aset.indices();
    let na = act.len();
    let n = d + m + na;

    let grad_lag = lagrangian_gradient(inputs.grad, ce, it);

    let mut ka = DMatrix::zeros(n, n);
    ka.view_mut((0, 0), (d, d)).copy_from(b);
    for i in 0..m {
        for j in 0..d {
            ka[(d + i, j)] = ce.jac_c[(i, j)];
            ka[(j, d + i)] = ce.jac_c[(i, j)];
        }
    }
    for (k, &i) in act.iter().enumerate() {
        for j in 0..d {
            ka[(d + m + k, j)] = ce.jac_g[(i, j)];
            ka[(j, d + m + k)] = ce.jac_g[(i, j)];
        }
    }

    let mut rhs_a = DVector::zeros(n);
    {
        let mut top = grad_lag.clone();
        for i in aset.complement() {
            let li = it.lambda[i];
            for j in 0..d {
                top[j] -= ce.jac_g[(i, j)] * li;
            }
        }
        rhs_a.rows_mut(0, d).copy_from(&(-top));
        rhs_a.rows_mut(d, m).copy_from(&(-&ce.c));
        for (k, &i) in act.iter().enumerate() {
            rhs_a[d + m + k] = -ce.g[i];
        }
    }

    let Some((sol_a, cond_ka)) = guarded_solve(&ka, &rhs_a) else {
        return SqpSolve::Unsolvable(SingularBlock::Kkt);
    };
    let dx = sol_a.rows(0, d).into_owned();

    let q_grad_lag = lagrangian_gradient(inputs.q_grad, ce, it);
    let q_hess_lag = lagrangian_hessian(inputs.q_hess, ce, it);
    let (q1, q2) = q_matrices(ce, it, &q_grad_lag, &q_hess_lag);
    let mmat = m_matrix(ce);
    let v_c = optimality_block(ce, it, &grad_lag, Some(aset));
    let mut qt_dx = DVector::zeros(m + r);
    qt_dx.rows_mut(0, m).copy_from(&q1.tr_mul(&dx));
    qt_dx.rows_mut(m, r).copy_from(&q2.tr_mul(&dx));
    let rhs_m = -(&v_c + qt_dx);

    let Some((sol_m, cond_m)) = guarded_solve(&mmat, &rhs_m) else {
        return SqpSolve::Unsolvable(SingularBlock::M);
    };

    let descent_rhs = dx.norm_squared() + v_c.norm_squared();
    SqpSolve::Solved(DirectionResult {
        kind: DirectionKind::Sqp,
        dx,
        dmu: sol_m.rows(0, m).into_owned(),
        dlambda: sol_m.rows(m, r).into_owned(),
        solvable: true,
        diag: DirectionDiagnostics {
            cond_estimate_ka: cond_ka,
            cond_estimate_m: cond_m,
            descent_lhs1: T::zero(),
            descent_lhs2: T::zero(),
            descent_rhs,
        },
    })
}

/// Symmetric matrix `Ĥ = H + (γ_B + ‖H‖₂)I` approximating the merit Hessian,
/// with `H` assembled blockwise from `B`, the Jacobians and the active set.
pub fn build_reg_newton_matrix<T: Scalar>(
    ce: &ConstraintEval<T>,
    it: &Iterate<T>,
    aset: &ActiveSet,
    p: &PenaltyParams<T>,
    b: &DMatrix<T>,
    gamma_b: T,
) -> DMatrix<T> {
    let d = ce.dim_x();
    let m = ce.dim_eq();
    let r = ce.dim_ineq();
    let n = d + m + r;
    let eta = p.eta;
    let eps = p.epsilon;
    let q = eval_q(eval_a(&ce.g), &it.lambda, p.nu);
    let eps_q = eps * q;

    let j = &ce.jac_c;
    let g = &ce.jac_g;
    let mut g_a = g.clone();
    for i in aset.complement() {
        g_a.row_mut(i).fill(T::zero());
    }

    let jtj = j.tr_mul(j);
    let gtg = g.tr_mul(g);
    let h_xx = b + (b * (&jtj + &gtg) * b) * eta + &jtj / eps + g_a.tr_mul(&g_a) / eps_q;

    let mut g_c = ce.g.clone();
    for i in aset.iter() {
        g_c[i] = T::zero();
    }
    let m_c = m_matrix_with(ce, &g_c);
    let jg = stacked_jacobian(ce);
    let mut j_ga = DMatrix::zeros(m + r, d);
    j_ga.rows_mut(0, m).copy_from(j);
    j_ga.rows_mut(m, r).copy_from(&g_a);
    let h_yx = j_ga + (&m_c * &jg * b) * eta;

    let mut h_yy = (&m_c * &m_c) * eta;
    for i in aset.complement() {
        h_yy[(m + i, m + i)] -= eps_q;
    }

    let mut h = DMatrix::zeros(n, n);
    h.view_mut((0, 0), (d, d)).copy_from(&h_xx);
    h.view_mut((d, 0), (m + r, d)).copy_from(&h_yx);
    h.view_mut((0, d), (d, m + r)).copy_from(&h_yx.transpose());
    h.view_mut((d, d), (m + r, m + r)).copy_from(&h_yy);
    let h = (&h + h.transpose()) * T::lit(0.5);

    let op_norm = h
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(T::zero(), |acc, e| acc.max(e.abs()));
    let shift = gamma_b + op_norm;
    let mut hhat = h;
    for i in 0..n {
        hhat[(i, i)] += shift;
    }
    hhat
}

/// Fallback direction `Δ̂ = −Ĥ⁻¹∇L`; `None` means `Ĥ = I` (steepest descent).
///
/// `dims` is `(d, m)`; `solvable` records whether the SQP system was solvable
/// at this iterate.
pub fn solve_fallback<T: Scalar>(
    hhat: Option<&DMatrix<T>>,
    merit_grad: &DVector<T>,
    dims: (usize, usize),
    solvable: bool,
) -> Result<DirectionResult<T>> {
    let (d, m) = dims;
    let (step, kind) = match hhat {
        None => (-merit_grad, DirectionKind::SteepestDescent),
        Some(h) => {
            let chol = h.clone().cholesky().ok_or(SolverError::SingularRegularizedNewton)?;
            let step = -chol.solve(merit_grad);
            let res = (h * &step + merit_grad).norm();
            if !(res <= T::lit(1e-10).max(T::machine_eps() * T::lit(1e3)) * (T::one() + merit_grad.norm()) * h.norm().max(T::one())) {
                return Err(SolverError::SingularRegularizedNewton);
            }
            (step, DirectionKind::RegularizedNewton)
        }
    };
    let (dx, dmu, dlambda) = split3(&step, d, m);
    Ok(DirectionResult {
        kind,
        dx,
        dmu,
        dlambda,
        solvable,
        diag: DirectionDiagnostics::default(),
    })
}
