//! Smooth nonlinear programs with exact derivative oracles.
//!
//! A problem has the form
//!
//! ```text
//! min f(x)   s.t.   c(x) = 0,   g(x) <= 0
//! ```
//!
//! with `x ∈ R^d`, `c: R^d -> R^m` and `g: R^d -> R^r`. Only the objective is
//! treated as stochastic by the solvers; constraints are always evaluated
//! exactly.

use crate::merit::Iterate;
use crate::scalar::Scalar;
use nalgebra::{DMatrix, DVector};

/// A constrained problem with derivatives up to second order.
///
/// Implementations must be pure: the same `x` always yields the same values.
pub trait Problem<T: Scalar>: Send + Sync {
    fn name(&self) -> &str;
    fn dim_x(&self) -> usize;
    fn dim_eq(&self) -> usize;
    fn dim_ineq(&self) -> usize;

    fn f(&self, x: &DVector<T>) -> T;
    fn grad_f(&self, x: &DVector<T>) -> DVector<T>;
    fn hess_f(&self, x: &DVector<T>) -> DMatrix<T>;

    /// Equality constraint values, length `m`.
    fn c(&self, x: &DVector<T>) -> DVector<T>;
    /// Equality Jacobian `J`, `m × d`.
    fn jac_c(&self, x: &DVector<T>) -> DMatrix<T>;
    fn hess_c(&self, x: &DVector<T>, i: usize) -> DMatrix<T>;

    /// Inequality constraint values, length `r`.
    fn g(&self, x: &DVector<T>) -> DVector<T>;
    /// Inequality Jacobian `G`, `r × d`.
    fn jac_g(&self, x: &DVector<T>) -> DMatrix<T>;
    fn hess_g(&self, x: &DVector<T>, i: usize) -> DMatrix<T>;

    fn x0(&self) -> DVector<T>;
    fn mu0(&self) -> DVector<T> {
        DVector::zeros(self.dim_eq())
    }
    fn lambda0(&self) -> DVector<T> {
        DVector::zeros(self.dim_ineq())
    }

    /// A primal-dual KKT triple derived by hand, when one is known.
    fn known_kkt(&self) -> Option<Iterate<T>> {
        None
    }

    fn initial_iterate(&self) -> Iterate<T> {
        Iterate::new(self.x0(), self.mu0(), self.lambda0())
    }
}

/// All constraint quantities at one primal point.
#[derive(Debug, Clone)]
pub struct ConstraintEval<T: Scalar> {
    pub c: DVector<T>,
    pub jac_c: DMatrix<T>,
    pub g: DVector<T>,
    pub jac_g: DMatrix<T>,
    pub hess_c: Vec<DMatrix<T>>,
    pub hess_g: Vec<DMatrix<T>>,
}

impl<T: Scalar> ConstraintEval<T> {
    pub fn new<P: Problem<T> + ?Sized>(problem: &P, x: &DVector<T>) -> Self {
        let m = problem.dim_eq();
        let r = problem.dim_ineq();
        Self {
            c: problem.c(x),
            jac_c: problem.jac_c(x),
            g: problem.g(x),
            jac_g: problem.jac_g(x),
            hess_c: (0..m).map(|i| problem.hess_c(x, i)).collect(),
            hess_g: (0..r).map(|i| problem.hess_g(x, i)).collect(),
        }
    }

    pub fn dim_x(&self) -> usize {
        self.jac_c.ncols().max(self.jac_g.ncols())
    }

    pub fn dim_eq(&self) -> usize {
        self.c.len()
    }

    pub fn dim_ineq(&self) -> usize {
        self.g.len()
    }
}

pub fn check_finite<T: Scalar>(v: &DVector<T>, what: &'static str) -> crate::Result<()> {
    if v.iter().all(|e| e.is_finite()) {
        Ok(())
    } else {
        Err(crate::SolverError::Domain(what))
    }
}

#[inline]
fn lit<T: Scalar>(v: f64) -> T {
    T::lit(v)
}

fn vec_of<T: Scalar>(vals: &[f64]) -> DVector<T> {
    DVector::from_iterator(vals.len(), vals.iter().map(|&v| lit(v)))
}

fn empty_rows<T: Scalar>(d: usize) -> DMatrix<T> {
    DMatrix::zeros(0, d)
}

/// `min x²  s.t.  1 - x <= 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct BoundedSquare;

impl<T: Scalar> Problem<T> for BoundedSquare {
    fn name(&self) -> &str {
        "p1-bounded-square"
    }
    fn dim_x(&self) -> usize {
        1
    }
    fn dim_eq(&self) -> usize {
        0
    }
    fn dim_ineq(&self) -> usize {
        1
    }
    fn f(&self, x: &DVector<T>) -> T {
        x[0] * x[0]
    }
    fn grad_f(&self, x: &DVector<T>) -> DVector<T> {
        DVector::from_element(1, lit::<T>(2.0) * x[0])
    }
    fn hess_f(&self, _x: &DVector<T>) -> DMatrix<T> {
        DMatrix::from_element(1, 1, lit(2.0))
    }
    fn c(&self, _x: &DVector<T>) -> DVector<T> {
        DVector::zeros(0)
    }
    fn jac_c(&self, _x: &DVector<T>) -> DMatrix<T> {
        empty_rows(1)
    }
    fn hess_c(&self, _x: &DVector<T>, _i: usize) -> DMatrix<T> {
        unreachable!("problem has no equality constraints")
    }
    fn g(&self, x: &DVector<T>) -> DVector<T> {
        DVector::from_element(1, T::one() - x[0])
    }
    fn jac_g(&self, _x: &DVector<T>) -> DMatrix<T> {
        DMatrix::from_element(1, 1, -T::one())
    }
    fn hess_g(&self, _x: &DVector<T>, _i: usize) -> DMatrix<T> {
        DMatrix::zeros(1, 1)
    }
    fn x0(&self) -> DVector<T> {
        DVector::zeros(1)
    }
    fn known_kkt(&self) -> Option<Iterate<T>> {
        // 2x - λ = 0 and 1 - x = 0.
        Some(Iterate::new(vec_of(&[1.0]), DVector::zeros(0), vec_of(&[2.0])))
    }
}

/// `min (x₁-1)² + (x₂-2)²  s.t.  x₁ + x₂ - 2 = 0,  -x₁ <= 0,  -x₂ <= 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ProjectedPoint;

impl<T: Scalar> Problem<T> for ProjectedPoint {
    fn name(&self) -> &str {
        "p2-projected-point"
    }
    fn dim_x(&self) -> usize {
        2
    }
    fn dim_eq(&self) -> usize {
        1
    }
    fn dim_ineq(&self) -> usize {
        2
    }
    fn f(&self, x: &DVector<T>) -> T {
        let a = x[0] - T::one();
        let b = x[1] - lit(2.0);
        a * a + b * b
    }
    fn grad_f(&self, x: &DVector<T>) -> DVector<T> {
        let two: T = lit(2.0);
        DVector::from_vec(vec![two * (x[0] - T::one()), two * (x[1] - two)])
    }
    fn hess_f(&self, _x: &DVector<T>) -> DMatrix<T> {
        DMatrix::from_diagonal_element(2, 2, lit(2.0))
    }
    fn c(&self, x: &DVector<T>) -> DVector<T> {
        DVector::from_element(1, x[0] + x[1] - lit(2.0))
    }
    fn jac_c(&self, _x: &DVector<T>) -> DMatrix<T> {
        DMatrix::from_row_slice(1, 2, &[T::one(), T::one()])
    }
    fn hess_c(&self, _x: &DVector<T>, _i: usize) -> DMatrix<T> {
        DMatrix::zeros(2, 2)
    }
    fn g(&self, x: &DVector<T>) -> DVector<T> {
        DVector::from_vec(vec![-x[0], -x[1]])
    }
    fn jac_g(&self, _x: &DVector<T>) -> DMatrix<T> {
        -DMatrix::identity(2, 2)
    }
    fn hess_g(&self, _x: &DVector<T>, _i: usize) -> DMatrix<T> {
        DMatrix::zeros(2, 2)
    }
    fn x0(&self) -> DVector<T> {
        vec_of(&[2.0, 2.0])
    }
    fn known_kkt(&self) -> Option<Iterate<T>> {
        // Projection of (1, 2) onto x₁ + x₂ = 2 is (0.5, 1.5); both bounds slack.
        Some(Iterate::new(vec_of(&[0.5, 1.5]), vec_of(&[1.0]), vec_of(&[0.0, 0.0])))
    }
}

/// `min x₁ + x₂  s.t.  x₁² + x₂² - 2 <= 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct LinearOverDisk;

impl<T: Scalar> Problem<T> for LinearOverDisk {
    fn name(&self) -> &str {
        "p3-linear-over-disk"
    }
    fn dim_x(&self) -> usize {
        2
    }
    fn dim_eq(&self) -> usize {
        0
    }
    fn dim_ineq(&self) -> usize {
        1
    }
    fn f(&self, x: &DVector<T>) -> T {
        x[0] + x[1]
    }
    fn grad_f(&self, _x: &DVector<T>) -> DVector<T> {
        DVector::from_element(2, T::one())
    }
    fn hess_f(&self, _x: &DVector<T>) -> DMatrix<T> {
        DMatrix::zeros(2, 2)
    }
    fn c(&self, _x: &DVector<T>) -> DVector<T> {
        DVector::zeros(0)
    }
    fn jac_c(&self, _x: &DVector<T>) -> DMatrix<T> {
        empty_rows(2)
    }
    fn hess_c(&self, _x: &DVector<T>, _i: usize) -> DMatrix<T> {
        unreachable!("problem has no equality constraints")
    }
    fn g(&self, x: &DVector<T>) -> DVector<T> {
        DVector::from_element(1, x[0] * x[0] + x[1] * x[1] - lit(2.0))
    }
    fn jac_g(&self, x: &DVector<T>) -> DMatrix<T> {
        let two: T = lit(2.0);
        DMatrix::from_row_slice(1, 2, &[two * x[0], two * x[1]])
    }
    fn hess_g(&self, _x: &DVector<T>, _i: usize) -> DMatrix<T> {
        DMatrix::from_diagonal_element(2, 2, lit(2.0))
    }
    fn x0(&self) -> DVector<T> {
        vec_of(&[0.5, 1.0])
    }
    fn known_kkt(&self) -> Option<Iterate<T>> {
        // 1 + 2λx_i = 0 on the circle gives x = (-1, -1), λ = 1/2.
        Some(Iterate::new(vec_of(&[-1.0, -1.0]), DVector::zeros(0), vec_of(&[0.5])))
    }
}

/// `min (x₁-1)² + (x₂-1)²  s.t.  x₁² + x₂² - 4 <= 0`; the constraint is slack at
/// the solution.
#[derive(Debug, Clone, Copy, Default)]
pub struct SlackDisk;

impl<T: Scalar> Problem<T> for SlackDisk {
    fn name(&self) -> &str {
        "p4-slack-disk"
    }
    fn dim_x(&self) -> usize {
        2
    }
    fn dim_eq(&self) -> usize {
        0
    }
    fn dim_ineq(&self) -> usize {
        1
    }
    fn f(&self, x: &DVector<T>) -> T {
        let a = x[0] - T::one();
        let b = x[1] - T::one();
        a * a + b * b
    }
    fn grad_f(&self, x: &DVector<T>) -> DVector<T> {
        let two: T = lit(2.0);
        DVector::from_vec(vec![two * (x[0] - T::one()), two * (x[1] - T::one())])
    }
    fn hess_f(&self, _x: &DVector<T>) -> DMatrix<T> {
        DMatrix::from_diagonal_element(2, 2, lit(2.0))
    }
    fn c(&self, _x: &DVector<T>) -> DVector<T> {
        DVector::zeros(0)
    }
    fn jac_c(&self, _x: &DVector<T>) -> DMatrix<T> {
        empty_rows(2)
    }
    fn hess_c(&self, _x: &DVector<T>, _i: usize) -> DMatrix<T> {
        unreachable!("problem has no equality constraints")
    }
    fn g(&self, x: &DVector<T>) -> DVector<T> {
        DVector::from_element(1, x[0] * x[0] + x[1] * x[1] - lit(4.0))
    }
    fn jac_g(&self, x: &DVector<T>) -> DMatrix<T> {
        let two: T = lit(2.0);
        DMatrix::from_row_slice(1, 2, &[two * x[0], two * x[1]])
    }
    fn hess_g(&self, _x: &DVector<T>, _i: usize) -> DMatrix<T> {
        DMatrix::from_diagonal_element(2, 2, lit(2.0))
    }
    fn x0(&self) -> DVector<T> {
        vec_of(&[-1.0, 0.5])
    }
    fn known_kkt(&self) -> Option<Iterate<T>> {
        // Unconstrained minimizer (1, 1) has g = -2 < 0, so λ = 0.
        Some(Iterate::new(vec_of(&[1.0, 1.0]), DVector::zeros(0), vec_of(&[0.0])))
    }
}

/// `min (x₁-2)² + (x₂-2)² + x₃²  s.t.  x₁ + x₂ + x₃ - 3 = 0,
/// x₁ + x₂ - 2 <= 0,  x₁ - 3 <= 0`.
///
/// The first inequality is active at the solution, the bound on `x₁` slack.
/// The start lies on the plane and on the boundary of the active half-space.
#[derive(Debug, Clone, Copy, Default)]
pub struct PlaneHalfspace;

impl<T: Scalar> Problem<T> for PlaneHalfspace {
    fn name(&self) -> &str {
        "p5-plane-halfspace"
    }
    fn dim_x(&self) -> usize {
        3
    }
    fn dim_eq(&self) -> usize {
        1
    }
    fn dim_ineq(&self) -> usize {
        2
    }
    fn f(&self, x: &DVector<T>) -> T {
        let two: T = lit(2.0);
        let a = x[0] - two;
        let b = x[1] - two;
        a * a + b * b + x[2] * x[2]
    }
    fn grad_f(&self, x: &DVector<T>) -> DVector<T> {
        let two: T = lit(2.0);
        DVector::from_vec(vec![two * (x[0] - two), two * (x[1] - two), two * x[2]])
    }
    fn hess_f(&self, _x: &DVector<T>) -> DMatrix<T> {
        DMatrix::from_diagonal_element(3, 3, lit(2.0))
    }
    fn c(&self, x: &DVector<T>) -> DVector<T> {
        DVector::from_element(1, x[0] + x[1] + x[2] - lit(3.0))
    }
    fn jac_c(&self, _x: &DVector<T>) -> DMatrix<T> {
        DMatrix::from_element(1, 3, T::one())
    }
    fn hess_c(&self, _x: &DVector<T>, _i: usize) -> DMatrix<T> {
        DMatrix::zeros(3, 3)
    }
    fn g(&self, x: &DVector<T>) -> DVector<T> {
        DVector::from_vec(vec![x[0] + x[1] - lit(2.0), x[0] - lit(3.0)])
    }
    fn jac_g(&self, _x: &DVector<T>) -> DMatrix<T> {
        let (o, z) = (T::one(), T::zero());
        DMatrix::from_row_slice(2, 3, &[o, o, z, o, z, z])
    }
    fn hess_g(&self, _x: &DVector<T>, _i: usize) -> DMatrix<T> {
        DMatrix::zeros(3, 3)
    }
    fn x0(&self) -> DVector<T> {
        vec_of(&[0.0, 2.0, 1.0])
    }
    fn known_kkt(&self) -> Option<Iterate<T>> {
        // On the plane with x₁ + x₂ = 2 the objective is (1+x₃)²/2 + x₃²
        // after symmetrizing, minimized over x₃ >= 1 at x₃ = 1. Third row:
        // 2 + μ = 0; first row: -2 + μ + λ₁ = 0.
        Some(Iterate::new(
            vec_of(&[1.0, 1.0, 1.0]),
            vec_of(&[-2.0]),
            vec_of(&[4.0, 0.0]),
        ))
    }
}

/// Weighted separable quadratic in five variables with the box `[-1, 1]⁵`
/// written as ten inequalities (`x_i - 1 <= 0` then `-x_i - 1 <= 0`).
#[derive(Debug, Clone, Copy, Default)]
pub struct BoxQuadratic;

impl BoxQuadratic {
    const TARGET: [f64; 5] = [2.0, -1.5, 0.5, 3.0, -2.0];
    const WEIGHT: [f64; 5] = [1.0, 2.0, 1.0, 0.5, 1.5];
}

impl<T: Scalar> Problem<T> for BoxQuadratic {
    fn name(&self) -> &str {
        "p6-box-quadratic"
    }
    fn dim_x(&self) -> usize {
        5
    }
    fn dim_eq(&self) -> usize {
        0
    }
    fn dim_ineq(&self) -> usize {
        10
    }
    fn f(&self, x: &DVector<T>) -> T {
        (0..5).fold(T::zero(), |acc, i| {
            let e = x[i] - lit(Self::TARGET[i]);
            acc + lit::<T>(Self::WEIGHT[i]) * e * e
        })
    }
    fn grad_f(&self, x: &DVector<T>) -> DVector<T> {
        DVector::from_fn(5, |i, _| {
            lit::<T>(2.0 * Self::WEIGHT[i]) * (x[i] - lit(Self::TARGET[i]))
        })
    }
    fn hess_f(&self, _x: &DVector<T>) -> DMatrix<T> {
        DMatrix::from_diagonal(&DVector::from_fn(5, |i, _| lit(2.0 * Self::WEIGHT[i])))
    }
    fn c(&self, _x: &DVector<T>) -> DVector<T> {
        DVector::zeros(0)
    }
    fn jac_c(&self, _x: &DVector<T>) -> DMatrix<T> {
        empty_rows(5)
    }
    fn hess_c(&self, _x: &DVector<T>, _i: usize) -> DMatrix<T> {
        unreachable!("problem has no equality constraints")
    }
    fn g(&self, x: &DVector<T>) -> DVector<T> {
        DVector::from_fn(10, |k, _| {
            let i = k / 2;
            if k % 2 == 0 {
                x[i] - T::one()
            } else {
                -x[i] - T::one()
            }
        })
    }
    fn jac_g(&self, _x: &DVector<T>) -> DMatrix<T> {
        DMatrix::from_fn(10, 5, |k, j| {
            if k / 2 != j {
                T::zero()
            } else if k % 2 == 0 {
                T::one()
            } else {
                -T::one()
            }
        })
    }
    fn hess_g(&self, _x: &DVector<T>, _i: usize) -> DMatrix<T> {
        DMatrix::zeros(5, 5)
    }
    fn x0(&self) -> DVector<T> {
        DVector::zeros(5)
    }
    fn known_kkt(&self) -> Option<Iterate<T>> {
        // Clip the targets to the box; multipliers are 2w|t - x| on the bound hit.
        let mut x = [0.0; 5];
        let mut lambda = [0.0; 10];
        for i in 0..5 {
            let t = Self::TARGET[i];
            x[i] = t.clamp(-1.0, 1.0);
            let m = 2.0 * Self::WEIGHT[i] * (t - x[i]);
            if m > 0.0 {
                lambda[2 * i] = m;
            } else if m < 0.0 {
                lambda[2 * i + 1] = -m;
            }
        }
        Some(Iterate::new(vec_of(&x), DVector::zeros(0), vec_of(&lambda)))
    }
}

/// The built-in test suite, in a fixed order.
pub fn builtin_suite<T: Scalar>() -> Vec<Box<dyn Problem<T>>> {
    vec![
        Box::new(BoundedSquare),
        Box::new(ProjectedPoint),
        Box::new(LinearOverDisk),
        Box::new(SlackDisk),
        Box::new(PlaneHalfspace),
        Box::new(BoxQuadratic),
    ]
}

/// Looks up a suite problem by its name or by its short `pN` prefix.
pub fn problem_by_name<T: Scalar>(name: &str) -> Option<Box<dyn Problem<T>>> {
    builtin_suite::<T>().into_iter().find(|p| {
        p.name() == name || p.name().split('-').next() == Some(name)
    })
}
