mod common;

use common::{kkt, rng, smooth_point, v};
use stosqp::kkt_directions::{
    build_reg_newton_matrix, identify_active_set, solve_fallback, solve_sqp_system, DirectionKind, SqpInputs,
    SqpSolve,
};
use stosqp::merit::{
    eval_a, eval_merit_gradient_at, eval_q, lagrangian_gradient, lagrangian_hessian, m_matrix, optimality_block,
    q_matrices,
};
use stosqp::nalgebra::{DMatrix, DVector};
use stosqp::oracle::{sample_batch, NoiseModel};
use stosqp::problem::{BoundedSquare, ConstraintEval, Problem};
use stosqp::{builtin_suite, ActiveSet, Iterate, PenaltyParams, SingularBlock, StreamKey};

fn exact_sqp(problem: &dyn Problem<f64>, it: &Iterate, aset: &ActiveSet) -> SqpSolve<f64> {
    let ce = ConstraintEval::new(problem, &it.x);
    let grad = problem.grad_f(&it.x);
    let hess = problem.hess_f(&it.x);
    let b = DMatrix::identity(problem.dim_x(), problem.dim_x());
    solve_sqp_system(&ce, it, aset, &b, SqpInputs { grad: &grad, q_grad: &grad, q_hess: &hess })
}

#[test]
fn sqp_direction_vanishes_at_kkt_points() {
    for problem in builtin_suite::<f64>() {
        let it = kkt(problem.as_ref());
        let g = problem.g(&it.x);
        let aset = ActiveSet::from_indices(g.len(), &(0..g.len()).filter(|&i| g[i].abs() <= 1e-12).collect::<Vec<_>>());
        let dir = exact_sqp(problem.as_ref(), &it, &aset);
        let dir = dir.direction().unwrap_or_else(|| panic!("{}: unsolvable at KKT", problem.name()));
        assert!(dir.norm() <= 1e-9, "{}: ‖Δ‖ = {:e}", problem.name(), dir.norm());
        assert_eq!(dir.kind, DirectionKind::Sqp);
        assert!(dir.solvable);
    }
}

#[test]
fn p1_direction_by_hand() {
    let it = Iterate::new(v(&[2.0]), v(&[]), v(&[0.0]));
    let dir = exact_sqp(&BoundedSquare, &it, &ActiveSet::empty(1));
    let dir = dir.direction().unwrap();
    assert!((dir.dx[0] + 4.0).abs() <= 1e-12);
    assert!((dir.dlambda[0] + 2.0).abs() <= 1e-12);
}

#[test]
fn active_set_examples() {
    assert_eq!(identify_active_set(&v(&[-1.0, 0.0]), &v(&[0.0, 1.0]), 0.5).indices(), vec![1]);
    assert!(identify_active_set(&v(&[-0.1, -3.0]), &v(&[0.0, 0.0]), 2.0).is_empty());
    assert_eq!(identify_active_set(&v(&[0.0, 0.0]), &v(&[0.0, 0.0]), 1.0).indices(), vec![0, 1]);
}

#[test]
fn sqp_solves_satisfy_both_linear_systems() {
    let p = PenaltyParams::new(0.5, 4.0, 1.0);
    let mut rng = rng(5);
    for problem in builtin_suite::<f64>() {
        for _ in 0..50 {
            let it = smooth_point(&mut rng, problem.as_ref(), &p, 1.0, 0.0);
            let ce = ConstraintEval::new(problem.as_ref(), &it.x);
            let q = eval_q(eval_a(&ce.g), &it.lambda, p.nu);
            let aset = identify_active_set(&ce.g, &it.lambda, p.epsilon * q);
            let SqpSolve::Solved(dir) = exact_sqp(problem.as_ref(), &it, &aset) else {
                continue;
            };

            let lin_c = &ce.jac_c * &dir.dx + &ce.c;
            assert!(lin_c.norm() <= 1e-10 * (1.0 + ce.c.norm()), "{}", problem.name());
            for i in aset.iter() {
                let lin = (ce.jac_g.row(i) * &dir.dx)[0] + ce.g[i];
                assert!(lin.abs() <= 1e-10 * (1.0 + ce.g.norm()), "{}", problem.name());
            }

            let grad = problem.grad_f(&it.x);
            let gl = lagrangian_gradient(&grad, &ce, &it);
            let hl = lagrangian_hessian(&problem.hess_f(&it.x), &ce, &it);
            let (q1, q2) = q_matrices(&ce, &it, &gl, &hl);
            let mut qt = q1.tr_mul(&dir.dx).data.as_vec().clone();
            qt.extend(q2.tr_mul(&dir.dx).iter());
            let rhs = -(optimality_block(&ce, &it, &gl, Some(&aset)) + DVector::from_vec(qt));
            let mut y = dir.dmu.data.as_vec().clone();
            y.extend(dir.dlambda.iter());
            let res = m_matrix(&ce) * DVector::from_vec(y) - &rhs;
            assert!(res.norm() <= 1e-10 * (1.0 + rhs.norm()), "{}: M residual {:e}", problem.name(), res.norm());
        }
    }
}

/// `min x₁² + x₂²` with the constraint `1 − x₁ ≤ 0` listed twice at
/// different scales, so the active constraint gradients are dependent.
struct DuplicatedBound;

impl Problem<f64> for DuplicatedBound {
    fn name(&self) -> &str {
        "duplicated-bound"
    }
    fn dim_x(&self) -> usize {
        2
    }
    fn dim_eq(&self) -> usize {
        0
    }
    fn dim_ineq(&self) -> usize {
        2
    }
    fn f(&self, x: &DVector<f64>) -> f64 {
        x.norm_squared()
    }
    fn grad_f(&self, x: &DVector<f64>) -> DVector<f64> {
        x * 2.0
    }
    fn hess_f(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_diagonal_element(2, 2, 2.0)
    }
    fn c(&self, _x: &DVector<f64>) -> DVector<f64> {
        v(&[])
    }
    fn jac_c(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(0, 2)
    }
    fn hess_c(&self, _x: &DVector<f64>, _i: usize) -> DMatrix<f64> {
        unreachable!()
    }
    fn g(&self, x: &DVector<f64>) -> DVector<f64> {
        v(&[1.0 - x[0], 2.0 - 2.0 * x[0]])
    }
    fn jac_g(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, -2.0, 0.0])
    }
    fn hess_g(&self, _x: &DVector<f64>, _i: usize) -> DMatrix<f64> {
        DMatrix::zeros(2, 2)
    }
    fn x0(&self) -> DVector<f64> {
        v(&[1.0, 0.0])
    }
}

#[test]
fn dependent_active_gradients_are_reported_unsolvable() {
    let it = Iterate::new(v(&[1.0, 0.5]), v(&[]), v(&[1.0, 0.5]));
    let solve = exact_sqp(&DuplicatedBound, &it, &ActiveSet::from_indices(2, &[0, 1]));
    assert!(matches!(solve, SqpSolve::Unsolvable(SingularBlock::Kkt)));
    assert!(!solve.is_solvable());
}

#[test]
fn regularized_newton_matrix_is_symmetric_and_uniformly_positive() {
    let gamma_b = 0.1;
    let mut rng = rng(9);
    let mut count = 0;
    for problem in builtin_suite::<f64>() {
        let d = problem.dim_x();
        for k in 0..9 {
            let p = if k % 2 == 0 { PenaltyParams::new(1.0, 2.0, 1.0) } else { PenaltyParams::new(0.01, 8.0, 3.0) };
            let it = smooth_point(&mut rng, problem.as_ref(), &p, 1.0, 0.0);
            let ce = ConstraintEval::new(problem.as_ref(), &it.x);
            let q = eval_q(eval_a(&ce.g), &it.lambda, p.nu);
            let aset = identify_active_set(&ce.g, &it.lambda, p.epsilon * q);
            let b = DMatrix::identity(d, d);
            let hhat = build_reg_newton_matrix(&ce, &it, &aset, &p, &b, gamma_b);
            assert!((&hhat - hhat.transpose()).amax() <= 1e-12);
            let eig = hhat.clone().symmetric_eigen().eigenvalues;
            assert!(eig.min() >= gamma_b * (1.0 - 1e-10), "{}: λmin = {}", problem.name(), eig.min());

            let mg = eval_merit_gradient_at(&ce, &it, &p, &problem.grad_f(&it.x), &problem.hess_f(&it.x), &aset)
                .unwrap()
                .full();
            let dims = (d, problem.dim_eq());
            let dir = solve_fallback(Some(&hhat), &mg, dims, true).unwrap();
            assert_eq!(dir.kind, DirectionKind::RegularizedNewton);
            let step = dir.stacked();
            assert!((&hhat * &step + &mg).norm() <= 1e-10 * (1.0 + mg.norm()) * hhat.norm().max(1.0));
            let slope = mg.dot(&step);
            assert!(slope <= -mg.norm_squared() / eig.max() * (1.0 - 1e-9), "{}", problem.name());
            count += 1;
        }
    }
    assert!(count >= 50);
}

#[test]
fn regularized_newton_without_constraints_is_a_scaled_identity() {
    let ce = ConstraintEval::<f64> {
        c: v(&[]),
        jac_c: DMatrix::zeros(0, 2),
        g: v(&[]),
        jac_g: DMatrix::zeros(0, 2),
        hess_c: vec![],
        hess_g: vec![],
    };
    let it = Iterate::new(v(&[0.4, -1.0]), v(&[]), v(&[]));
    let hhat = build_reg_newton_matrix(&ce, &it, &ActiveSet::empty(0), &PenaltyParams::new(1.0, 1.0, 7.0), &DMatrix::identity(2, 2), 0.25);
    assert!((hhat - DMatrix::from_diagonal_element(2, 2, 2.25)).amax() <= 1e-15);
}

#[test]
fn fallback_examples() {
    let grad = v(&[4.0, -2.0]);
    let sd = solve_fallback(None, &grad, (2, 0), false).unwrap();
    assert_eq!(sd.stacked(), -&grad);
    assert_eq!(sd.kind, DirectionKind::SteepestDescent);
    let h = DMatrix::from_diagonal_element(2, 2, 2.0);
    let rn = solve_fallback(Some(&h), &grad, (2, 0), false).unwrap();
    assert!((rn.stacked() - v(&[-2.0, 1.0])).norm() <= 1e-15);
}

#[test]
fn stochastic_directions_are_unbiased() {
    let problem = BoundedSquare;
    let it = Iterate::new(v(&[2.0]), v(&[]), v(&[0.0]));
    let aset = ActiveSet::empty(1);
    let ce = ConstraintEval::new(&problem, &it.x);
    let b = DMatrix::identity(1, 1);
    let exact = exact_sqp(&problem, &it, &aset).direction().unwrap().stacked();

    let noise = NoiseModel::new(0.01, 2024);
    let n = 100_000u64;
    let mut sum = DVector::<f64>::zeros(2);
    let mut sum_sq = DVector::<f64>::zeros(2);
    for t in 0..n {
        let s1 = sample_batch(&problem, &noise, &it.x, 1, StreamKey::new(1, t)).unwrap();
        let s2 = sample_batch(&problem, &noise, &it.x, 1, StreamKey::new(2, t)).unwrap();
        let inputs = SqpInputs { grad: &s1.gradbar, q_grad: &s2.gradbar, q_hess: &s2.hessbar };
        let dir = solve_sqp_system(&ce, &it, &aset, &b, inputs).direction().unwrap().stacked();
        sum += &dir;
        sum_sq += dir.component_mul(&dir);
    }
    let nf = n as f64;
    let mean = &sum / nf;
    for k in 0..2 {
        let var = (sum_sq[k] / nf - mean[k] * mean[k]) * nf / (nf - 1.0);
        let se = (var / nf).sqrt();
        assert!((mean[k] - exact[k]).abs() <= 4.0 * se, "component {k}: mean {} exact {} se {se}", mean[k], exact[k]);
    }
}
