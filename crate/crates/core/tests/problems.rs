mod common;

use common::{kkt, rng, v};
use rand::Rng;
use stosqp::kkt_directions::identify_active_set;
use stosqp::merit::{eval_a, eval_q, kkt_residual};
use stosqp::nalgebra::{DMatrix, DVector};
use stosqp::oracle::{sample_batch, NoiseModel};
use stosqp::problem::{BoundedSquare, Problem};
use stosqp::{builtin_suite, StreamKey};

fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / a.norm().max(1.0)
}

fn column(v: DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(v.len(), 1, v.as_slice())
}

/// Central-difference Jacobian of a vector map, `rows × d`.
fn fd_jacobian(x: &DVector<f64>, rows: usize, h: f64, map: impl Fn(&DVector<f64>) -> DVector<f64>) -> DMatrix<f64> {
    let d = x.len();
    let mut jac = DMatrix::zeros(rows, d);
    for j in 0..d {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        jac.set_column(j, &((map(&xp) - map(&xm)) / (2.0 * h)));
    }
    jac
}

#[test]
fn derivatives_agree_with_finite_differences() {
    let mut rng = rng(3);
    for problem in builtin_suite::<f64>() {
        let d = problem.dim_x();
        for _ in 0..20 {
            let x = DVector::from_fn(d, |_, _| rng.random_range(-2.0..2.0));
            let h = 1e-6;

            let fd_grad = fd_jacobian(&x, 1, h, |y| DVector::from_element(1, problem.f(y))).transpose();
            assert!(rel(&column(problem.grad_f(&x)), &fd_grad) <= 1e-5, "{} grad_f", problem.name());
            let fd_hess = fd_jacobian(&x, d, h, |y| problem.grad_f(y));
            assert!(rel(&problem.hess_f(&x), &fd_hess) <= 1e-4, "{} hess_f", problem.name());

            let h_f = problem.hess_f(&x);
            assert_eq!(h_f, h_f.transpose(), "{} hess_f symmetry", problem.name());

            let m = problem.dim_eq();
            let r = problem.dim_ineq();
            assert!(rel(&problem.jac_c(&x), &fd_jacobian(&x, m, h, |y| problem.c(y))) <= 1e-5, "{} J", problem.name());
            assert!(rel(&problem.jac_g(&x), &fd_jacobian(&x, r, h, |y| problem.g(y))) <= 1e-5, "{} G", problem.name());
            for i in 0..m {
                let fd = fd_jacobian(&x, d, h, |y| problem.jac_c(y).row(i).transpose());
                assert!(rel(&problem.hess_c(&x, i), &fd) <= 1e-4, "{} hess_c", problem.name());
            }
            for i in 0..r {
                let fd = fd_jacobian(&x, d, h, |y| problem.jac_g(y).row(i).transpose());
                assert!(rel(&problem.hess_g(&x, i), &fd) <= 1e-4, "{} hess_g", problem.name());
            }
        }
    }
}

#[test]
fn suite_contract() {
    let suite = builtin_suite::<f64>();
    assert!(suite.len() >= 6);
    for problem in &suite {
        assert!(problem.dim_x() <= 10);
        assert!(problem.dim_ineq() >= 1);
        let it = kkt(problem.as_ref());
        let r = kkt_residual(problem.as_ref(), &it, &problem.grad_f(&it.x));
        assert!(r <= 1e-10, "{}: R = {r:e}", problem.name());
    }
    let p1 = kkt(&BoundedSquare);
    assert_eq!((p1.x[0], p1.lambda[0]), (1.0, 2.0));
}

#[test]
fn inactive_constraints_carry_zero_multipliers() {
    for problem in builtin_suite::<f64>() {
        let it = kkt(problem.as_ref());
        let g = problem.g(&it.x);
        for i in 0..g.len() {
            if g[i] < 0.0 {
                assert_eq!(it.lambda[i], 0.0, "{} constraint {i}", problem.name());
            }
        }
    }
    let p4 = stosqp::problem_by_name::<f64>("p4").unwrap();
    let it = kkt(p4.as_ref());
    assert!(p4.g(&it.x).iter().any(|&g| g < 0.0));
}

#[test]
fn active_set_localizes_near_kkt() {
    let (eps, nu) = (1.0, 2.0);
    let mut rng = rng(11);
    for problem in builtin_suite::<f64>() {
        let star = kkt(problem.as_ref());
        let g_star = problem.g(&star.x);
        let active: Vec<usize> = (0..g_star.len()).filter(|&i| g_star[i].abs() <= 1e-12).collect();
        let strong: Vec<usize> = active.iter().copied().filter(|&i| star.lambda[i] > 0.0).collect();
        for _ in 0..100 {
            let it = common::perturb(&mut rng, &star, 1e-3 / (star.dim() as f64).sqrt());
            let g = problem.g(&it.x);
            let q = eval_q(eval_a(&g), &it.lambda, nu);
            let aset = identify_active_set(&g, &it.lambda, eps * q);
            for &i in &strong {
                assert!(aset.contains(i), "{}: strongly active {i} missed", problem.name());
            }
            for i in aset.iter() {
                assert!(active.contains(&i), "{}: inactive {i} identified", problem.name());
            }
        }
    }
}

fn x_squared() -> Box<dyn Problem<f64>> {
    stosqp::problem_by_name::<f64>("p1").unwrap()
}

#[test]
fn zero_noise_batches_are_exact() {
    let p = x_squared();
    let x = v(&[3.0]);
    for n in [1, 7, 1000] {
        let b = sample_batch(p.as_ref(), &NoiseModel::exact(), &x, n, StreamKey::new(1, 4)).unwrap();
        assert_eq!(b.fbar, 9.0);
        assert_eq!(b.gradbar, v(&[6.0]));
        assert_eq!(b.hessbar, DMatrix::from_element(1, 1, 2.0));
    }
}

#[test]
fn large_batch_objective_mean_is_within_clt_bound() {
    let p = x_squared();
    let b = sample_batch(p.as_ref(), &NoiseModel::new(1.0, 5), &v(&[3.0]), 1_000_000, StreamKey::new(1, 0)).unwrap();
    assert!((b.fbar - 9.0).abs() <= 0.005);
}

#[test]
fn gradient_noise_covariance_and_stream_independence() {
    let problem = stosqp::problem_by_name::<f64>("p3").unwrap();
    assert_eq!(problem.dim_x(), 2);
    let x = v(&[0.3, -0.2]);
    let exact = problem.grad_f(&x);
    let noise = NoiseModel::new(1.0, 21);
    let n = 100_000u64;
    let mut sum = DVector::<f64>::zeros(2);
    let mut outer = DMatrix::<f64>::zeros(2, 2);
    let (mut sa, mut sb, mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for t in 0..n {
        let e1 = sample_batch(problem.as_ref(), &noise, &x, 1, StreamKey::new(1, t)).unwrap().gradbar - &exact;
        let e2 = sample_batch(problem.as_ref(), &noise, &x, 1, StreamKey::new(2, t)).unwrap().gradbar - &exact;
        sum += &e1;
        outer += &e1 * e1.transpose();
        let (a, b) = (e1[0], e2[0]);
        sa += a;
        sb += b;
        sab += a * b;
        saa += a * a;
        sbb += b * b;
    }
    let nf = n as f64;
    let mean = &sum / nf;
    let cov = &outer / nf - &mean * mean.transpose();
    let target = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
    for (c, t) in cov.iter().zip(target.iter()) {
        assert!((c - t).abs() <= 0.05 * t, "covariance {cov} vs {target}");
    }
    let cab = sab / nf - sa / nf * sb / nf;
    let rho = cab / ((saa / nf - (sa / nf).powi(2)) * (sbb / nf - (sb / nf).powi(2))).sqrt();
    assert!(rho.abs() <= 0.01, "cross-stream correlation {rho}");
}

#[test]
fn batch_variance_shrinks_with_batch_size() {
    let p = x_squared();
    let x = v(&[3.0]);
    let noise = NoiseModel::new(1.0, 8);
    let var_of = |n: u64| {
        let draws: Vec<f64> = (0..4000)
            .map(|t| sample_batch(p.as_ref(), &noise, &x, n, StreamKey::new(3, t)).unwrap().fbar)
            .collect();
        let m = draws.iter().sum::<f64>() / draws.len() as f64;
        draws.iter().map(|d| (d - m).powi(2)).sum::<f64>() / (draws.len() - 1) as f64
    };
    let v1 = var_of(1);
    let v16 = var_of(16);
    assert!((v1 - 1.0).abs() <= 0.1, "n = 1 variance {v1}");
    assert!((v16 * 16.0 - 1.0).abs() <= 0.1, "n = 16 scaled variance {}", v16 * 16.0);
}

#[test]
fn same_key_is_bit_identical_and_nonfinite_points_fail() {
    let p = x_squared();
    let noise = NoiseModel::new(0.3, 99);
    let a = sample_batch(p.as_ref(), &noise, &v(&[1.5]), 12, StreamKey::new(1, 7)).unwrap();
    let b = sample_batch(p.as_ref(), &noise, &v(&[1.5]), 12, StreamKey::new(1, 7)).unwrap();
    assert_eq!(a, b);
    let c = sample_batch(p.as_ref(), &noise, &v(&[1.5]), 12, StreamKey::new(2, 7)).unwrap();
    assert_ne!(a, c);
    assert!(sample_batch(p.as_ref(), &noise, &v(&[f64::NAN]), 1, StreamKey::new(1, 0)).is_err());
}
