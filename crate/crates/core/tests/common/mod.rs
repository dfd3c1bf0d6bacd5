#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stosqp::merit::{eval_a, eval_merit, eval_q, ObjectiveSample};
use stosqp::nalgebra::DVector;
use stosqp::problem::Problem;
use stosqp::{Iterate, PenaltyParams};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn v(xs: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(xs)
}

fn jitter(rng: &mut ChaCha8Rng, center: &DVector<f64>, radius: f64) -> DVector<f64> {
    center.map(|c| c + rng.random_range(-radius..=radius))
}

/// Known KKT triple of a suite problem.
pub fn kkt(problem: &dyn Problem<f64>) -> Iterate {
    problem.known_kkt().expect("suite problems carry a KKT triple")
}

/// Uniform perturbation of every block of `center` within `radius`.
pub fn perturb(rng: &mut ChaCha8Rng, center: &Iterate, radius: f64) -> Iterate {
    Iterate::new(
        jitter(rng, &center.x, radius),
        jitter(rng, &center.mu, radius),
        jitter(rng, &center.lambda, radius),
    )
}

/// Distance from `it` to the kink set `{gᵢ = −εqλᵢ}` measured on the
/// constraint values, or infinity without inequalities.
pub fn kink_distance(problem: &dyn Problem<f64>, it: &Iterate, p: &PenaltyParams) -> f64 {
    let g = problem.g(&it.x);
    let q = eval_q(eval_a(&g), &it.lambda, p.nu);
    g.iter()
        .zip(it.lambda.iter())
        .map(|(gi, li)| (gi + p.epsilon * q * li).abs())
        .fold(f64::INFINITY, f64::min)
}

/// Random iterate around the KKT triple that lies well inside `T_ν` and
/// at least `margin` away from the kink set.
pub fn smooth_point(
    rng: &mut ChaCha8Rng,
    problem: &dyn Problem<f64>,
    p: &PenaltyParams,
    radius: f64,
    margin: f64,
) -> Iterate {
    let center = kkt(problem);
    loop {
        let it = perturb(rng, &center, radius);
        let a = eval_a(&problem.g(&it.x));
        if a <= 0.4 * p.nu && kink_distance(problem, &it, p) >= margin {
            return it;
        }
    }
}

pub fn merit_value(problem: &dyn Problem<f64>, it: &Iterate, p: &PenaltyParams) -> f64 {
    eval_merit(problem, it, p, &ObjectiveSample::exact(problem, &it.x))
        .expect("point inside the perturbed set")
        .value
}

/// Central differences of the exact merit function in every coordinate of
/// the stacked iterate.
pub fn fd_merit_gradient(problem: &dyn Problem<f64>, it: &Iterate, p: &PenaltyParams, h: f64) -> DVector<f64> {
    let z = it.stacked();
    DVector::from_iterator(
        z.len(),
        (0..z.len()).map(|k| {
            let mut plus = z.clone();
            let mut minus = z.clone();
            plus[k] += h;
            minus[k] -= h;
            let fp = merit_value(problem, &it.unstack_like(&plus), p);
            let fm = merit_value(problem, &it.unstack_like(&minus), p);
            (fp - fm) / (2.0 * h)
        }),
    )
}

/// A problem with its starting triple replaced.
pub struct StartedAt<'a> {
    pub inner: &'a dyn Problem<f64>,
    pub start: Iterate,
}

impl Problem<f64> for StartedAt<'_> {
    fn name(&self) -> &str {
        self.inner.name()
    }
    fn dim_x(&self) -> usize {
        self.inner.dim_x()
    }
    fn dim_eq(&self) -> usize {
        self.inner.dim_eq()
    }
    fn dim_ineq(&self) -> usize {
        self.inner.dim_ineq()
    }
    fn f(&self, x: &DVector<f64>) -> f64 {
        self.inner.f(x)
    }
    fn grad_f(&self, x: &DVector<f64>) -> DVector<f64> {
        self.inner.grad_f(x)
    }
    fn hess_f(&self, x: &DVector<f64>) -> stosqp::nalgebra::DMatrix<f64> {
        self.inner.hess_f(x)
    }
    fn c(&self, x: &DVector<f64>) -> DVector<f64> {
        self.inner.c(x)
    }
    fn jac_c(&self, x: &DVector<f64>) -> stosqp::nalgebra::DMatrix<f64> {
        self.inner.jac_c(x)
    }
    fn hess_c(&self, x: &DVector<f64>, i: usize) -> stosqp::nalgebra::DMatrix<f64> {
        self.inner.hess_c(x, i)
    }
    fn g(&self, x: &DVector<f64>) -> DVector<f64> {
        self.inner.g(x)
    }
    fn jac_g(&self, x: &DVector<f64>) -> stosqp::nalgebra::DMatrix<f64> {
        self.inner.jac_g(x)
    }
    fn hess_g(&self, x: &DVector<f64>, i: usize) -> stosqp::nalgebra::DMatrix<f64> {
        self.inner.hess_g(x, i)
    }
    fn x0(&self) -> DVector<f64> {
        self.start.x.clone()
    }
    fn mu0(&self) -> DVector<f64> {
        self.start.mu.clone()
    }
    fn lambda0(&self) -> DVector<f64> {
        self.start.lambda.clone()
    }
    fn known_kkt(&self) -> Option<Iterate> {
        self.inner.known_kkt()
    }
}
