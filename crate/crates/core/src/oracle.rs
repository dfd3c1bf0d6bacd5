//! Gaussian noise-injecting oracle for the objective.
//!
//! A single sample at `x` perturbs the exact values as
//!
//! ```text
//! f̄  = f(x) + σ z₀
//! ∇̄f = ∇f(x) + σ (z + s·1)          Cov = σ²(I + 11ᵀ)
//! ∇̄²f = ∇²f(x) + σ (Z + Zᵀ)/2        Z_ij i.i.d. N(0, 1)
//! ```
//!
//! A batch returns the mean of `n` such samples. Because the noise is
//! Gaussian and additive, that mean has exactly the distribution of one
//! sample with `σ` replaced by `σ/√n`, which is how it is drawn: the cost of
//! a batch does not depend on `n`.
//!
//! Randomness is keyed by `(seed, stream, counter)` through a ChaCha8 key, so
//! any draw can be reproduced in isolation and draws with different keys are
//! independent.

use crate::error::Result;
use crate::problem::{check_finite, Problem};
use crate::scalar::Scalar;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Additive Gaussian noise of variance `sigma2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel<T: Scalar> {
    pub sigma2: T,
    pub seed: u64,
}

impl<T: Scalar> NoiseModel<T> {
    pub fn new(sigma2: T, seed: u64) -> Self {
        assert!(sigma2 >= T::zero(), "noise variance must be nonnegative");
        Self { sigma2, seed }
    }

    pub fn exact() -> Self {
        Self::new(T::zero(), 0)
    }

    pub fn is_exact(&self) -> bool {
        self.sigma2 == T::zero()
    }
}

/// Identifies one independent random draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub stream: u64,
    pub counter: u64,
}

impl StreamKey {
    pub const fn new(stream: u64, counter: u64) -> Self {
        Self { stream, counter }
    }
}

/// Mean of `n` noisy objective samples at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleBatch<T: Scalar> {
    pub n: u64,
    pub fbar: T,
    pub gradbar: DVector<T>,
    pub hessbar: DMatrix<T>,
}

pub(crate) fn keyed_rng(seed: u64, key: StreamKey) -> ChaCha8Rng {
    let mut bytes = [0u8; 32];
    bytes[..8].copy_from_slice(&seed.to_le_bytes());
    bytes[8..16].copy_from_slice(&key.stream.to_le_bytes());
    bytes[16..24].copy_from_slice(&key.counter.to_le_bytes());
    ChaCha8Rng::from_seed(bytes)
}

/// Draws a batch of `n` samples at `x`.
///
/// With `sigma2 = 0` the exact values are returned unchanged for every `n`.
/// The noise depends only on `key`, so two calls with the same key at
/// different points evaluate one common batch of samples at both.
pub fn sample_batch<T: Scalar, P: Problem<T> + ?Sized>(
    problem: &P,
    noise: &NoiseModel<T>,
    x: &DVector<T>,
    n: u64,
    key: StreamKey,
) -> Result<OracleBatch<T>> {
    assert!(n >= 1, "batch size must be at least one");
    check_finite(x, "sample point")?;

    let mut fbar = problem.f(x);
    let mut gradbar = problem.grad_f(x);
    let mut hessbar = problem.hess_f(x);
    if noise.is_exact() {
        return Ok(OracleBatch { n, fbar, gradbar, hessbar });
    }

    let d = x.len();
    let scale = (noise.sigma2 / T::lit(n as f64)).sqrt();
    let mut rng = keyed_rng(noise.seed, key);

    fbar += scale * T::standard_normal(&mut rng);

    let shared = T::standard_normal(&mut rng);
    for gi in gradbar.iter_mut() {
        *gi += scale * (T::standard_normal(&mut rng) + shared);
    }

    let z = DMatrix::from_fn(d, d, |_, _| T::standard_normal(&mut rng));
    let half = T::lit(0.5);
    for i in 0..d {
        for j in 0..d {
            hessbar[(i, j)] += scale * half * (z[(i, j)] + z[(j, i)]);
        }
    }

    Ok(OracleBatch { n, fbar, gradbar, hessbar })
}
