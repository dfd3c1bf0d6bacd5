//! Scalar abstraction shared by every numerical routine in the crate.
//!
//! All algorithms are written against [`Scalar`], which is implemented for
//! `f32` and `f64`. Linear algebra is delegated to `nalgebra`, so the trait
//! builds on [`RealField`] and adds the few conversions and random draws the
//! solvers need.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use std::fmt::{Debug, Display};

/// Real floating point scalar usable by the solvers.
pub trait Scalar:
    RealField + Copy + Default + FromPrimitive + ToPrimitive + Display + Debug + Send + Sync + 'static
{
    /// Draws one standard normal variate.
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Smallest value the penalty parameter may shrink to before the
    /// solver reports a stall.
    fn tiny() -> Self;

    /// Machine epsilon.
    fn machine_eps() -> Self;

    /// Converts an `f64` literal. Every finite literal used in this crate is
    /// representable (possibly rounded) in both `f32` and `f64`.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal must convert to the scalar type")
    }

    /// Lossy conversion to `f64` for reporting.
    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    #[inline]
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
    #[inline]
    fn tiny() -> Self {
        1e-300
    }
    #[inline]
    fn machine_eps() -> Self {
        f64::EPSILON
    }
}

impl Scalar for f32 {
    #[inline]
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
    #[inline]
    fn tiny() -> Self {
        1e-37
    }
    #[inline]
    fn machine_eps() -> Self {
        f32::EPSILON
    }
}

/// Pivot magnitude (relative to `max(1, ‖A‖∞)`) below which a dense
/// factorization is declared singular.
pub fn pivot_tolerance<T: Scalar>() -> T {
    T::lit(1e-12).max(T::machine_eps() * T::lit(16.0))
}

/// Relative residual above which a linear solve is rejected.
pub fn residual_tolerance<T: Scalar>() -> T {
    T::lit(1e-6).max(T::machine_eps().sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tolerances_follow_precision() {
        assert_eq!(pivot_tolerance::<f64>(), 1e-12);
        assert_eq!(residual_tolerance::<f64>(), 1e-6);
        assert!(pivot_tolerance::<f32>() > 1e-7);
        assert!(residual_tolerance::<f32>() > 1e-4);
    }

    #[test]
    fn literals_convert() {
        assert_eq!(f32::lit(0.5), 0.5f32);
        assert_eq!(f64::lit(1.5).to_f64_lossy(), 1.5);
        assert!(f32::tiny() > 0.0);
    }
}
