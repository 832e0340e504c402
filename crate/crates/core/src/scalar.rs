//! Real scalar abstraction.
//!
//! Every numerical routine is generic over [`Real`], implemented for `f32`
//! and `f64`. Tolerances are written as `f64` literals and floored at a small
//! multiple of the type's epsilon so single precision stays usable.

use std::fmt::{Debug, Display};

use nalgebra::{Complex, ComplexField, RealField};
use num_traits::{FloatConst, FromPrimitive, ToPrimitive};

pub trait Real:
    RealField + Copy + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + std::fmt::LowerExp + Default
{
    /// Machine epsilon of the type, widened to `f64`.
    const EPSILON: f64;

    /// Converts an `f64` constant. Panics only on values the type cannot hold.
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("literal representable in scalar type")
    }

    /// Absolute tolerance `x`, never tighter than `64 * EPSILON`.
    #[inline]
    fn tol(x: f64) -> Self {
        Self::lit(x.max(64.0 * Self::EPSILON))
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    #[inline]
    fn from_i64(n: i64) -> Self {
        <Self as FromPrimitive>::from_i64(n).expect("integer representable in scalar type")
    }
}

impl Real for f32 {
    const EPSILON: f64 = f32::EPSILON as f64;
}

impl Real for f64 {
    const EPSILON: f64 = f64::EPSILON;
}

/// `e^{i theta}`.
#[inline]
pub fn cis<T: Real>(theta: T) -> Complex<T> {
    Complex::new(theta.cos(), theta.sin())
}

#[inline]
pub fn c<T: Real>(re: T, im: T) -> Complex<T> {
    Complex::new(re, im)
}

#[inline]
pub fn real<T: Real>(re: T) -> Complex<T> {
    Complex::new(re, T::zero())
}

#[inline]
pub fn imag_unit<T: Real>() -> Complex<T> {
    Complex::new(T::zero(), T::one())
}

#[inline]
pub fn cabs<T: Real>(z: Complex<T>) -> T {
    ComplexField::modulus(z)
}

#[inline]
pub fn carg<T: Real>(z: Complex<T>) -> T {
    ComplexField::argument(z)
}

/// Reduces an angle to `[0, 2pi)`.
pub fn wrap_angle<T: Real>(theta: T) -> T {
    let two_pi = T::two_pi();
    let mut r = theta % two_pi;
    if r < T::zero() {
        r += two_pi;
    }
    if r >= two_pi {
        r -= two_pi;
    }
    r
}

/// Reduces an angle to `(-pi, pi]`.
pub fn wrap_symmetric<T: Real>(theta: T) -> T {
    let r = wrap_angle(theta);
    if r > T::pi() {
        r - T::two_pi()
    } else {
        r
    }
}

/// Distance between two angles on the circle, in `[0, pi]`.
pub fn angle_distance<T: Real>(a: T, b: T) -> T {
    wrap_symmetric(a - b).abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_lands_in_range() {
        for &x in &[-7.0_f64, -std::f64::consts::PI, 0.0, 1.0, 6.3, 100.0] {
            let w = wrap_angle(x);
            assert!((0.0..std::f64::consts::TAU).contains(&w), "{x} -> {w}");
            assert!((cis(w) - cis(x)).norm() < 1e-12);
            let s = wrap_symmetric(x);
            assert!(s > -std::f64::consts::PI - 1e-15 && s <= std::f64::consts::PI);
        }
    }

    #[test]
    fn angle_distance_is_circular() {
        assert!((angle_distance(0.1_f64, std::f64::consts::TAU - 0.1) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn single_precision_tolerance_is_floored() {
        assert!(f32::tol(1e-12) > 1e-6);
        assert_eq!(f64::tol(1e-12), 1e-12);
    }
}
