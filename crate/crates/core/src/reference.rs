//! Point interaction on the real line: `-Psi'' = k^2 Psi` away from the
//! origin, `Psi` continuous and `Psi'(0+) - Psi'(0-) = alpha Psi(0)`.
//!
//! Two eigenfunction families are provided: the closed formula in the
//! `(sign x + sign k)/2` form, evaluated literally, and a scattering solution
//! `e^{ikx} + c e^{ik|x|}` obtained by matching at the origin. The second one
//! serves as the reference for checking the first.

use nalgebra::Complex;

use crate::error::{invalid, Result};
use crate::scalar::{cabs, cis, imag_unit, real, Real};

type C<T> = Complex<T>;

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct PointInteractionModel<T: Real> {
    pub alpha: T,
}

impl<T: Real> PointInteractionModel<T> {
    pub fn new(alpha: T) -> Result<Self> {
        if !alpha.is_finite() {
            return Err(invalid(format!("coupling must be finite, got {alpha}")));
        }
        Ok(Self { alpha })
    }
}

fn check_k<T: Real>(k: T) -> Result<()> {
    if k == T::zero() || !k.is_finite() {
        return Err(invalid(format!("wavenumber must be finite and non-zero, got {k}")));
    }
    Ok(())
}

fn sign<T: Real>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else if x < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

fn formula_norm<T: Real>(m: &PointInteractionModel<T>, k: T) -> T {
    let four_k2 = T::lit(4.0) * k * k;
    (four_k2 / (T::two_pi() * (m.alpha * m.alpha + four_k2))).sqrt()
}

/// The closed formula
/// `sqrt(4k^2 / (2pi (alpha^2 + 4k^2))) (e^{ikx} + (sign x + sign k)/2 sin(kx)/k)`,
/// with `sign 0 = 0`.
pub fn psi_k_formula<T: Real>(m: &PointInteractionModel<T>, k: T, x: T) -> Result<C<T>> {
    formula_branch(m, k, x, sign(x))
}

/// The closed formula with `sign x` replaced by `side`.
fn formula_branch<T: Real>(m: &PointInteractionModel<T>, k: T, x: T, side: T) -> Result<C<T>> {
    check_k(k)?;
    let s = (side + sign(k)) / T::lit(2.0);
    Ok((cis(k * x) + real(s * (k * x).sin() / k)).scale(formula_norm(m, k)))
}

/// Derivative of [`psi_k_formula`]; at `x = 0` the limit from the side of
/// `side` is returned.
pub fn psi_k_formula_derivative<T: Real>(m: &PointInteractionModel<T>, k: T, x: T, side: T) -> Result<C<T>> {
    check_k(k)?;
    let sx = if x == T::zero() { sign(side) } else { sign(x) };
    let s = (sx + sign(k)) / T::lit(2.0);
    Ok((imag_unit::<T>() * cis(k * x) * real(k) + real(s * (k * x).cos())).scale(formula_norm(m, k)))
}

/// Outgoing amplitude `c = alpha / (2ik - alpha)` of the matched solution.
pub fn scattering_amplitude<T: Real>(m: &PointInteractionModel<T>, k: T) -> Result<C<T>> {
    check_k(k)?;
    let two_ik = Complex::new(T::zero(), T::lit(2.0) * k);
    Ok(real(m.alpha) / (two_ik - real(m.alpha)))
}

/// `(e^{ikx} + c e^{ik|x|}) / sqrt(2pi)`.
pub fn psi_k_oracle<T: Real>(m: &PointInteractionModel<T>, k: T, x: T) -> Result<C<T>> {
    oracle_branch(m, k, x, sign(x))
}

/// The matched solution with `|x|` replaced by `side * x`.
fn oracle_branch<T: Real>(m: &PointInteractionModel<T>, k: T, x: T, side: T) -> Result<C<T>> {
    let c = scattering_amplitude(m, k)?;
    let s = if side < T::zero() { -T::one() } else { T::one() };
    Ok((cis(k * x) + c * cis(k * s * x)).unscale(T::two_pi().sqrt()))
}

/// Derivative of [`psi_k_oracle`], one-sided at `x = 0` as selected by `side`.
pub fn psi_k_oracle_derivative<T: Real>(m: &PointInteractionModel<T>, k: T, x: T, side: T) -> Result<C<T>> {
    let c = scattering_amplitude(m, k)?;
    let sx = if x == T::zero() { sign(side) } else { sign(x) };
    let ik = Complex::new(T::zero(), k);
    Ok((ik * cis(k * x) + c * ik * real(sx) * cis(k * x.abs())).unscale(T::two_pi().sqrt()))
}

/// Second derivative of [`psi_k_oracle`] for `x != 0`.
pub fn psi_k_oracle_second<T: Real>(m: &PointInteractionModel<T>, k: T, x: T) -> Result<C<T>> {
    if x == T::zero() {
        return Err(invalid("second derivative is not defined at the interaction point"));
    }
    let c = scattering_amplitude(m, k)?;
    Ok((cis(k * x) + c * cis(k * x.abs())).scale(-k * k).unscale(T::two_pi().sqrt()))
}

/// `|Psi'(0+) - Psi'(0-) - alpha Psi(0)|` for a pair of evaluators.
fn jump_defect<T: Real>(
    m: &PointInteractionModel<T>,
    value: C<T>,
    right: C<T>,
    left: C<T>,
) -> T {
    cabs(right - left - value * real(m.alpha))
}

/// Matching defects of the scattering solution: continuity and jump.
pub fn oracle_matching_defects<T: Real>(m: &PointInteractionModel<T>, k: T) -> Result<(T, T)> {
    let at0 = psi_k_oracle(m, k, T::zero())?;
    let (p, n) = (oracle_branch(m, k, T::zero(), T::one())?, oracle_branch(m, k, T::zero(), -T::one())?);
    let continuity = cabs(p - at0).max(cabs(n - at0));
    let jump = jump_defect(
        m,
        at0,
        psi_k_oracle_derivative(m, k, T::zero(), T::one())?,
        psi_k_oracle_derivative(m, k, T::zero(), -T::one())?,
    );
    Ok((continuity, jump))
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct FormulaComparison<T: Real> {
    /// `|Psi(0+) - Psi(0-)|` of the closed formula.
    pub continuity_defect: T,
    /// Jump-condition defect of the closed formula.
    pub jump_defect: T,
    /// `min over gamma of max_x |formula(x) - e^{i gamma} oracle(x)|`.
    pub max_deviation: T,
    pub best_phase: T,
}

/// Compares the closed formula with the matched solution on `points`.
/// Nothing is asserted; the numbers are for reporting.
pub fn compare_formula_to_oracle<T: Real>(
    m: &PointInteractionModel<T>,
    k: T,
    points: &[T],
) -> Result<FormulaComparison<T>> {
    check_k(k)?;
    let continuity_defect =
        cabs(formula_branch(m, k, T::zero(), T::one())? - formula_branch(m, k, T::zero(), -T::one())?);
    let jump = jump_defect(
        m,
        psi_k_formula(m, k, T::zero())?,
        psi_k_formula_derivative(m, k, T::zero(), T::one())?,
        psi_k_formula_derivative(m, k, T::zero(), -T::one())?,
    );
    let pairs: Vec<(C<T>, C<T>)> = points
        .iter()
        .map(|&x| Ok((psi_k_formula(m, k, x)?, psi_k_oracle(m, k, x)?)))
        .collect::<Result<_>>()?;
    let dev = |g: T| {
        let ph = cis(g);
        pairs.iter().map(|(p, o)| cabs(*p - ph * *o)).fold(T::zero(), |a, b| a.max(b))
    };
    // The objective is a max of smooth functions of the phase: a coarse scan
    // locates the basin, golden-section search refines it.
    let steps = 720;
    let h = T::two_pi() / T::from_usize(steps).expect("fits");
    let (mut best_g, mut best) = (T::zero(), dev(T::zero()));
    for j in 1..steps {
        let g = h * T::from_usize(j).expect("fits");
        let d = dev(g);
        if d < best {
            best = d;
            best_g = g;
        }
    }
    let (mut a, mut b) = (best_g - h, best_g + h);
    let r = T::lit((5f64.sqrt() - 1.0) / 2.0);
    for _ in 0..100 {
        let (x1, x2) = (b - r * (b - a), a + r * (b - a));
        if dev(x1) <= dev(x2) { b = x2 } else { a = x1 }
    }
    let g = (a + b) / T::lit(2.0);
    let (best_phase, max_deviation) = if dev(g) < best { (g, dev(g)) } else { (best_g, best) };
    Ok(FormulaComparison { continuity_defect, jump_defect: jump, max_deviation, best_phase })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formula_at_origin_is_its_prefactor() {
        let m = PointInteractionModel::new(1.5).unwrap();
        let k = 0.8_f64;
        let v = psi_k_formula(&m, k, 0.0).unwrap();
        let n = (4.0 * k * k / (std::f64::consts::TAU * (2.25 + 4.0 * k * k))).sqrt();
        assert!((v - Complex::new(n, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn formula_term_follows_sign_of_k() {
        let m = PointInteractionModel::new(0.0).unwrap();
        let wave = |k: f64, x: f64| cis(k * x) / std::f64::consts::TAU.sqrt();
        assert!((psi_k_formula(&m, 1.0, -0.5).unwrap() - wave(1.0, -0.5)).norm() < 1e-15);
        assert!((psi_k_formula(&m, 1.0, 0.5).unwrap() - wave(1.0, 0.5)).norm() > 0.1);
        assert!((psi_k_formula(&m, -1.0, 0.5).unwrap() - wave(-1.0, 0.5)).norm() < 1e-15);
    }

    #[test]
    fn zero_wavenumber_rejected() {
        let m = PointInteractionModel::new(1.0).unwrap();
        assert!(psi_k_formula(&m, 0.0, 1.0).is_err());
        assert!(psi_k_oracle(&m, 0.0, 1.0).is_err());
        assert!(PointInteractionModel::new(f64::NAN).is_err());
    }

    #[test]
    fn free_case_is_plane_wave() {
        let m = PointInteractionModel::new(0.0).unwrap();
        assert_eq!(scattering_amplitude(&m, 2.0).unwrap(), Complex::new(0.0, 0.0));
    }

    #[test]
    fn strong_coupling_pins_origin() {
        let m = PointInteractionModel::new(1e6).unwrap();
        assert!(psi_k_oracle(&m, 1.0, 0.0).unwrap().norm() < 1e-5);
    }
}
