//! Dense complex linear algebra helpers built on nalgebra.

use nalgebra::{Complex, ComplexField, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::scalar::{cabs, Real};

pub type CMatrix<T> = DMatrix<Complex<T>>;
pub type CVector<T> = DVector<Complex<T>>;

/// Schur form `M = Q T Q*`; for normal input `T` is diagonal up to rounding.
pub struct Schur<T: Real> {
    pub q: CMatrix<T>,
    pub t: CMatrix<T>,
}

impl<T: Real> Schur<T> {
    pub fn eigenvalues(&self) -> Vec<Complex<T>> {
        (0..self.t.nrows()).map(|i| self.t[(i, i)]).collect()
    }
}

pub fn schur<T: Real>(m: &CMatrix<T>) -> Result<Schur<T>> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch { expected: m.nrows(), found: m.ncols() });
    }
    if m.nrows() == 0 {
        return Ok(Schur { q: m.clone(), t: m.clone() });
    }
    // Deflating at exactly one ulp occasionally stalls on repeated
    // eigenvalues; a few ulps is still far below every tolerance we use.
    for ulps in [4.0, 64.0, 1024.0] {
        if let Some(s) = m.clone().try_schur(T::lit(ulps * T::EPSILON), 10_000) {
            let (q, t) = s.unpack();
            return Ok(Schur { q, t });
        }
    }
    Err(Error::Numerical("Schur iteration did not converge".into()))
}

pub fn eigenvalues<T: Real>(m: &CMatrix<T>) -> Result<Vec<Complex<T>>> {
    Ok(schur(m)?.eigenvalues())
}

/// Thin SVD `M = U diag(values) V*` with singular values in descending order.
pub struct Svd<T: Real> {
    pub u: CMatrix<T>,
    pub values: Vec<T>,
    pub v: CMatrix<T>,
}

fn to_faer<T: Real>(m: &CMatrix<T>) -> faer::Mat<faer::c64> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| {
        let z = m[(i, j)];
        faer::c64::new(z.re.to_f64_lossy(), z.im.to_f64_lossy())
    })
}

fn from_faer<T: Real>(m: faer::MatRef<'_, faer::c64>) -> CMatrix<T> {
    CMatrix::from_fn(m.nrows(), m.ncols(), |i, j| {
        let z = m[(i, j)];
        Complex::new(T::lit(z.re), T::lit(z.im))
    })
}

/// Thin SVD, computed with faer in double precision.
///
/// The complex nalgebra SVD loses up to several digits on exactly rank
/// deficient input, which is the normal case for the null spaces needed here.
pub fn svd<T: Real>(m: &CMatrix<T>) -> Svd<T> {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        let k = r.min(c);
        return Svd { u: CMatrix::zeros(r, k), values: Vec::new(), v: CMatrix::zeros(c, k) };
    }
    let f = to_faer(m).thin_svd().expect("SVD converges");
    let values: Vec<T> = (0..r.min(c)).map(|j| T::lit(f.S().column_vector()[j].re)).collect();
    Svd { u: from_faer(f.U()), values, v: from_faer(f.V()) }
}

/// Singular values in descending order with the matching right singular
/// vectors as columns of a square `V`.
pub fn svd_sorted<T: Real>(m: &CMatrix<T>) -> (Vec<T>, CMatrix<T>) {
    let (r, c) = m.shape();
    let padded = if r < c {
        let mut p = CMatrix::<T>::zeros(c, c);
        p.view_mut((0, 0), (r, c)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let s = svd(&padded);
    (s.values, s.v)
}

/// Minimum-norm least-squares solution, treating singular values below
/// `rel_tol * sigma_max` as zero.
pub fn least_squares<T: Real>(m: &CMatrix<T>, rhs: &CVector<T>, rel_tol: T) -> CVector<T> {
    let s = svd(m);
    let smax = s.values.first().copied().unwrap_or_else(T::zero);
    let mut coef = s.u.adjoint() * rhs;
    for (j, &x) in s.values.iter().enumerate() {
        coef[j] = if x > rel_tol * smax && x > T::zero() { coef[j].unscale(x) } else { Complex::new(T::zero(), T::zero()) };
    }
    s.v * coef
}

/// Orthonormal basis of the null space: right singular vectors whose
/// singular value is at most `rel_tol * sigma_max`.
pub fn null_space<T: Real>(m: &CMatrix<T>, rel_tol: T) -> CMatrix<T> {
    let c = m.ncols();
    if c == 0 {
        return CMatrix::zeros(0, 0);
    }
    let (sv, v) = svd_sorted(m);
    let smax = sv.first().copied().unwrap_or_else(T::zero);
    let cut = rel_tol * smax;
    let keep: Vec<CVector<T>> = (0..c)
        .filter(|&i| sv[i] <= cut)
        .map(|i| v.column(i).into_owned())
        .collect();
    if keep.is_empty() {
        CMatrix::zeros(c, 0)
    } else {
        CMatrix::from_columns(&keep)
    }
}

/// Orthonormal basis for the column span, dropping directions with singular
/// value below `rel_tol * sigma_max`.
pub fn column_basis<T: Real>(m: &CMatrix<T>, rel_tol: T) -> CMatrix<T> {
    let n = m.nrows();
    if m.ncols() == 0 || n == 0 {
        return CMatrix::zeros(n, 0);
    }
    let s = svd(m);
    let smax = s.values.first().copied().unwrap_or_else(T::zero);
    let keep: Vec<CVector<T>> = (0..s.values.len())
        .filter(|&i| s.values[i] > rel_tol * smax && smax > T::zero())
        .map(|i| s.u.column(i).into_owned())
        .collect();
    if keep.is_empty() {
        CMatrix::zeros(n, 0)
    } else {
        CMatrix::from_columns(&keep)
    }
}

pub fn spectral_norm<T: Real>(m: &CMatrix<T>) -> T {
    if m.is_empty() {
        return T::zero();
    }
    svd(m).values.first().copied().unwrap_or_else(T::zero)
}

/// Sine of the largest principal angle between two subspaces given by
/// orthonormal columns. Returns `None` when the dimensions differ.
pub fn subspace_gap<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>) -> Option<T> {
    if a.nrows() != b.nrows() || a.ncols() != b.ncols() {
        return None;
    }
    let off_a = a - b * (b.adjoint() * a);
    let off_b = b - a * (a.adjoint() * b);
    Some(spectral_norm(&off_a).max(spectral_norm(&off_b)))
}

/// Max-abs entry of `M* M - I`.
pub fn unitarity_defect<T: Real>(m: &CMatrix<T>) -> T {
    if !m.is_square() {
        return T::max_value().unwrap_or_else(T::one);
    }
    let g = m.adjoint() * m - CMatrix::<T>::identity(m.nrows(), m.ncols());
    g.iter().map(|z| cabs(*z)).fold(T::zero(), |a, b| a.max(b))
}

pub fn max_abs<T: Real>(m: &CMatrix<T>) -> T {
    m.iter().map(|z| cabs(*z)).fold(T::zero(), |a, b| a.max(b))
}

/// Hausdorff distance between two finite point sets in the plane.
pub fn hausdorff<T: Real>(a: &[Complex<T>], b: &[Complex<T>]) -> T {
    fn directed<T: Real>(x: &[Complex<T>], y: &[Complex<T>]) -> T {
        x.iter()
            .map(|p| {
                y.iter()
                    .map(|q| cabs(*p - *q))
                    .fold(T::max_value().unwrap_or_else(T::one), |a, b| a.min(b))
            })
            .fold(T::zero(), |a, b| a.max(b))
    }
    if a.is_empty() && b.is_empty() {
        return T::zero();
    }
    directed(a, b).max(directed(b, a))
}

/// Haar-distributed random unitary of size `d`.
pub fn random_unitary<T: Real, R: Rng + ?Sized>(rng: &mut R, d: usize) -> CMatrix<T> {
    let g = CMatrix::<T>::from_fn(d, d, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex::new(T::lit(re), T::lit(im))
    });
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    let mut out = q;
    for j in 0..d {
        let rjj = r[(j, j)];
        let m = cabs(rjj);
        if m > T::zero() {
            let phase = rjj.unscale(m);
            let mut col = out.column_mut(j);
            col *= phase;
        }
    }
    out
}

/// Uniform angle in `[0, 2pi)` drawn from the rng.
pub fn random_angle<T: Real, R: Rng + ?Sized>(rng: &mut R) -> T {
    T::lit(rng.random::<f64>() * std::f64::consts::TAU)
}

pub fn vector_norm<T: Real>(v: &CVector<T>) -> T {
    ComplexField::sqrt(v.iter().map(|z| z.norm_sqr()).fold(T::zero(), |a, b| a + b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_unitary_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for d in 1..7 {
            let u: CMatrix<f64> = random_unitary(&mut rng, d);
            assert!(unitarity_defect(&u) < 1e-13);
        }
    }

    #[test]
    fn svd_reconstructs_rank_deficient_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let a: CMatrix<f64> = random_unitary(&mut rng, 12).columns(0, 2).into_owned();
            let mix: CMatrix<f64> = random_unitary(&mut rng, 4).rows(0, 2).into_owned();
            let m = &a * &mix;
            let s = svd(&m);
            let mut us = s.u.clone();
            for (j, &x) in s.values.iter().enumerate() {
                us.column_mut(j).scale_mut(x);
            }
            assert!(max_abs(&(us * s.v.adjoint() - &m)) < 1e-13);
            assert!(s.values[2] < 1e-14 && s.values[1] > 1e-3);
        }
    }

    #[test]
    fn null_space_of_wide_matrix() {
        let m = CMatrix::<f64>::from_row_slice(
            1,
            3,
            &[Complex::new(1.0, 0.0), Complex::new(1.0, 0.0), Complex::new(0.0, 0.0)],
        );
        let n = null_space(&m, 1e-12);
        assert_eq!(n.ncols(), 2);
        assert!(max_abs(&(&m * &n)) < 1e-14);
    }

    #[test]
    fn schur_of_diagonal() {
        let d = CMatrix::<f64>::from_diagonal(&CVector::from_vec(vec![
            Complex::new(1.0, 0.0),
            Complex::new(0.0, 1.0),
        ]));
        let mut ev = eigenvalues(&d).unwrap();
        ev.sort_by(|a, b| a.im.partial_cmp(&b.im).unwrap());
        assert!((ev[0] - Complex::new(1.0, 0.0)).norm() < 1e-15);
        assert!((ev[1] - Complex::new(0.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn hausdorff_basic() {
        let a = [Complex::new(0.0, 0.0), Complex::new(1.0, 0.0)];
        let b = [Complex::new(0.0, 0.0)];
        assert!((hausdorff(&a, &b) - 1.0_f64).abs() < 1e-15);
    }
}
