//! Local symmetries of quasi-delta vertices and twisted shift invariance of
//! the loop chain.
//!
//! The integers act on the chain by shifting one cell, with a phase
//! `e^{-i theta}` picked up per edge. On boundary data the shift maps the
//! block of vertex `s` to vertex `s + 1` through
//! `diag(e^{-i th^u_s}, e^{-i th^v_{s+1}}, e^{-i th^v_{s+1}}, e^{-i th^u_{s+1}})`.
//! A chain of quasi-delta vertices is invariant when conjugating each block
//! by that phase matrix reproduces the next block.

use std::collections::BTreeMap;

use nalgebra::Complex;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::extensions::{build_quasi_delta_block, build_zeta, QuasiDeltaParams, VertexUnitary};
use crate::graph::{BoundaryVector, CellWindow, ChainKind};
use crate::linalg::{self, CMatrix, CVector};
use crate::scalar::{angle_distance, cabs, carg, cis, wrap_angle, Real};

/// Max over `v` of `||v U - U v||`.
pub fn commutator_defect<T: Real>(v: &[CMatrix<T>], u: &VertexUnitary<T>) -> T {
    v.iter()
        .map(|g| linalg::spectral_norm(&(g * u.matrix() - u.matrix() * g)))
        .fold(T::zero(), |a, b| a.max(b))
}

/// Whether every `v(g)` commutes with `U` to within `tol`.
pub fn is_local_symmetry<T: Real>(v: &[CMatrix<T>], u: &VertexUnitary<T>, tol: T) -> Result<bool> {
    for (i, g) in v.iter().enumerate() {
        if g.shape() != u.matrix().shape() {
            return Err(Error::DimensionMismatch { expected: u.dim(), found: g.nrows() });
        }
        if linalg::unitarity_defect(g) > tol {
            return Err(invalid(format!("group element {i} is not unitary")));
        }
    }
    Ok(commutator_defect(v, u) < tol)
}

/// Whether `w` maps `span{zeta}` into itself: `|<w zeta, zeta>| = ||w zeta|| ||zeta||`.
pub fn preserves_line<T: Real>(w: &CMatrix<T>, zeta: &CVector<T>, tol: T) -> bool {
    let wz = w * zeta;
    let lhs = cabs(wz.dotc(zeta));
    let rhs = linalg::vector_norm(&wz) * linalg::vector_norm(zeta);
    (rhs - lhs).abs() < tol
}

/// Real dimension of the largest local symmetry group, `U(d - 1)`.
pub fn local_symmetry_group_dimension<T: Real>(params: &QuasiDeltaParams<T>) -> usize {
    let m = params.degree() - 1;
    m * m
}

/// Random element of the local symmetry group: `e^{i beta}` on `zeta` and a
/// Haar unitary on its orthogonal complement.
pub fn random_local_symmetry<T: Real, R: Rng + ?Sized>(
    params: &QuasiDeltaParams<T>,
    rng: &mut R,
) -> CMatrix<T> {
    let d = params.degree();
    let basis = zeta_adapted_basis(params);
    let mut inner = CMatrix::<T>::zeros(d, d);
    inner[(0, 0)] = cis(linalg::random_angle(rng));
    if d > 1 {
        let q: CMatrix<T> = linalg::random_unitary(rng, d - 1);
        inner.view_mut((1, 1), (d - 1, d - 1)).copy_from(&q);
    }
    &basis * inner * basis.adjoint()
}

/// Orthonormal basis whose first column is `zeta / ||zeta||`.
fn zeta_adapted_basis<T: Real>(params: &QuasiDeltaParams<T>) -> CMatrix<T> {
    let d = params.degree();
    let zeta = build_zeta(params).components().clone();
    let mut m = CMatrix::<T>::identity(d, d);
    m.set_column(0, &zeta);
    // Any column other than e_1 can be dropped since zeta_0 = 1 keeps
    // {zeta, e_2, ..., e_d} independent.
    let q = m.qr().q();
    let phase = q[(0, 0)].unscale(cabs(q[(0, 0)]));
    let mut q = q;
    let mut c0 = q.column_mut(0);
    c0 /= phase;
    q
}

/// Parameters of `V* U V` when it stays in the quasi-delta family.
pub fn conjugate_quasi_delta<T: Real>(
    v: &CMatrix<T>,
    params: &QuasiDeltaParams<T>,
) -> Result<QuasiDeltaParams<T>> {
    let d = params.degree();
    if v.shape() != (d, d) {
        return Err(Error::DimensionMismatch { expected: d, found: v.nrows() });
    }
    if linalg::unitarity_defect(v) > T::tol(1e-10) {
        return Err(invalid("conjugating matrix is not unitary"));
    }
    let zeta = build_zeta(params).components().clone();
    let moved = v.adjoint() * zeta;
    let m0 = cabs(moved[0]);
    if let Some(j) = (1..d).find(|&j| (cabs(moved[j]) - m0).abs() > T::tol(1e-10)) {
        return Err(Error::NotQuasiDelta(format!(
            "entries 0 and {j} of V* zeta have moduli {} and {}",
            m0,
            cabs(moved[j])
        )));
    }
    let a0 = carg(moved[0]);
    let alphas = (1..d).map(|j| wrap_angle(carg(moved[j]) - a0)).collect();
    let out = QuasiDeltaParams::new(params.delta(), alphas)?;
    let u = build_quasi_delta_block(params);
    let lhs = v.adjoint() * u.matrix() * v;
    let defect = linalg::spectral_norm(&(lhs - build_quasi_delta_block(&out).matrix()));
    if defect > T::tol(1e-10) {
        return Err(Error::NotQuasiDelta(format!("conjugated block differs by {defect:e}")));
    }
    Ok(out)
}

/// Per-edge phases of the twisted shift, keyed by `(cell, kind)`.
///
/// Angles are stored in `[0, 2pi)`; missing entries read as zero. Two
/// assignments are equal when every angle agrees modulo `2pi` to `1e-12`.
#[derive(Clone, Debug, Default)]
pub struct ThetaAssignment<T: Real> {
    values: BTreeMap<(i64, ChainKind), T>,
}

impl<T: Real> ThetaAssignment<T> {
    pub fn zero() -> Self {
        Self { values: BTreeMap::new() }
    }

    /// `th^u = u`, `th^v = v` on every cell of the window.
    pub fn constant(window: CellWindow, u: T, v: T) -> Self {
        let mut t = Self::zero();
        for i in window.cells() {
            t.set(i, ChainKind::U, u);
            t.set(i, ChainKind::V, v);
        }
        t.set(window.end + 1, ChainKind::U, u);
        t
    }

    pub fn set(&mut self, cell: i64, kind: ChainKind, angle: T) {
        self.values.insert((cell, kind), wrap_angle(angle));
    }

    pub fn get(&self, cell: i64, kind: ChainKind) -> T {
        self.values.get(&(cell, kind)).copied().unwrap_or_else(T::zero)
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, ChainKind, T)> + '_ {
        self.values.iter().map(|(&(c, k), &t)| (c, k, t))
    }

    pub fn is_zero(&self, tol: T) -> bool {
        self.values.values().all(|&t| angle_distance(t, T::zero()) < tol)
    }

    fn keys_union<'a>(&'a self, other: &'a Self) -> impl Iterator<Item = (i64, ChainKind)> + 'a {
        self.values.keys().chain(other.values.keys()).copied()
    }
}

impl<T: Real> PartialEq for ThetaAssignment<T> {
    fn eq(&self, other: &Self) -> bool {
        let tol = T::tol(1e-12);
        self.keys_union(other)
            .all(|(c, k)| angle_distance(self.get(c, k), other.get(c, k)) < tol)
    }
}

/// The shift by `power` cells, twisted by `theta`, acting on boundary data of
/// a chain window.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRepElement<T: Real> {
    power: i64,
    window: CellWindow,
    theta: ThetaAssignment<T>,
}

pub fn build_trace_generator<T: Real>(
    theta: ThetaAssignment<T>,
    window: CellWindow,
) -> Result<TraceRepElement<T>> {
    if window.len() < 2 {
        return Err(invalid("the shift needs a window of at least two cells"));
    }
    Ok(TraceRepElement { power: 1, window, theta })
}

impl<T: Real> TraceRepElement<T> {
    pub fn power(&self) -> i64 {
        self.power
    }

    pub fn window(&self) -> CellWindow {
        self.window
    }

    pub fn theta(&self) -> &ThetaAssignment<T> {
        &self.theta
    }

    /// Same twist, different power.
    pub fn with_power(&self, power: i64) -> Self {
        Self { power, ..self.clone() }
    }

    pub fn compose(&self, other: &Self) -> Result<Self> {
        if self.window != other.window || self.theta != other.theta {
            return Err(invalid("composed shifts must share window and twist"));
        }
        Ok(self.with_power(self.power + other.power))
    }

    pub fn inverse(&self) -> Self {
        self.with_power(-self.power)
    }

    /// Phases of the one-cell shift from vertex `s` to `s + 1`, in the
    /// vertex layout `(u_s right, v_s left, v_s right, u_{s+1} left)`.
    pub fn generator_phases(&self, source: i64) -> [Complex<T>; 4] {
        let t = &self.theta;
        let u0 = cis(-t.get(source, ChainKind::U));
        let v1 = cis(-t.get(source + 1, ChainKind::V));
        let u1 = cis(-t.get(source + 1, ChainKind::U));
        [u0, v1, v1, u1]
    }

    /// Phases carrying vertex `source` to `source + power`.
    pub fn phases(&self, source: i64) -> [Complex<T>; 4] {
        let one = Complex::new(T::one(), T::zero());
        let mut acc = [one; 4];
        let steps = self.power.unsigned_abs() as i64;
        for n in 0..steps {
            let g = if self.power >= 0 {
                self.generator_phases(source + n)
            } else {
                self.generator_phases(source - n - 1).map(|z| z.conj())
            };
            for (a, b) in acc.iter_mut().zip(g) {
                *a *= b;
            }
        }
        acc
    }

    /// `(v phi)_j = phases(j - power) * phi_{j - power}`; vertices whose
    /// preimage falls outside the window receive zeros.
    pub fn apply(&self, x: &BoundaryVector<T>) -> Result<BoundaryVector<T>> {
        let cells: Vec<i64> = self.window.cells().collect();
        if x.vertex_ids() != cells.as_slice() || (0..x.num_blocks()).any(|i| x.block(i).len() != 4)
        {
            return Err(invalid("boundary vector does not have the chain window layout"));
        }
        let mut out = x.clone();
        for (j, &cell) in cells.iter().enumerate() {
            let src = cell - self.power;
            let block = out.block_mut(j);
            if self.window.contains(src) {
                let s = (src - self.window.start) as usize;
                let p = self.phases(src);
                for (pos, z) in block.iter_mut().enumerate() {
                    *z = p[pos] * x.block(s)[pos];
                }
            } else {
                block.iter_mut().for_each(|z| *z = Complex::new(T::zero(), T::zero()));
            }
        }
        Ok(out)
    }

    /// Dense matrix of [`TraceRepElement::apply`] on the window.
    pub fn matrix(&self) -> CMatrix<T> {
        let n = 4 * self.window.len();
        let mut m = CMatrix::zeros(n, n);
        for src in self.window.cells() {
            let dst = src + self.power;
            if !self.window.contains(dst) {
                continue;
            }
            let (r, c) = (4 * (dst - self.window.start) as usize, 4 * (src - self.window.start) as usize);
            for (pos, z) in self.phases(src).into_iter().enumerate() {
                m[(r + pos, c + pos)] = z;
            }
        }
        m
    }
}

/// Quasi-delta parameters of consecutive chain cells starting at `first_cell`.
#[derive(Clone, Debug, PartialEq)]
pub struct CellParams<T: Real> {
    pub first_cell: i64,
    pub params: Vec<QuasiDeltaParams<T>>,
}

impl<T: Real> CellParams<T> {
    pub fn new(first_cell: i64, params: Vec<QuasiDeltaParams<T>>) -> Result<Self> {
        if params.is_empty() {
            return Err(invalid("no cells"));
        }
        if let Some(p) = params.iter().find(|p| p.degree() != 4) {
            return Err(invalid(format!("chain vertices have degree 4, got {}", p.degree())));
        }
        Ok(Self { first_cell, params })
    }

    pub fn window(&self) -> CellWindow {
        CellWindow { start: self.first_cell, end: self.first_cell + self.params.len() as i64 - 1 }
    }

    pub fn get(&self, cell: i64) -> &QuasiDeltaParams<T> {
        &self.params[(cell - self.first_cell) as usize]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ZInvarianceReport<T: Real> {
    /// Max over interior vertices of the per-vertex residual.
    pub residual: T,
    /// `(i, ||v U_{i-1} v* - U_i||)` for every vertex `i` with a predecessor in
    /// the window.
    pub per_vertex: Vec<(i64, T)>,
    pub invariant: bool,
}

/// Compares each block with its predecessor carried over by the twisted shift.
///
/// The window border blocks have no predecessor inside the window and are
/// not counted.
pub fn check_z_invariance<T: Real>(
    cells: &CellParams<T>,
    theta: &ThetaAssignment<T>,
    tol: T,
) -> Result<ZInvarianceReport<T>> {
    let window = cells.window();
    let gen = build_trace_generator(theta.clone(), window)?;
    let blocks: Vec<CMatrix<T>> =
        cells.params.iter().map(|p| build_quasi_delta_block(p).matrix().clone()).collect();
    let per_vertex: Vec<(i64, T)> = (window.start + 1..=window.end)
        .into_par_iter()
        .map(|i| {
            let prev = &blocks[(i - 1 - window.start) as usize];
            let cur = &blocks[(i - window.start) as usize];
            let g = CMatrix::from_diagonal(&CVector::from_row_slice(&gen.generator_phases(i - 1)));
            let moved = &g * prev * g.adjoint();
            (i, linalg::spectral_norm(&(moved - cur)))
        })
        .collect();
    let residual = per_vertex.iter().map(|&(_, r)| r).fold(T::zero(), |a, b| a.max(b));
    Ok(ZInvarianceReport { residual, per_vertex, invariant: residual < tol })
}

/// Finds shift phases making the chain invariant, or the first vertex where
/// no choice works.
///
/// Requires a constant `delta` and a constant `alpha_1 - alpha_2`. The link
/// phases follow `th^u_i = th^u_{i-1} + alpha_3^{i-1} - alpha_3^i` from
/// `th^u = 0` at the first cell; the loop phases follow
/// `th^v_i = th^u_{i-1} + alpha_1^{i-1} - alpha_1^i`, and the first loop phase,
/// which no block constrains, copies its neighbour.
pub fn solve_theta<T: Real>(cells: &CellParams<T>) -> Result<ThetaAssignment<T>> {
    let window = cells.window();
    let tol = T::tol(1e-10);
    let mut theta = ThetaAssignment::zero();
    theta.set(window.start, ChainKind::U, T::zero());
    let mut th_u = T::zero();
    for i in window.start + 1..=window.end {
        let (prev, cur) = (cells.get(i - 1), cells.get(i));
        if angle_distance(prev.delta(), cur.delta()) > tol {
            return Err(Error::Obstruction {
                vertex: i,
                reason: format!(
                    "eigenvalue mismatch (delta {} vs {})",
                    prev.delta(),
                    cur.delta()
                ),
            });
        }
        let (pa, ca) = (prev.alphas(), cur.alphas());
        let from_first = pa[0] - ca[0];
        let from_second = pa[1] - ca[1];
        if angle_distance(from_first, from_second) > tol {
            return Err(Error::Obstruction {
                vertex: i,
                reason: format!(
                    "loop phase difference alpha_1 - alpha_2 changes by {}",
                    (from_first - from_second)
                ),
            });
        }
        theta.set(i, ChainKind::V, th_u + from_first);
        th_u += pa[2] - ca[2];
        theta.set(i, ChainKind::U, th_u);
    }
    let first_loop = if window.len() > 1 {
        theta.get(window.start + 1, ChainKind::V)
    } else {
        T::zero()
    };
    theta.set(window.start, ChainKind::V, first_loop);
    Ok(theta)
}
