//! Vertex unitaries, the quasi-delta family and the partial Cayley transform.
//!
//! A self-adjoint Laplacian on a graph is fixed by a unitary `U` acting on
//! boundary data through `phi - i phidot = U (phi + i phidot)`. The unitary
//! is block diagonal with one block per vertex. The quasi-delta block is
//! `e^{i delta} P - (I - P)` with `P` the rank-one projector onto
//! `zeta = (1, e^{i alpha_1}, ...)`.

use std::collections::BTreeMap;

use nalgebra::Complex;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::graph::{BoundaryVector, MetricGraph, TraceData, VertexId};
use crate::linalg::{self, CMatrix, CVector};
use crate::scalar::{cabs, cis, imag_unit, real, wrap_symmetric, Real};

/// `(delta, alpha_1, ..., alpha_{d-1})` of a quasi-delta vertex.
#[derive(Clone, Debug, PartialEq)]
pub struct QuasiDeltaParams<T: Real> {
    delta: T,
    alphas: Vec<T>,
}

impl<T: Real> QuasiDeltaParams<T> {
    /// `delta` is reduced to `(-pi, pi]`; `delta = pi` is rejected because the
    /// block would collapse to `-I`.
    pub fn new(delta: T, alphas: Vec<T>) -> Result<Self> {
        if !delta.is_finite() || alphas.iter().any(|a| !a.is_finite()) {
            return Err(invalid("quasi-delta angles must be finite"));
        }
        let delta = wrap_symmetric(delta);
        if cabs(cis(delta) + real(T::one())) < T::tol(1e-12) {
            return Err(invalid("delta = pi is excluded from the quasi-delta family"));
        }
        Ok(Self { delta, alphas })
    }

    pub fn delta(&self) -> T {
        self.delta
    }

    pub fn alphas(&self) -> &[T] {
        &self.alphas
    }

    pub fn degree(&self) -> usize {
        self.alphas.len() + 1
    }

    /// Parameters of the entrywise conjugate block: `(-delta, -alphas)`.
    pub fn conjugated(&self) -> Self {
        Self {
            delta: wrap_symmetric(-self.delta),
            alphas: self.alphas.iter().map(|&a| -a).collect(),
        }
    }
}

/// `(1, e^{i alpha_1}, ..., e^{i alpha_{d-1}})`.
#[derive(Clone, Debug, PartialEq)]
pub struct ZetaVector<T: Real>(CVector<T>);

impl<T: Real> ZetaVector<T> {
    pub fn components(&self) -> &CVector<T> {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Rank-one orthogonal projector onto `span{zeta}`.
    pub fn projector(&self) -> CMatrix<T> {
        let d = T::from_usize(self.dim()).expect("dimension fits scalar");
        (&self.0 * self.0.adjoint()).unscale(d)
    }
}

pub fn build_zeta<T: Real>(params: &QuasiDeltaParams<T>) -> ZetaVector<T> {
    let mut v = Vec::with_capacity(params.degree());
    v.push(real(T::one()));
    v.extend(params.alphas.iter().map(|&a| cis(a)));
    ZetaVector(CVector::from_vec(v))
}

/// Unitary boundary block of one vertex.
#[derive(Clone, Debug, PartialEq)]
pub struct VertexUnitary<T: Real> {
    matrix: CMatrix<T>,
}

impl<T: Real> VertexUnitary<T> {
    /// Checks `U* U = I` entrywise to `1e-12`.
    pub fn new(matrix: CMatrix<T>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::DimensionMismatch { expected: matrix.nrows(), found: matrix.ncols() });
        }
        let defect = linalg::unitarity_defect(&matrix);
        if !(defect < T::tol(1e-12)) {
            return Err(invalid(format!("matrix is not unitary (defect {defect:e})")));
        }
        Ok(Self { matrix })
    }

    /// Neumann block (`phidot = 0`).
    pub fn identity(d: usize) -> Self {
        Self { matrix: CMatrix::identity(d, d) }
    }

    /// Dirichlet block (`phi = 0`).
    pub fn minus_identity(d: usize) -> Self {
        Self { matrix: -CMatrix::<T>::identity(d, d) }
    }

    pub fn diagonal(phases: &[T]) -> Self {
        let diag = CVector::from_iterator(phases.len(), phases.iter().map(|&t| cis(t)));
        Self { matrix: CMatrix::from_diagonal(&diag) }
    }

    pub fn matrix(&self) -> &CMatrix<T> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// `e^{i delta} P - (I - P)` for the projector `P` onto `zeta`.
pub fn build_quasi_delta_block<T: Real>(params: &QuasiDeltaParams<T>) -> VertexUnitary<T> {
    let d = params.degree();
    let p = build_zeta(params).projector();
    let matrix = p * (cis(params.delta) + real(T::one())) - CMatrix::<T>::identity(d, d);
    VertexUnitary { matrix }
}

/// One unitary block per vertex.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockUnitary<T: Real> {
    blocks: BTreeMap<VertexId, VertexUnitary<T>>,
}

impl<T: Real> BlockUnitary<T> {
    pub fn new(blocks: BTreeMap<VertexId, VertexUnitary<T>>) -> Self {
        Self { blocks }
    }

    /// Builds a block per vertex and checks it against the vertex degree.
    pub fn for_graph<F>(graph: &MetricGraph<T>, mut f: F) -> Result<Self>
    where
        F: FnMut(VertexId, usize) -> Result<VertexUnitary<T>>,
    {
        let mut blocks = BTreeMap::new();
        for v in graph.vertices() {
            let u = f(v.id, v.degree())?;
            if u.dim() != v.degree() {
                return Err(Error::DimensionMismatch { expected: v.degree(), found: u.dim() });
            }
            blocks.insert(v.id, u);
        }
        Ok(Self { blocks })
    }

    pub fn blocks(&self) -> &BTreeMap<VertexId, VertexUnitary<T>> {
        &self.blocks
    }

    pub fn get(&self, vertex: VertexId) -> Option<&VertexUnitary<T>> {
        self.blocks.get(&vertex)
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Block-diagonal matrix, blocks in ascending vertex id.
    pub fn assembled(&self) -> CMatrix<T> {
        let n: usize = self.blocks.values().map(VertexUnitary::dim).sum();
        let mut m = CMatrix::zeros(n, n);
        let mut off = 0;
        for u in self.blocks.values() {
            let d = u.dim();
            m.view_mut((off, off), (d, d)).copy_from(u.matrix());
            off += d;
        }
        m
    }

    /// Applies the blocks to a boundary vector laid out by vertex.
    pub fn apply(&self, x: &BoundaryVector<T>) -> Result<BoundaryVector<T>> {
        let mut out = x.clone();
        for (i, &vid) in x.vertex_ids().iter().enumerate() {
            let u = self.block_for(vid, x.block(i).len())?;
            let y = u.matrix() * CVector::from_column_slice(x.block(i));
            out.block_mut(i).copy_from_slice(y.as_slice());
        }
        Ok(out)
    }

    fn block_for(&self, vid: VertexId, dim: usize) -> Result<&VertexUnitary<T>> {
        let u = self
            .blocks
            .get(&vid)
            .ok_or_else(|| invalid(format!("no unitary block for vertex {vid}")))?;
        if u.dim() != dim {
            return Err(Error::DimensionMismatch { expected: u.dim(), found: dim });
        }
        Ok(u)
    }
}

/// Numerical tolerances for spectral decisions around `-1`.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct SpectralOptions<T: Real> {
    /// Eigenvalues this close to `-1` are treated as exactly `-1`.
    pub minus_one_tol: T,
    /// Eigenvalues outside the cluster but closer than this make the Cayley
    /// transform ill-conditioned.
    pub ill_conditioned_below: T,
    /// Minimum distance from `-1` required to certify a spectral gap.
    pub gap_epsilon: T,
}

impl<T: Real> Default for SpectralOptions<T> {
    fn default() -> Self {
        Self {
            minus_one_tol: T::tol(1e-9),
            ill_conditioned_below: T::tol(1e-12),
            gap_epsilon: T::tol(1e-6),
        }
    }
}

/// Orthonormal split of `C^d` into `ker(U + 1)` and its complement, with the
/// eigenvalues of `U` on the complement.
#[derive(Clone, Debug)]
pub struct SpectralSplit<T: Real> {
    pub kernel: CMatrix<T>,
    pub range: CMatrix<T>,
    pub range_eigenvalues: Vec<Complex<T>>,
}

pub fn spectral_split<T: Real>(
    u: &VertexUnitary<T>,
    opts: &SpectralOptions<T>,
) -> Result<SpectralSplit<T>> {
    let s = linalg::schur(u.matrix())?;
    let d = u.dim();
    let minus_one = real(-T::one());
    let (mut kernel, mut range, mut eigs) = (Vec::new(), Vec::new(), Vec::new());
    for j in 0..d {
        let z = s.t[(j, j)];
        let dist = cabs(z - minus_one);
        let col = s.q.column(j).into_owned();
        if dist <= opts.minus_one_tol {
            kernel.push(col);
        } else {
            if dist < opts.ill_conditioned_below {
                return Err(Error::IllConditioned { distance: dist.to_f64_lossy() });
            }
            range.push(col);
            eigs.push(z);
        }
    }
    let cols = |v: Vec<CVector<T>>| {
        if v.is_empty() {
            CMatrix::zeros(d, 0)
        } else {
            CMatrix::from_columns(&v)
        }
    };
    Ok(SpectralSplit { kernel: cols(kernel), range: cols(range), range_eigenvalues: eigs })
}

/// `A_U = i P (1 - U) / (1 + U)` on `ker(U + 1)^perp`, computed from the
/// spectral decomposition of `U` so exact `-1` eigenvalues are harmless.
pub fn partial_cayley<T: Real>(
    u: &VertexUnitary<T>,
    opts: &SpectralOptions<T>,
) -> Result<CMatrix<T>> {
    let split = spectral_split(u, opts)?;
    let d = u.dim();
    let mut a = CMatrix::zeros(d, d);
    let one = real(T::one());
    for (j, &z) in split.range_eigenvalues.iter().enumerate() {
        let f = (imag_unit::<T>() * (one - z) / (one + z)).re;
        let q = split.range.column(j);
        a += (&q * q.adjoint()).scale(f);
    }
    Ok(a)
}

/// Union of the block spectra and the distance of the non-`-1` part from `-1`.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockSpectrum<T: Real> {
    pub eigenvalues: Vec<(VertexId, Complex<T>)>,
    /// Smallest distance from `-1` among eigenvalues outside the `-1`
    /// cluster; `None` when every eigenvalue is `-1`.
    pub gap_margin: Option<T>,
    pub has_gap: bool,
}

impl<T: Real> BlockSpectrum<T> {
    pub fn values(&self) -> Vec<Complex<T>> {
        self.eigenvalues.iter().map(|&(_, z)| z).collect()
    }

    /// Distinct eigenvalues, merging points closer than `tol`.
    pub fn distinct(&self, tol: T) -> Vec<Complex<T>> {
        let mut out: Vec<Complex<T>> = Vec::new();
        for &(_, z) in &self.eigenvalues {
            if !out.iter().any(|&w| cabs(w - z) < tol) {
                out.push(z);
            }
        }
        out
    }
}

pub fn blockwise_spectrum<T: Real>(
    blocks: &BlockUnitary<T>,
    opts: &SpectralOptions<T>,
) -> Result<BlockSpectrum<T>> {
    let per_block: Vec<Result<Vec<(VertexId, Complex<T>)>>> = blocks
        .blocks
        .par_iter()
        .map(|(&vid, u)| {
            Ok(linalg::eigenvalues(u.matrix())?.into_iter().map(|z| (vid, z)).collect())
        })
        .collect();
    let mut eigenvalues = Vec::new();
    for b in per_block {
        eigenvalues.extend(b?);
    }
    let minus_one = real(-T::one());
    let gap_margin = eigenvalues
        .iter()
        .map(|&(_, z)| cabs(z - minus_one))
        .filter(|&d| d > opts.minus_one_tol)
        .fold(None, |acc: Option<T>, d| Some(acc.map_or(d, |a| a.min(d))));
    let has_gap = gap_margin.map_or(true, |m| m > opts.gap_epsilon);
    Ok(BlockSpectrum { eigenvalues, gap_margin, has_gap })
}

/// `||(phi - i phidot) - U (phi + i phidot)||` over every block.
pub fn boundary_residual<T: Real>(u: &BlockUnitary<T>, data: &TraceData<T>) -> Result<T> {
    if !data.phi.same_layout(&data.phidot) {
        return Err(invalid("phi and phidot have different block layouts"));
    }
    let i = imag_unit::<T>();
    let mut acc = T::zero();
    for (b, &vid) in data.phi.vertex_ids().iter().enumerate() {
        let phi = CVector::from_column_slice(data.phi.block(b));
        let dot = CVector::from_column_slice(data.phidot.block(b));
        let block = u.block_for(vid, phi.len())?;
        let r = (&phi - &dot * i) - block.matrix() * (&phi + &dot * i);
        acc += r.norm_squared();
    }
    Ok(acc.sqrt())
}

/// `||P phi||` with `P` the projector onto `ker(U + 1)`.
pub fn kernel_projection_condition<T: Real>(
    u: &VertexUnitary<T>,
    phi: &CVector<T>,
    opts: &SpectralOptions<T>,
) -> Result<T> {
    if phi.len() != u.dim() {
        return Err(Error::DimensionMismatch { expected: u.dim(), found: phi.len() });
    }
    let split = spectral_split(u, opts)?;
    let proj = &split.kernel * (split.kernel.adjoint() * phi);
    Ok(linalg::vector_norm(&proj))
}

/// The boundary equation of one vertex as a `d x 2d` system in `(phi, phidot)`.
pub fn boundary_system<T: Real>(u: &VertexUnitary<T>) -> CMatrix<T> {
    let d = u.dim();
    let id = CMatrix::<T>::identity(d, d);
    let i = imag_unit::<T>();
    let mut m = CMatrix::zeros(d, 2 * d);
    m.view_mut((0, 0), (d, d)).copy_from(&(&id - u.matrix()));
    m.view_mut((0, d), (d, d)).copy_from(&((&id + u.matrix()) * (-i)));
    m
}

/// The same conditions split by `ker(U + 1)`: `P phi = 0` on the kernel and
/// the Robin relation `P_perp phidot = -A_U phi` on its complement.
pub fn projected_system<T: Real>(
    u: &VertexUnitary<T>,
    opts: &SpectralOptions<T>,
) -> Result<CMatrix<T>> {
    let d = u.dim();
    let split = spectral_split(u, opts)?;
    let a = partial_cayley(u, opts)?;
    let (nk, nr) = (split.kernel.ncols(), split.range.ncols());
    let mut m = CMatrix::zeros(nk + nr, 2 * d);
    m.view_mut((0, 0), (nk, d)).copy_from(&split.kernel.adjoint());
    let rows = split.range.adjoint();
    m.view_mut((nk, 0), (nr, d)).copy_from(&(&rows * a));
    m.view_mut((nk, d), (nr, d)).copy_from(&rows);
    Ok(m)
}
