//! The chain with one loop per vertex.
//!
//! Cell `i` owns the link `u_i` (entering vertex `i` from the left) and the
//! loop `v_i` (both ends at vertex `i`). On every edge the solution at
//! wavenumber `k` is `A e^{ikx} + B e^{-ikx}`. The four matching equations
//! at vertex `i` relate `(A,B)` on `u_i`, `v_i` and `u_{i+1}`; eliminating
//! the loop gives the 2x2 transfer matrix `T(k)` from `u_i` to `u_{i+1}`.
//!
//! Parameters are stored in node-equation form: the matching equations read
//! `t = e^{i alpha_j} (trace on edge j)` and carry `+4 tan(delta/2) t`. The
//! corresponding vertex unitary is the quasi-delta block of `(-delta, -alpha)`,
//! see [`ChainConfig::block_params`].

use std::collections::BTreeMap;

use nalgebra::{Complex, ComplexField, Matrix2, Vector2};
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::extensions::{build_quasi_delta_block, BlockUnitary, QuasiDeltaParams, VertexUnitary};
use crate::graph::{
    build_chain_graph, chain_edge_id, trace_of_plane_wave, CellWindow, ChainKind, EdgeCoefficients,
    EdgeId, MetricGraph, TraceData,
};
use crate::linalg::{self, CMatrix, CVector};
use crate::scalar::{angle_distance, cabs, carg, cis, imag_unit, real, Real};
use crate::symmetry::{solve_theta, CellParams, ThetaAssignment};

type C<T> = Complex<T>;

/// How vertex parameters vary along the chain.
#[derive(Clone, Debug, PartialEq)]
pub enum ParamRule<T: Real> {
    Constant(QuasiDeltaParams<T>),
    /// Explicit values by cell; a cell without an entry takes the nearest
    /// entry to its left, or the first entry when none lies to the left.
    PerCell(BTreeMap<i64, QuasiDeltaParams<T>>),
}

impl<T: Real> ParamRule<T> {
    pub fn get(&self, cell: i64) -> &QuasiDeltaParams<T> {
        match self {
            ParamRule::Constant(p) => p,
            ParamRule::PerCell(map) => map
                .range(..=cell)
                .next_back()
                .or_else(|| map.iter().next())
                .map(|(_, p)| p)
                .expect("non-empty rule"),
        }
    }

    /// `alphas(i) = base + i * drift` for every cell of `cells`.
    pub fn linear_drift(
        delta: T,
        base: [T; 3],
        drift: [T; 3],
        cells: std::ops::RangeInclusive<i64>,
    ) -> Result<Self> {
        let mut map = BTreeMap::new();
        for i in cells {
            let s = <T as Real>::from_i64(i);
            let alphas = (0..3).map(|j| base[j] + drift[j] * s).collect();
            map.insert(i, QuasiDeltaParams::new(delta, alphas)?);
        }
        if map.is_empty() {
            return Err(invalid("empty cell range"));
        }
        Ok(ParamRule::PerCell(map))
    }
}

/// A window of the loop chain with its lengths and vertex parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainConfig<T: Real> {
    pub window: CellWindow,
    pub l_u: T,
    pub l_v: T,
    rule: ParamRule<T>,
}

impl<T: Real> ChainConfig<T> {
    pub fn new(window: CellWindow, l_u: T, l_v: T, rule: ParamRule<T>) -> Result<Self> {
        if !(l_u > T::zero()) || !(l_v > T::zero()) || !l_u.is_finite() || !l_v.is_finite() {
            return Err(invalid(format!("chain lengths must be positive, got l_u={l_u}, l_v={l_v}")));
        }
        let bad = match &rule {
            ParamRule::Constant(p) => p.degree() != 4,
            ParamRule::PerCell(m) => m.is_empty() || m.values().any(|p| p.degree() != 4),
        };
        if bad {
            return Err(invalid("chain vertices need exactly three alphas each"));
        }
        Ok(Self { window, l_u, l_v, rule })
    }

    /// Unit lengths and the same parameters at every vertex.
    pub fn uniform(window: CellWindow, delta: T, alphas: [T; 3]) -> Result<Self> {
        let p = QuasiDeltaParams::new(delta, alphas.to_vec())?;
        Self::new(window, T::one(), T::one(), ParamRule::Constant(p))
    }

    pub fn rule(&self) -> &ParamRule<T> {
        &self.rule
    }

    pub fn with_window(&self, window: CellWindow) -> Self {
        Self { window, ..self.clone() }
    }

    /// Parameters as they appear in the matching equations.
    pub fn node_params(&self, cell: i64) -> &QuasiDeltaParams<T> {
        self.rule.get(cell)
    }

    /// Parameters of the vertex unitary reproducing the matching equations.
    pub fn block_params(&self, cell: i64) -> QuasiDeltaParams<T> {
        self.node_params(cell).conjugated()
    }

    pub fn vertex_unitary(&self, cell: i64) -> VertexUnitary<T> {
        build_quasi_delta_block(&self.block_params(cell))
    }

    pub fn block_unitary(&self) -> BlockUnitary<T> {
        BlockUnitary::new(self.window.cells().map(|i| (i, self.vertex_unitary(i))).collect())
    }

    /// Unitary-form parameters of every window cell.
    pub fn cell_params(&self) -> CellParams<T> {
        CellParams {
            first_cell: self.window.start,
            params: self.window.cells().map(|i| self.block_params(i)).collect(),
        }
    }

    /// `alpha_2 - alpha_1` at a cell.
    pub fn alpha_gap(&self, cell: i64) -> T {
        let a = self.node_params(cell).alphas();
        a[1] - a[0]
    }

    pub fn graph(&self) -> Result<MetricGraph<T>> {
        build_chain_graph(self.window, self.l_u, self.l_v)
    }

    /// Every window vertex carries the same parameters (modulo `2pi`).
    pub fn is_vertex_independent(&self) -> bool {
        match &self.rule {
            ParamRule::Constant(_) => true,
            ParamRule::PerCell(_) => {
                let first = self.node_params(self.window.start);
                let tol = T::tol(1e-14);
                self.window.cells().all(|i| {
                    let p = self.node_params(i);
                    angle_distance(p.delta(), first.delta()) < tol
                        && p.alphas().iter().zip(first.alphas()).all(|(a, b)| angle_distance(*a, *b) < tol)
                })
            }
        }
    }

    /// Twist phases making the window invariant under the one-cell shift.
    pub fn invariance_twist(&self) -> Result<ThetaAssignment<T>> {
        solve_theta(&self.cell_params())
    }
}

/// The four matching equations of one vertex as a `4 x 6` system in
/// `(A_i^u, B_i^u, A_i^v, B_i^v, A_{i+1}^u, B_{i+1}^u)`.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeSystem<T: Real> {
    pub cell: i64,
    pub matrix: CMatrix<T>,
}

impl<T: Real> NodeSystem<T> {
    pub fn defect(&self, x: &[C<T>; 6]) -> T {
        linalg::vector_norm(&(&self.matrix * CVector::from_row_slice(x)))
    }
}

fn check_k<T: Real>(k: T) -> Result<()> {
    if !(k > T::zero()) || !k.is_finite() {
        return Err(invalid(format!("wavenumber must be positive, got {k}")));
    }
    Ok(())
}

pub fn assemble_node_system<T: Real>(cfg: &ChainConfig<T>, cell: i64, k: T) -> Result<NodeSystem<T>> {
    check_k(k)?;
    let p = cfg.node_params(cell);
    let a = p.alphas();
    let (p1, p2, p3) = (cis(a[0]), cis(a[1]), cis(a[2]));
    let (eu, ev) = (cis(k * cfg.l_u), cis(k * cfg.l_v));
    let (eu_, ev_) = (eu.conj(), ev.conj());
    let tau = real((p.delta() / T::lit(2.0)).tan() * T::lit(4.0));
    let ik = imag_unit::<T>().scale(k);
    let z = real(T::zero());
    #[rustfmt::skip]
    let rows = [
        eu, eu_, -p1, -p1, z, z,
        eu, eu_, -p2 * ev, -p2 * ev_, z, z,
        eu, eu_, z, z, -p3, -p3,
        tau * eu - ik * eu, tau * eu_ + ik * eu_,
        ik * (p1 - p2 * ev), ik * (p2 * ev_ - p1),
        ik * p3, -ik * p3,
    ];
    Ok(NodeSystem { cell, matrix: CMatrix::from_row_slice(4, 6, &rows) })
}

/// `k l_v` within `1e-9` of a multiple of pi.
pub fn is_loop_resonant<T: Real>(k: T, l_v: T) -> bool {
    let x = k * l_v / T::pi();
    (x - x.round()).abs() * T::pi() < T::tol(1e-9)
}

/// `(A_{i+1}^u, B_{i+1}^u) = forward (A_i^u, B_i^u)`; the loop amplitudes are
/// `loop_map (A_i^u, B_i^u)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransferMatrix<T: Real> {
    pub cell: i64,
    pub forward: Matrix2<C<T>>,
    pub loop_map: Matrix2<C<T>>,
}

impl<T: Real> TransferMatrix<T> {
    pub fn apply(&self, x: &EdgeCoefficients<T>) -> EdgeCoefficients<T> {
        let y = self.forward * Vector2::new(x.a, x.b);
        EdgeCoefficients::new(y[0], y[1])
    }

    pub fn loop_coefficients(&self, x: &EdgeCoefficients<T>) -> EdgeCoefficients<T> {
        let y = self.loop_map * Vector2::new(x.a, x.b);
        EdgeCoefficients::new(y[0], y[1])
    }

    pub fn determinant(&self) -> C<T> {
        let m = &self.forward;
        m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]
    }

    pub fn trace(&self) -> C<T> {
        self.forward[(0, 0)] + self.forward[(1, 1)]
    }

    /// Eigenvalues, larger modulus first; equal moduli ordered by argument.
    pub fn eigenvalues(&self) -> [C<T>; 2] {
        let tr = self.trace();
        let det = self.determinant();
        let disc = ComplexField::sqrt(tr * tr - det * real(T::lit(4.0)));
        let (p, q) = (tr + disc, tr - disc);
        let big = if cabs(p) >= cabs(q) { p } else { q } * real(T::lit(0.5));
        let small = if cabs(big) > T::zero() { det / big } else { real(T::zero()) };
        let (mb, ms) = (cabs(big), cabs(small));
        if (mb - ms).abs() <= T::tol(1e-12) * mb.max(T::one()) && carg(small) < carg(big) {
            [small, big]
        } else {
            [big, small]
        }
    }

    /// Right eigenvector of `forward` for `lambda`: the smallest right
    /// singular vector of `forward - lambda I`, with its singular value.
    pub fn eigenvector(&self, lambda: C<T>) -> (Vector2<C<T>>, T) {
        let shifted = self.forward - Matrix2::identity() * lambda;
        let dyn_m = CMatrix::from_iterator(2, 2, shifted.iter().copied());
        let (sv, v) = linalg::svd_sorted(&dyn_m);
        (Vector2::new(v[(0, 1)], v[(1, 1)]), sv[1])
    }
}

/// Eliminates the loop from the matching equations of `cell`.
pub fn transfer_matrix<T: Real>(cfg: &ChainConfig<T>, cell: i64, k: T) -> Result<TransferMatrix<T>> {
    check_k(k)?;
    if is_loop_resonant(k, cfg.l_v) {
        return Err(Error::LoopResonance { cell, kl: (k * cfg.l_v).to_f64_lossy() });
    }
    let p = cfg.node_params(cell);
    let a = p.alphas();
    let (p1, p2, p3) = (cis(a[0]), cis(a[1]), cis(a[2]));
    let (q1, q2, q3) = (p1.conj(), p2.conj(), p3.conj());
    let (eu, ev) = (cis(k * cfg.l_u), cis(k * cfg.l_v));
    let (eu_, ev_) = (eu.conj(), ev.conj());
    let det_loop = ev_ - ev;
    let ca = (q1 * ev_ - q2) / det_loop;
    let cb = (q2 - q1 * ev) / det_loop;
    let tau = real((p.delta() / T::lit(2.0)).tan() * T::lit(4.0));
    let ik = imag_unit::<T>().scale(k);
    let half = real(T::lit(0.5));
    let column = |au: C<T>, bu: C<T>| {
        let t = au * eu + bu * eu_;
        let (av, bv) = (ca * t, cb * t);
        let sum = q3 * t;
        let diff = q3
            * ((au * eu - bu * eu_) - p1 * (av - bv) + p2 * (av * ev - bv * ev_) - tau * t / ik);
        ((sum + diff) * half, (sum - diff) * half, av, bv)
    };
    let one = real(T::one());
    let zero = real(T::zero());
    let (a0, b0, va0, vb0) = column(one, zero);
    let (a1, b1, va1, vb1) = column(zero, one);
    Ok(TransferMatrix {
        cell,
        forward: Matrix2::new(a0, a1, b0, b1),
        loop_map: Matrix2::new(va0, va1, vb0, vb1),
    })
}

/// One sample of a band scan.
#[derive(Clone, Debug, PartialEq)]
pub struct BandSample<T: Real> {
    pub k: T,
    pub eigenvalues: [C<T>; 2],
    pub det_abs: T,
    pub in_band: bool,
    /// The grid point was moved by half a step off a loop resonance.
    pub nudged: bool,
}

fn unit_modulus<T: Real>(z: C<T>) -> bool {
    (cabs(z) - T::one()).abs() <= T::tol(1e-8)
}

/// Transfer eigenvalues on a uniform grid of `samples` points in
/// `[k_min, k_max]`, at the first window cell.
///
/// Requires a shift-invariant chain: the transfer matrices of different
/// cells then differ by a phase, so the band flag does not depend on the
/// cell. Grid points on a loop resonance move half a step inward.
pub fn band_structure<T: Real>(
    cfg: &ChainConfig<T>,
    k_min: T,
    k_max: T,
    samples: usize,
) -> Result<Vec<BandSample<T>>> {
    check_k(k_min)?;
    if !(k_max > k_min) || samples < 2 {
        return Err(invalid("band scan needs k_min < k_max and at least two samples"));
    }
    cfg.invariance_twist()?;
    let step = (k_max - k_min) / T::from_usize(samples - 1).expect("sample count fits");
    let cell = cfg.window.start;
    (0..samples)
        .into_par_iter()
        .map(|j| {
            let mut k = k_min + step * T::from_usize(j).expect("index fits");
            let nudged = is_loop_resonant(k, cfg.l_v);
            if nudged {
                k = if j + 1 == samples { k - step / T::lit(2.0) } else { k + step / T::lit(2.0) };
            }
            let t = transfer_matrix(cfg, cell, k)?;
            let eigenvalues = t.eigenvalues();
            Ok(BandSample {
                k,
                eigenvalues,
                det_abs: cabs(t.determinant()),
                in_band: eigenvalues.iter().any(|&z| unit_modulus(z)),
                nudged,
            })
        })
        .collect()
}

/// Maximal runs of consecutive samples without a unit-modulus eigenvalue,
/// as `(first k, last k)`.
pub fn band_gaps<T: Real>(samples: &[BandSample<T>]) -> Vec<(T, T)> {
    let mut gaps = Vec::new();
    let mut open: Option<(T, T)> = None;
    for s in samples {
        if s.in_band {
            if let Some(g) = open.take() {
                gaps.push(g);
            }
        } else {
            open = Some(open.map_or((s.k, s.k), |(a, _)| (a, s.k)));
        }
    }
    gaps.extend(open);
    gaps
}

/// Key of a chain edge: `(cell, kind)`, ordered by cell, then `u` before `v`.
pub type ChainEdge = (i64, ChainKind);

/// Plane-wave amplitudes on every edge of a window at one wavenumber.
///
/// Only a candidate for a generalised eigenfunction: bounded coefficient
/// growth is necessary, not sufficient.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenCandidate<T: Real> {
    pub k: T,
    pub window: CellWindow,
    pub l_u: T,
    pub l_v: T,
    pub coeffs: BTreeMap<ChainEdge, EdgeCoefficients<T>>,
    /// Largest scaled node defect, see [`node_residual`].
    pub residual: T,
    /// Multiplier between consecutive links when built as a Bloch wave.
    pub bloch: Option<C<T>>,
    /// Modulus of the transfer eigenvalue driving the coefficients, when known.
    pub growth: Option<T>,
}

impl<T: Real> EigenCandidate<T> {
    pub fn coeff(&self, cell: i64, kind: ChainKind) -> EdgeCoefficients<T> {
        self.coeffs.get(&(cell, kind)).copied().unwrap_or_else(EdgeCoefficients::zero)
    }

    fn node_unknowns(&self, cell: i64) -> [C<T>; 6] {
        let (u, v, n) = (
            self.coeff(cell, ChainKind::U),
            self.coeff(cell, ChainKind::V),
            self.coeff(cell + 1, ChainKind::U),
        );
        [u.a, u.b, v.a, v.b, n.a, n.b]
    }

    /// Coefficients keyed by the edge ids of [`build_chain_graph`].
    pub fn edge_coefficients(&self) -> BTreeMap<EdgeId, EdgeCoefficients<T>> {
        self.coeffs.iter().map(|(&(c, kind), &x)| (chain_edge_id(c, kind), x)).collect()
    }

    /// Boundary traces on the window graph.
    pub fn traces(&self) -> Result<TraceData<T>> {
        let g = build_chain_graph(self.window, self.l_u, self.l_v)?;
        trace_of_plane_wave(&g, self.k, &self.edge_coefficients())
    }

    /// Recomputes the residual against a configuration.
    pub fn recompute_residual(&self, cfg: &ChainConfig<T>) -> Result<T> {
        node_residual(cfg, self)
    }
}

/// Max over window vertices of `||M_i x_i|| / max(1, ||x_i||)`: absolute for
/// unit-size amplitudes, relative once the coefficients grow.
pub fn node_residual<T: Real>(cfg: &ChainConfig<T>, cand: &EigenCandidate<T>) -> Result<T> {
    let mut worst = T::zero();
    for i in cand.window.cells() {
        let sys = assemble_node_system(cfg, i, cand.k)?;
        let x = cand.node_unknowns(i);
        let scale = x.iter().map(|z| z.norm_sqr()).fold(T::zero(), |a, b| a + b).sqrt().max(T::one());
        worst = worst.max(sys.defect(&x) / scale);
    }
    Ok(worst)
}

/// Loop and next-link amplitudes from the current link by a minimum-norm
/// least-squares solve of one node system; used on loop resonances.
fn solve_node<T: Real>(
    cfg: &ChainConfig<T>,
    cell: i64,
    k: T,
    u: &EdgeCoefficients<T>,
) -> Result<(EdgeCoefficients<T>, EdgeCoefficients<T>)> {
    let sys = assemble_node_system(cfg, cell, k)?;
    let lhs = sys.matrix.columns(2, 4).into_owned();
    let rhs = -(sys.matrix.columns(0, 2) * CVector::from_vec(vec![u.a, u.b]));
    let y = linalg::least_squares(&lhs, &rhs, T::tol(1e-13));
    Ok((EdgeCoefficients::new(y[0], y[1]), EdgeCoefficients::new(y[2], y[3])))
}

/// Propagates amplitudes across the window, starting from `seed` on the first
/// link.
///
/// With `bloch = Some(lambda)` the chain must be vertex independent and
/// `lambda` a unit-modulus transfer eigenvalue; the first link then carries
/// the matching eigenvector (aligned in phase and scaled to the seed) and
/// every next link is `lambda` times the previous one.
pub fn build_candidate<T: Real>(
    cfg: &ChainConfig<T>,
    k: T,
    seed: EdgeCoefficients<T>,
    bloch: Option<C<T>>,
) -> Result<EigenCandidate<T>> {
    check_k(k)?;
    let w = cfg.window;
    let mut coeffs = BTreeMap::new();
    let mut growth = None;
    match bloch {
        Some(lambda) => {
            if !cfg.is_vertex_independent() {
                return Err(invalid("Bloch candidates need the same parameters at every vertex"));
            }
            if !unit_modulus(lambda) {
                return Err(invalid(format!("Bloch multiplier {lambda} is not of unit modulus")));
            }
            let t = transfer_matrix(cfg, w.start, k)?;
            let (v, sigma) = t.eigenvector(lambda);
            let scale = t.forward.iter().map(|z| cabs(*z)).fold(T::one(), |a, b| a.max(b));
            if sigma > T::tol(1e-6) * scale {
                let eigs = t.eigenvalues();
                if !eigs.iter().any(|&z| unit_modulus(z)) {
                    return Err(Error::NotInBand { k: k.to_f64_lossy() });
                }
                return Err(invalid(format!(
                    "{lambda} is not a transfer eigenvalue at k = {k} (closest {}, {})",
                    eigs[0], eigs[1]
                )));
            }
            let seed_norm = seed.norm_sqr().sqrt();
            let overlap = v[0].conj() * seed.a + v[1].conj() * seed.b;
            let phase = if cabs(overlap) > T::zero() { overlap.unscale(cabs(overlap)) } else { real(T::one()) };
            let mut u = EdgeCoefficients::new(v[0], v[1]).scale(phase * real(seed_norm));
            for i in w.cells() {
                coeffs.insert((i, ChainKind::U), u);
                coeffs.insert((i, ChainKind::V), t.loop_coefficients(&u));
                u = u.scale(lambda);
            }
            coeffs.insert((w.end + 1, ChainKind::U), u);
            growth = Some(cabs(lambda));
        }
        None => {
            let mut u = seed;
            for i in w.cells() {
                coeffs.insert((i, ChainKind::U), u);
                let (v, next) = match transfer_matrix(cfg, i, k) {
                    Ok(t) => (t.loop_coefficients(&u), t.apply(&u)),
                    Err(Error::LoopResonance { .. }) => solve_node(cfg, i, k, &u)?,
                    Err(e) => return Err(e),
                };
                coeffs.insert((i, ChainKind::V), v);
                u = next;
            }
            coeffs.insert((w.end + 1, ChainKind::U), u);
            if cfg.is_vertex_independent() {
                if let Ok(t) = transfer_matrix(cfg, w.start, k) {
                    growth = Some(cabs(t.eigenvalues()[0]));
                }
            }
        }
    }
    let mut cand = EigenCandidate {
        k,
        window: w,
        l_u: cfg.l_u,
        l_v: cfg.l_v,
        coeffs,
        residual: T::zero(),
        bloch,
        growth,
    };
    cand.residual = node_residual(cfg, &cand)?;
    Ok(cand)
}

/// Unit-modulus transfer eigenvalues at `k`, ordered as in
/// [`TransferMatrix::eigenvalues`].
pub fn bloch_multipliers<T: Real>(cfg: &ChainConfig<T>, k: T) -> Result<Vec<C<T>>> {
    let t = transfer_matrix(cfg, cfg.window.start, k)?;
    Ok(t.eigenvalues().into_iter().filter(|&z| unit_modulus(z)).collect())
}

/// Moves a candidate one cell to the right, multiplying each edge by the
/// twist phase of the shift (`u_j -> u_{j+1}` by `e^{-i th^u_j}`, `v_j -> v_{j+1}`
/// by `e^{-i th^v_{j+1}}`).
///
/// The image is kept on cells `start+1..=end`, the part determined by data
/// inside the original window. Its residual is evaluated against `cfg`.
pub fn shift_candidate<T: Real>(
    cfg: &ChainConfig<T>,
    cand: &EigenCandidate<T>,
    theta: &ThetaAssignment<T>,
) -> Result<EigenCandidate<T>> {
    if cand.window.len() < 2 {
        return Err(invalid("shifting needs a window of at least two cells"));
    }
    let window = CellWindow::new(cand.window.start + 1, cand.window.end)?;
    let mut coeffs = BTreeMap::new();
    for i in window.cells() {
        let u = cand.coeff(i - 1, ChainKind::U).scale(cis(-theta.get(i - 1, ChainKind::U)));
        let v = cand.coeff(i - 1, ChainKind::V).scale(cis(-theta.get(i, ChainKind::V)));
        coeffs.insert((i, ChainKind::U), u);
        coeffs.insert((i, ChainKind::V), v);
    }
    let last = cand.coeff(window.end, ChainKind::U).scale(cis(-theta.get(window.end, ChainKind::U)));
    coeffs.insert((window.end + 1, ChainKind::U), last);
    let mut out = EigenCandidate { window, coeffs, residual: T::zero(), ..cand.clone() };
    out.residual = node_residual(cfg, &out)?;
    Ok(out)
}

fn require_unit_lengths<T: Real>(cfg: &ChainConfig<T>) -> Result<()> {
    let tol = T::tol(1e-14);
    if (cfg.l_u - T::one()).abs() > tol || (cfg.l_v - T::one()).abs() > tol {
        return Err(Error::UnsupportedReduction("closed forms assume unit edge lengths".into()));
    }
    Ok(())
}

fn require_zero_delta<T: Real>(cfg: &ChainConfig<T>, window: CellWindow) -> Result<()> {
    if let Some(i) = window.cells().find(|&i| cfg.node_params(i).delta().abs() > T::tol(1e-14)) {
        return Err(Error::UnsupportedReduction(format!(
            "closed forms hold only for delta = 0 (cell {i} has {})",
            cfg.node_params(i).delta()
        )));
    }
    Ok(())
}

/// Defects of the closed forms for `delta = 0` and all phases zero.
#[derive(Clone, Debug, PartialEq)]
pub struct ZeroPhaseReport<T: Real> {
    /// `2 A_i^u (1 + e^{ik}) = A1 (2 + e^{ik}) - B1 e^{-ik}` and its `B` partner.
    pub closed_form: T,
    /// `A0 = A1 e^{ik}`, `B0 = B1 e^{-ik}` and the link differences.
    pub relations: T,
    /// Spread of `A1 = A_i^v + A_i^u` and `B1` over the window.
    pub cell_dependence: T,
}

/// Evaluates the zero-phase closed forms on every cell of a candidate.
pub fn zero_phase_identities<T: Real>(
    cfg: &ChainConfig<T>,
    cand: &EigenCandidate<T>,
) -> Result<ZeroPhaseReport<T>> {
    require_unit_lengths(cfg)?;
    require_zero_delta(cfg, cand.window)?;
    for i in cand.window.cells() {
        if cfg.node_params(i).alphas().iter().any(|a| a.abs() > T::tol(1e-14)) {
            return Err(Error::UnsupportedReduction(format!("cell {i} has non-zero phases")));
        }
    }
    let e = cis(cand.k);
    let (one, two) = (real(T::one()), real(T::lit(2.0)));
    let mut closed_form = T::zero();
    let mut relations = T::zero();
    let mut firsts: Option<(C<T>, C<T>)> = None;
    let mut cell_dependence = T::zero();
    for i in cand.window.cells() {
        let (u, v, n) = (
            cand.coeff(i, ChainKind::U),
            cand.coeff(i, ChainKind::V),
            cand.coeff(i + 1, ChainKind::U),
        );
        let (a1, b1) = (v.a + u.a, v.b + u.b);
        let (a0, b0) = (v.a + n.a, v.b + n.b);
        closed_form = closed_form
            .max(cabs(two * u.a * (one + e) - (a1 * (two + e) - b1 * e.conj())))
            .max(cabs(two * u.b * (one + e) - (b1 * (one + two * e) - a1 * e * e)));
        relations = relations
            .max(cabs(a0 - a1 * e))
            .max(cabs(b0 - b1 * e.conj()))
            .max(cabs(u.a - n.a - a1 * (one - e)))
            .max(cabs(u.b - n.b - b1 * (one - e.conj())));
        match firsts {
            None => firsts = Some((a1, b1)),
            Some((fa, fb)) => {
                cell_dependence = cell_dependence.max(cabs(a1 - fa)).max(cabs(b1 - fb));
            }
        }
    }
    Ok(ZeroPhaseReport { closed_form, relations, cell_dependence })
}

/// Max defect of the `delta = 0` identities for arbitrary phases, with
/// `alpha = alpha_2 - alpha_1`, `A_out = A^v e^{i alpha_2} + A^u` and
/// `A_in = A^v e^{i alpha_1} + A_{next}^u e^{i alpha_3}` (same for `B`).
pub fn general_alpha_reduction_check<T: Real>(
    cfg: &ChainConfig<T>,
    cand: &EigenCandidate<T>,
) -> Result<T> {
    require_unit_lengths(cfg)?;
    require_zero_delta(cfg, cand.window)?;
    let k = cand.k;
    let e = cis(k);
    let e_ = e.conj();
    let (one, two) = (real(T::one()), real(T::lit(2.0)));
    let mut worst = T::zero();
    for i in cand.window.cells() {
        let a = cfg.node_params(i).alphas();
        let (a1, a2, a3) = (a[0], a[1], a[2]);
        let al = a2 - a1;
        let (u, v, n) = (
            cand.coeff(i, ChainKind::U),
            cand.coeff(i, ChainKind::V),
            cand.coeff(i + 1, ChainKind::U),
        );
        let a_out = v.a * cis(a2) + u.a;
        let b_out = v.b * cis(a2) + u.b;
        let a_in = v.a * cis(a1) + n.a * cis(a3);
        let b_in = v.b * cis(a1) + n.b * cis(a3);
        let defects = [
            a_in - a_out * e,
            b_in - b_out * e_,
            u.a - n.a * cis(a3 + al) - a_out * (one - cis(k + al)),
            u.b - n.b * cis(a3 + al) - b_out * (one - cis(al - k)),
            u.a * (cis(-al) + e) + u.b * (cis(-al) + e_) - (a_out + b_out) * cis(-al),
            u.a * e + u.b * e_ - cis(a3) * (n.a + n.b),
            two * u.a * (e * e - one)
                - (a_out * (e * e + cis(k + al) - two) + b_out * (cis(al - k) - one)),
            two * u.b * (one - e_ * e_)
                - (b_out * (two - e_ * e_ - cis(al - k)) + a_out * (one - cis(k + al))),
        ];
        worst = defects.iter().map(|d| cabs(*d)).fold(worst, |x, y| x.max(y));
    }
    Ok(worst)
}

/// Tuning for [`closed_chain_spectrum`].
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct ClosedChainOptions<T: Real> {
    pub samples: usize,
    /// A refined minimum of `|det(T - omega)|` below this is a root.
    pub accept: T,
    /// Resolution doublings allowed when two roots share a grid step.
    pub max_refinements: usize,
}

impl<T: Real> Default for ClosedChainOptions<T> {
    fn default() -> Self {
        Self { samples: 2000, accept: T::tol(1e-8), max_refinements: 4 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClosedRoot<T: Real> {
    pub k: T,
    /// Bloch index: the transfer matrix has eigenvalue `e^{2 pi i n / m}`.
    pub n: usize,
    /// `|det(T(k) - omega)|` at the refined root.
    pub secular: T,
    /// Node residual of the periodic candidate.
    pub residual: T,
    /// `||u_{start+m} - u_start|| / ||u_start||` of the periodic candidate.
    pub periodicity: T,
    pub certified: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClosedSpectrum<T: Real> {
    pub m: usize,
    pub roots: Vec<ClosedRoot<T>>,
    /// Grid size of the final scan.
    pub samples: usize,
    /// Two roots of one Bloch index still shared a grid step after all
    /// allowed refinements.
    pub crowded: bool,
}

/// `e^{2 pi i n / m}` computed from the reduced fraction, so equal fractions
/// give bit-identical values.
pub fn root_of_unity<T: Real>(n: usize, m: usize) -> C<T> {
    fn gcd(a: usize, b: usize) -> usize {
        if b == 0 { a } else { gcd(b, a % b) }
    }
    let g = gcd(n, m).max(1);
    let (p, q) = ((n / g) as f64, (m / g) as f64);
    cis(T::two_pi() * T::lit(p) / T::lit(q))
}

fn golden_min<T: Real, F: Fn(T) -> T>(f: F, mut a: T, mut b: T) -> (T, T) {
    let r = T::lit((5f64.sqrt() - 1.0) / 2.0);
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if (b - a).abs() <= T::lit(4.0 * T::EPSILON) * (a.abs() + b.abs()) {
            break;
        }
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = f(x2);
        }
    }
    if f1 <= f2 { (x1, f1) } else { (x2, f2) }
}

/// Wavenumbers in `(0, k_max]` at which the closed chain of `m` cells has an
/// eigenfunction, found as zeros of `|det(T(k) - e^{2 pi i n/m})|`.
///
/// The chain must have the same parameters at every vertex. Each local
/// minimum of the grid scan is refined by golden-section search; refined
/// minima below `opts.accept` are roots and are certified by building the
/// periodic Bloch candidate on `m` cells.
pub fn closed_chain_spectrum<T: Real>(
    cfg: &ChainConfig<T>,
    m: usize,
    k_max: T,
    opts: &ClosedChainOptions<T>,
) -> Result<ClosedSpectrum<T>> {
    if m < 2 {
        return Err(invalid("a closed chain needs at least two cells"));
    }
    check_k(k_max)?;
    if !cfg.is_vertex_independent() {
        return Err(invalid("closed chains need the same parameters at every vertex"));
    }
    if opts.samples < 3 {
        return Err(invalid("closed-chain scan needs at least three samples"));
    }
    let ring = cfg.with_window(CellWindow::new(cfg.window.start, cfg.window.start + m as i64 - 1)?);
    let cell = ring.window.start;
    let mut samples = opts.samples;
    let mut crowded = false;
    let mut found;
    let mut attempt = 0;
    loop {
        let step = k_max / T::from_usize(samples).expect("sample count fits");
        found = (0..m)
            .into_par_iter()
            .map(|n| scan_bloch_index(&ring, cell, n, m, k_max, samples, opts.accept))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect::<Vec<(T, usize, T)>>();
        found.sort_by(|x, y| (x.1, x.0).partial_cmp(&(y.1, y.0)).expect("finite roots"));
        let tight = found.windows(2).any(|w| w[0].1 == w[1].1 && (w[1].0 - w[0].0) < step);
        if !tight {
            break;
        }
        if attempt == opts.max_refinements {
            crowded = true;
            break;
        }
        attempt += 1;
        samples *= 2;
    }
    let mut roots: Vec<ClosedRoot<T>> = found
        .into_par_iter()
        .map(|(k, n, secular)| certify_root(&ring, k, n, m, secular))
        .collect::<Result<Vec<_>>>()?;
    roots.sort_by(|x, y| (x.k, x.n).partial_cmp(&(y.k, y.n)).expect("finite roots"));
    Ok(ClosedSpectrum { m, roots, samples, crowded })
}

fn scan_bloch_index<T: Real>(
    ring: &ChainConfig<T>,
    cell: i64,
    n: usize,
    m: usize,
    k_max: T,
    samples: usize,
    accept: T,
) -> Result<Vec<(T, usize, T)>> {
    let omega = root_of_unity::<T>(n, m);
    let step = k_max / T::from_usize(samples).expect("sample count fits");
    let secular = |k: T| -> T {
        match transfer_matrix(ring, cell, k) {
            Ok(t) => {
                let s = t.forward - Matrix2::identity() * omega;
                cabs(s[(0, 0)] * s[(1, 1)] - s[(0, 1)] * s[(1, 0)])
            }
            Err(_) => T::max_value().unwrap_or_else(T::one),
        }
    };
    let grid: Vec<T> = (1..=samples)
        .map(|j| {
            let k = step * T::from_usize(j).expect("index fits");
            if is_loop_resonant(k, ring.l_v) { k - step / T::lit(2.0) } else { k }
        })
        .collect();
    let values: Vec<T> = grid.iter().map(|&k| secular(k)).collect();
    let mut roots: Vec<(T, usize, T)> = Vec::new();
    for j in 0..grid.len() {
        let left = if j == 0 { T::max_value().unwrap_or_else(T::one) } else { values[j - 1] };
        let right = values.get(j + 1).copied().unwrap_or_else(|| T::max_value().unwrap_or_else(T::one));
        if !(values[j] <= left && values[j] <= right) {
            continue;
        }
        let a = if j == 0 { grid[0] / T::lit(2.0) } else { grid[j - 1] };
        let b = grid.get(j + 1).copied().unwrap_or(k_max);
        let (k, f) = golden_min(&secular, a, b);
        if f < accept && k > T::zero() && k <= k_max {
            let dup = roots.iter().any(|r| (r.0 - k).abs() <= T::tol(1e-10) * k.max(T::one()));
            if !dup {
                roots.push((k, n, f));
            }
        }
    }
    Ok(roots)
}

fn certify_root<T: Real>(ring: &ChainConfig<T>, k: T, n: usize, m: usize, secular: T) -> Result<ClosedRoot<T>> {
    let omega = root_of_unity::<T>(n, m);
    let t = transfer_matrix(ring, ring.window.start, k)?;
    let (v, _) = t.eigenvector(omega);
    let seed = EdgeCoefficients::new(v[0], v[1]);
    let cand = build_candidate(ring, k, seed, Some(omega))?;
    let first = cand.coeff(ring.window.start, ChainKind::U);
    let wrapped = cand.coeff(ring.window.end + 1, ChainKind::U);
    let diff = EdgeCoefficients::new(wrapped.a - first.a, wrapped.b - first.b);
    let periodicity = (diff.norm_sqr() / first.norm_sqr()).sqrt();
    let tol = T::tol(1e-8);
    Ok(ClosedRoot {
        k,
        n,
        secular,
        residual: cand.residual,
        periodicity,
        certified: cand.residual < tol && periodicity < tol,
    })
}

/// One sample of an eigenfunction candidate.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct SampleRow<T: Real> {
    pub cell: i64,
    pub kind: ChainKind,
    pub x: T,
    pub value: C<T>,
}

/// Values on a uniform grid of `points_per_edge` points per edge, including
/// both ends, ordered by cell, `u` before `v`, then `x`.
pub fn sample_eigenfunction<T: Real>(
    cand: &EigenCandidate<T>,
    points_per_edge: usize,
) -> Result<Vec<SampleRow<T>>> {
    if points_per_edge < 2 {
        return Err(invalid("need at least two points per edge"));
    }
    let last = T::from_usize(points_per_edge - 1).expect("point count fits");
    let mut rows = Vec::with_capacity(cand.coeffs.len() * points_per_edge);
    for (&(cell, kind), c) in &cand.coeffs {
        let l = match kind {
            ChainKind::U => cand.l_u,
            ChainKind::V => cand.l_v,
        };
        for j in 0..points_per_edge {
            let x = if j + 1 == points_per_edge {
                l
            } else {
                l * T::from_usize(j).expect("index fits") / last
            };
            rows.push(SampleRow { cell, kind, x, value: c.value(cand.k, x) });
        }
    }
    Ok(rows)
}

/// Endpoint values around each vertex, in the vertex layout
/// `(u_i at x=l, v_i at 0, v_i at l, u_{i+1} at 0)`, read off sampled rows.
pub fn vertex_traces<T: Real>(rows: &[SampleRow<T>]) -> BTreeMap<i64, [C<T>; 4]> {
    let mut ends: BTreeMap<ChainEdge, (C<T>, C<T>)> = BTreeMap::new();
    for r in rows {
        let e = ends.entry((r.cell, r.kind)).or_insert((r.value, r.value));
        e.1 = r.value;
    }
    let mut out = BTreeMap::new();
    for (&(cell, kind), _) in ends.iter() {
        if kind != ChainKind::V {
            continue;
        }
        let (Some(u), Some(v), Some(n)) = (
            ends.get(&(cell, ChainKind::U)),
            ends.get(&(cell, ChainKind::V)),
            ends.get(&(cell + 1, ChainKind::U)),
        ) else {
            continue;
        };
        out.insert(cell, [u.1, v.0, v.1, n.0]);
    }
    out
}

/// Largest spread of `|Phi|` among the four traces at a vertex.
pub fn modulus_continuity_defect<T: Real>(rows: &[SampleRow<T>]) -> T {
    vertex_traces(rows)
        .values()
        .map(|t| {
            let m: Vec<T> = t.iter().map(|z| cabs(*z)).collect();
            let hi = m.iter().copied().fold(T::zero(), |a, b| a.max(b));
            let lo = m.iter().copied().fold(hi, |a, b| a.min(b));
            hi - lo
        })
        .fold(T::zero(), |a, b| a.max(b))
}

/// All node systems of the window stacked into one matrix. Unknowns are the
/// amplitude pairs of `(cell, kind)` in ascending order, ending with the last
/// link `u_{end+1}`.
pub fn stacked_window_system<T: Real>(
    cfg: &ChainConfig<T>,
    k: T,
) -> Result<(CMatrix<T>, Vec<ChainEdge>)> {
    let w = cfg.window;
    let mut order = Vec::with_capacity(2 * w.len() + 1);
    for i in w.cells() {
        order.push((i, ChainKind::U));
        order.push((i, ChainKind::V));
    }
    order.push((w.end + 1, ChainKind::U));
    let index: BTreeMap<ChainEdge, usize> = order.iter().enumerate().map(|(j, &e)| (e, j)).collect();
    let mut m = CMatrix::zeros(4 * w.len(), 2 * order.len());
    for (r, i) in w.cells().enumerate() {
        let sys = assemble_node_system(cfg, i, k)?;
        let cols = [index[&(i, ChainKind::U)], index[&(i, ChainKind::V)], index[&(i + 1, ChainKind::U)]];
        for (blk, &c) in cols.iter().enumerate() {
            m.view_mut((4 * r, 2 * c), (4, 2)).copy_from(&sys.matrix.columns(2 * blk, 2));
        }
    }
    Ok((m, order))
}

/// Amplitudes of a candidate flattened in the order of [`stacked_window_system`].
pub fn flatten_coefficients<T: Real>(cand: &EigenCandidate<T>, order: &[ChainEdge]) -> CVector<T> {
    let mut v = CVector::zeros(2 * order.len());
    for (j, &(cell, kind)) in order.iter().enumerate() {
        let c = cand.coeff(cell, kind);
        v[2 * j] = c.a;
        v[2 * j + 1] = c.b;
    }
    v
}
