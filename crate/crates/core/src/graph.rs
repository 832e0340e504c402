//! Metric graphs and boundary data in the vertex-grouped layout.
//!
//! Boundary vectors are stored vertex by vertex: the block of vertex `v`
//! lists the traces at the endpoints of `v` in the order fixed by its
//! [`VertexSpec`]. Normal derivatives point outward: a left end (`x = 0`)
//! stores `-Phi'(0)`, a right end (`x = l`) stores `+Phi'(l)`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::CVector;
use crate::scalar::{cis, imag_unit, Real};

pub type EdgeId = i64;
pub type VertexId = i64;

/// Edge label. Chains use `U` for links and `V` for loops.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum EdgeKind {
    U,
    V,
    Label(String),
}

impl From<String> for EdgeKind {
    fn from(s: String) -> Self {
        match s.as_str() {
            "u" => EdgeKind::U,
            "v" => EdgeKind::V,
            _ => EdgeKind::Label(s),
        }
    }
}

impl From<EdgeKind> for String {
    fn from(k: EdgeKind) -> Self {
        k.to_string()
    }
}

impl fmt::Display for EdgeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EdgeKind::U => f.write_str("u"),
            EdgeKind::V => f.write_str("v"),
            EdgeKind::Label(s) => f.write_str(s),
        }
    }
}

/// The two edge kinds of the loop chain. Orders `U` before `V`.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ChainKind {
    #[serde(rename = "u")]
    U,
    #[serde(rename = "v")]
    V,
}

impl ChainKind {
    pub fn edge_kind(self) -> EdgeKind {
        match self {
            ChainKind::U => EdgeKind::U,
            ChainKind::V => EdgeKind::V,
        }
    }
}

impl fmt::Display for ChainKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.edge_kind().fmt(f)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum End {
    /// `x = 0`.
    Left,
    /// `x = l`.
    Right,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EndpointRef {
    pub edge: EdgeId,
    pub end: End,
}

impl EndpointRef {
    pub fn left(edge: EdgeId) -> Self {
        Self { edge, end: End::Left }
    }

    pub fn right(edge: EdgeId) -> Self {
        Self { edge, end: End::Right }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EdgeSpec<T: Real> {
    pub id: EdgeId,
    pub kind: EdgeKind,
    pub length: T,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VertexSpec {
    pub id: VertexId,
    pub endpoints: Vec<EndpointRef>,
}

impl VertexSpec {
    pub fn degree(&self) -> usize {
        self.endpoints.len()
    }
}

/// Inclusive range of chain cells.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CellWindow {
    pub start: i64,
    pub end: i64,
}

impl CellWindow {
    pub fn new(start: i64, end: i64) -> Result<Self> {
        if end < start {
            return Err(invalid(format!("empty cell range {start}..={end}")));
        }
        Ok(Self { start, end })
    }

    pub fn len(&self) -> usize {
        (self.end - self.start + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, cell: i64) -> bool {
        (self.start..=self.end).contains(&cell)
    }

    pub fn cells(&self) -> std::ops::RangeInclusive<i64> {
        self.start..=self.end
    }

    pub fn shifted(&self, by: i64) -> Self {
        Self { start: self.start + by, end: self.end + by }
    }
}

impl fmt::Display for CellWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..={}", self.start, self.end)
    }
}

/// Edges glued at vertices.
///
/// A full graph covers every endpoint exactly once. A windowed graph (a
/// finite piece of an infinite chain) may leave endpoints uncovered; those
/// are recorded as dangling.
#[derive(Clone, Debug)]
pub struct MetricGraph<T: Real> {
    edges: Vec<EdgeSpec<T>>,
    vertices: Vec<VertexSpec>,
    window: Option<CellWindow>,
    dangling: Vec<EndpointRef>,
    edge_index: HashMap<EdgeId, usize>,
    endpoint_index: HashMap<EndpointRef, (usize, usize)>,
}

impl<T: Real> MetricGraph<T> {
    /// Builds a graph in which every endpoint belongs to exactly one vertex.
    pub fn new(edges: Vec<EdgeSpec<T>>, vertices: Vec<VertexSpec>) -> Result<Self> {
        let g = Self::assemble(edges, vertices, None)?;
        if let Some(e) = g.dangling.first() {
            return Err(invalid(format!(
                "endpoint ({}, {:?}) is not attached to any vertex",
                e.edge, e.end
            )));
        }
        Ok(g)
    }

    /// Builds a finite window of an infinite graph; uncovered endpoints are
    /// allowed and reported by [`MetricGraph::dangling`].
    pub fn windowed(
        edges: Vec<EdgeSpec<T>>,
        vertices: Vec<VertexSpec>,
        window: CellWindow,
    ) -> Result<Self> {
        Self::assemble(edges, vertices, Some(window))
    }

    fn assemble(
        edges: Vec<EdgeSpec<T>>,
        vertices: Vec<VertexSpec>,
        window: Option<CellWindow>,
    ) -> Result<Self> {
        let mut edge_index = HashMap::new();
        for (i, e) in edges.iter().enumerate() {
            if !(e.length > T::zero()) || !e.length.is_finite() {
                return Err(invalid(format!("edge {} has non-positive length {}", e.id, e.length)));
            }
            if edge_index.insert(e.id, i).is_some() {
                return Err(invalid(format!("duplicate edge id {}", e.id)));
            }
        }
        let mut seen_vertex = HashMap::new();
        let mut endpoint_index = HashMap::new();
        for (vi, v) in vertices.iter().enumerate() {
            if v.endpoints.is_empty() {
                return Err(invalid(format!("vertex {} has degree 0", v.id)));
            }
            if seen_vertex.insert(v.id, vi).is_some() {
                return Err(invalid(format!("duplicate vertex id {}", v.id)));
            }
            for (pos, ep) in v.endpoints.iter().enumerate() {
                if !edge_index.contains_key(&ep.edge) {
                    return Err(invalid(format!(
                        "vertex {} references unknown edge {}",
                        v.id, ep.edge
                    )));
                }
                if endpoint_index.insert(*ep, (vi, pos)).is_some() {
                    return Err(invalid(format!(
                        "endpoint ({}, {:?}) appears in more than one vertex slot",
                        ep.edge, ep.end
                    )));
                }
            }
        }
        let mut dangling = Vec::new();
        for e in &edges {
            for end in [End::Left, End::Right] {
                let ep = EndpointRef { edge: e.id, end };
                if !endpoint_index.contains_key(&ep) {
                    dangling.push(ep);
                }
            }
        }
        Ok(Self { edges, vertices, window, dangling, edge_index, endpoint_index })
    }

    pub fn edges(&self) -> &[EdgeSpec<T>] {
        &self.edges
    }

    pub fn vertices(&self) -> &[VertexSpec] {
        &self.vertices
    }

    pub fn window(&self) -> Option<CellWindow> {
        self.window
    }

    pub fn dangling(&self) -> &[EndpointRef] {
        &self.dangling
    }

    pub fn edge(&self, id: EdgeId) -> Option<&EdgeSpec<T>> {
        self.edge_index.get(&id).map(|&i| &self.edges[i])
    }

    /// `(vertex index, position within the vertex block)` of an endpoint.
    pub fn locate(&self, ep: EndpointRef) -> Option<(usize, usize)> {
        self.endpoint_index.get(&ep).copied()
    }

    pub fn endpoint_at(&self, vertex: usize, position: usize) -> Option<EndpointRef> {
        self.vertices.get(vertex)?.endpoints.get(position).copied()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.vertices.iter().map(VertexSpec::degree).collect()
    }

    /// Total length of a boundary vector.
    pub fn boundary_dim(&self) -> usize {
        self.vertices.iter().map(VertexSpec::degree).sum()
    }

    pub fn zero_boundary(&self) -> BoundaryVector<T> {
        BoundaryVector::zeros(
            self.vertices.iter().map(|v| v.id).collect(),
            &self.degrees(),
        )
    }
}

/// Graph description as read from JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphDocument {
    pub edges: Vec<EdgeDocument>,
    pub vertices: Vec<VertexSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeDocument {
    pub id: EdgeId,
    pub kind: EdgeKind,
    pub length: f64,
}

impl GraphDocument {
    pub fn to_graph<T: Real>(&self) -> Result<MetricGraph<T>> {
        let edges = self
            .edges
            .iter()
            .map(|e| EdgeSpec { id: e.id, kind: e.kind.clone(), length: T::lit(e.length) })
            .collect();
        MetricGraph::new(edges, self.vertices.clone())
    }
}

/// Edge id used by [`build_chain_graph`].
pub fn chain_edge_id(cell: i64, kind: ChainKind) -> EdgeId {
    match kind {
        ChainKind::U => 2 * cell,
        ChainKind::V => 2 * cell + 1,
    }
}

/// Inverse of [`chain_edge_id`].
pub fn chain_edge_of(id: EdgeId) -> (i64, ChainKind) {
    let cell = id.div_euclid(2);
    if id.rem_euclid(2) == 0 {
        (cell, ChainKind::U)
    } else {
        (cell, ChainKind::V)
    }
}

/// Window of the chain with one loop per vertex.
///
/// Vertex `i` joins the link `u_i` (its right end), the loop `v_i` (both
/// ends) and the link `u_{i+1}` (its left end), in that order. Cells
/// `a..=b` give vertices `a..=b`, loops `v_a..v_b` and links `u_a..u_{b+1}`,
/// so every vertex has degree 4 and the window border leaves the left end of
/// `u_a` and the right end of `u_{b+1}` dangling.
pub fn build_chain_graph<T: Real>(window: CellWindow, l_u: T, l_v: T) -> Result<MetricGraph<T>> {
    if !(l_u > T::zero()) || !(l_v > T::zero()) {
        return Err(invalid(format!("chain lengths must be positive, got l_u={l_u}, l_v={l_v}")));
    }
    let mut edges = Vec::with_capacity(2 * window.len() + 1);
    for i in window.cells() {
        edges.push(EdgeSpec { id: chain_edge_id(i, ChainKind::U), kind: EdgeKind::U, length: l_u });
        edges.push(EdgeSpec { id: chain_edge_id(i, ChainKind::V), kind: EdgeKind::V, length: l_v });
    }
    edges.push(EdgeSpec {
        id: chain_edge_id(window.end + 1, ChainKind::U),
        kind: EdgeKind::U,
        length: l_u,
    });
    let vertices = window
        .cells()
        .map(|i| VertexSpec {
            id: i,
            endpoints: vec![
                EndpointRef::right(chain_edge_id(i, ChainKind::U)),
                EndpointRef::left(chain_edge_id(i, ChainKind::V)),
                EndpointRef::right(chain_edge_id(i, ChainKind::V)),
                EndpointRef::left(chain_edge_id(i + 1, ChainKind::U)),
            ],
        })
        .collect();
    MetricGraph::windowed(edges, vertices, window)
}

/// Complex data indexed vertex by vertex.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryVector<T: Real> {
    vertices: Vec<VertexId>,
    offsets: Vec<usize>,
    data: CVector<T>,
}

impl<T: Real> BoundaryVector<T> {
    pub fn zeros(vertices: Vec<VertexId>, degrees: &[usize]) -> Self {
        assert_eq!(vertices.len(), degrees.len(), "one degree per vertex");
        let mut offsets = Vec::with_capacity(degrees.len() + 1);
        let mut acc = 0;
        offsets.push(0);
        for d in degrees {
            acc += d;
            offsets.push(acc);
        }
        Self { vertices, offsets, data: CVector::zeros(acc) }
    }

    pub fn from_blocks(blocks: Vec<(VertexId, Vec<Complex<T>>)>) -> Self {
        let degrees: Vec<usize> = blocks.iter().map(|(_, b)| b.len()).collect();
        let mut out = Self::zeros(blocks.iter().map(|(v, _)| *v).collect(), &degrees);
        for (i, (_, b)) in blocks.into_iter().enumerate() {
            out.block_mut(i).copy_from_slice(&b);
        }
        out
    }

    /// Same layout, new data.
    pub fn with_data(&self, data: CVector<T>) -> Result<Self> {
        if data.len() != self.data.len() {
            return Err(Error::DimensionMismatch { expected: self.data.len(), found: data.len() });
        }
        Ok(Self { vertices: self.vertices.clone(), offsets: self.offsets.clone(), data })
    }

    pub fn vertex_ids(&self) -> &[VertexId] {
        &self.vertices
    }

    pub fn num_blocks(&self) -> usize {
        self.vertices.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn block(&self, i: usize) -> &[Complex<T>] {
        &self.data.as_slice()[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn block_mut(&mut self, i: usize) -> &mut [Complex<T>] {
        let (a, b) = (self.offsets[i], self.offsets[i + 1]);
        &mut self.data.as_mut_slice()[a..b]
    }

    pub fn block_of(&self, vertex: VertexId) -> Option<&[Complex<T>]> {
        self.vertices.iter().position(|&v| v == vertex).map(|i| self.block(i))
    }

    pub fn as_vector(&self) -> &CVector<T> {
        &self.data
    }

    pub fn same_layout(&self, other: &Self) -> bool {
        self.vertices == other.vertices && self.offsets == other.offsets
    }

    pub fn norm(&self) -> T {
        crate::linalg::vector_norm(&self.data)
    }
}

/// Function trace and outward normal derivative trace.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceData<T: Real> {
    pub phi: BoundaryVector<T>,
    pub phidot: BoundaryVector<T>,
}

impl<T: Real> TraceData<T> {
    /// Builds traces from endpoint values: `f` returns `(Phi, Phi')` at the
    /// endpoint in the edge's own coordinate.
    pub fn from_endpoints<F>(graph: &MetricGraph<T>, mut f: F) -> Result<Self>
    where
        F: FnMut(&EdgeSpec<T>, End) -> Result<(Complex<T>, Complex<T>)>,
    {
        let mut phi = graph.zero_boundary();
        let mut phidot = graph.zero_boundary();
        for (vi, v) in graph.vertices().iter().enumerate() {
            for (pos, ep) in v.endpoints.iter().enumerate() {
                let edge = graph.edge(ep.edge).expect("validated endpoint");
                let (val, der) = f(edge, ep.end)?;
                phi.block_mut(vi)[pos] = val;
                phidot.block_mut(vi)[pos] = match ep.end {
                    End::Left => -der,
                    End::Right => der,
                };
            }
        }
        Ok(Self { phi, phidot })
    }
}

/// Plane-wave amplitudes on one edge: `Phi(x) = A e^{ikx} + B e^{-ikx}`.
#[derive(Copy, Clone, Debug, PartialEq, Default)]
pub struct EdgeCoefficients<T: Real> {
    pub a: Complex<T>,
    pub b: Complex<T>,
}

impl<T: Real> EdgeCoefficients<T> {
    pub fn new(a: Complex<T>, b: Complex<T>) -> Self {
        Self { a, b }
    }

    pub fn zero() -> Self {
        Self { a: Complex::new(T::zero(), T::zero()), b: Complex::new(T::zero(), T::zero()) }
    }

    pub fn value(&self, k: T, x: T) -> Complex<T> {
        let e = cis(k * x);
        self.a * e + self.b * e.conj()
    }

    pub fn derivative(&self, k: T, x: T) -> Complex<T> {
        let e = cis(k * x);
        imag_unit::<T>() * (self.a * e - self.b * e.conj()).scale(k)
    }

    pub fn scale(&self, s: Complex<T>) -> Self {
        Self { a: self.a * s, b: self.b * s }
    }

    pub fn norm_sqr(&self) -> T {
        self.a.norm_sqr() + self.b.norm_sqr()
    }
}

/// Traces of `A e^{ikx} + B e^{-ikx}` on every edge of the graph.
pub fn trace_of_plane_wave<T: Real>(
    graph: &MetricGraph<T>,
    k: T,
    coeffs: &BTreeMap<EdgeId, EdgeCoefficients<T>>,
) -> Result<TraceData<T>> {
    if !(k > T::zero()) {
        return Err(invalid(format!("wavenumber must be positive, got {k}")));
    }
    TraceData::from_endpoints(graph, |edge, end| {
        let c = coeffs
            .get(&edge.id)
            .ok_or_else(|| invalid(format!("no plane-wave coefficients for edge {}", edge.id)))?;
        let x = match end {
            End::Left => T::zero(),
            End::Right => edge.length,
        };
        Ok((c.value(k, x), c.derivative(k, x)))
    })
}
