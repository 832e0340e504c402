//! Self-adjoint extensions of the Laplacian on metric graphs, their unitary
//! vertex data, and shift invariance on a chain of loops.
//!
//! The numerical core is generic over [`scalar::Real`] (`f32` or `f64`).
//! The `f64` aliases at the crate root cover the common case.

pub mod chain;
pub mod error;
pub mod extensions;
pub mod graph;
pub mod linalg;
pub mod reference;
pub mod scalar;
pub mod symmetry;

pub use chain::{
    band_gaps, band_structure, bloch_multipliers, build_candidate, closed_chain_spectrum,
    general_alpha_reduction_check, sample_eigenfunction, shift_candidate, transfer_matrix,
    zero_phase_identities, ParamRule,
};
pub use error::{Error, Result};
pub use extensions::{build_quasi_delta_block, build_zeta, partial_cayley, QuasiDeltaParams};
pub use graph::{build_chain_graph, CellWindow, ChainKind, EdgeCoefficients};
pub use scalar::Real;
pub use symmetry::{check_z_invariance, solve_theta, ThetaAssignment};

pub type ChainConfig = chain::ChainConfig<f64>;
pub type ChainConfig32 = chain::ChainConfig<f32>;
pub type EigenCandidate = chain::EigenCandidate<f64>;
pub type MetricGraph = graph::MetricGraph<f64>;
pub type BlockUnitary = extensions::BlockUnitary<f64>;
pub type VertexUnitary = extensions::VertexUnitary<f64>;
pub type PointInteractionModel = reference::PointInteractionModel<f64>;
pub type Complex = nalgebra::Complex<f64>;
