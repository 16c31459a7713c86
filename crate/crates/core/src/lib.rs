//! Numerical toolkit for weighted reversible Finsler/Riemannian manifolds.
//!
//! The crate is organised around a pipeline that goes from fiber norms to
//! function-space statements:
//!
//! - [`minkowski`] — Minkowski norms on chart fibers, axiom validation,
//!   dual norms and parallelogram defects.
//! - [`manifold`] — built-in manifolds, geodesic integration, exponential
//!   maps and empirical biLipschitz chart radii.
//! - [`metricgraph`] — point-cloud sampling, Finsler-length neighbor graphs,
//!   shortest-path distances and Lipschitz-constant estimators.
//! - [`smoothing`] — the constructive C¹ approximation of Lipschitz
//!   functions: covers, partitions of unity, McShane extensions,
//!   mollification and assembly, with a per-sample audit report.
//! - [`sobolev`] — pointwise differentials, upper-gradient surrogates and
//!   the infinitesimal-Hilbertianity checker over weighted measures.
//! - [`quotient`] — finite-dimensional fiber model of the quotient
//!   projection and its adjoint isometric embedding.

pub mod manifold;
pub mod metricgraph;
pub mod minkowski;
pub mod quotient;
pub mod smoothing;
pub mod sobolev;

pub(crate) mod solve;

use thiserror::Error;

/// Error type shared by all toolkit operations.
#[derive(Debug, Error)]
pub enum FinslerError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// Invalid argument or configuration value.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A stated precondition does not hold for the supplied data.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// A constructive step (cover, partition, graph) could not complete.
    #[error("construction failed: {0}")]
    Construction(String),

    /// An iterative numeric procedure failed to converge or blew up.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// A finite-difference stencil does not fit inside the chart.
    #[error("stencil does not fit: {0}")]
    Stencil(String),

    /// No candidate radius passed the biLipschitz certification.
    #[error("search failed: {0}")]
    SearchFailure(String),
}

pub type Result<T> = std::result::Result<T, FinslerError>;
