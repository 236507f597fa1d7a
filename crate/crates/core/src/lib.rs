//! Toolkit for coupled linear 2D PDEs on the unit square.
//!
//! The pipeline: a PDE with boundary sensing is rewritten as a partial
//! integral equation (PIE) whose parameters are PI operators, an
//! H-infinity-optimal Luenberger estimator is synthesized by solving a
//! linear operator inequality as a semidefinite program, the gain is
//! recovered through closed-form PI-operator inversion, and the resulting
//! error dynamics are simulated with a spectral Galerkin scheme.
//!
//! Module layout follows the pipeline:
//! - [`poly`]: matrix-valued polynomial kernels in the spatial variables.
//! - [`piop`]: the block PI operator algebra (apply, compose, adjoint,
//!   derivative and Dirac-trace composition).
//! - [`pde`]: PDE data model and PIE construction.
//! - [`lpi`]: parameterization of the operator inequality as an LMI.
//! - [`sdp`]: a dense primal-dual interior-point SDP solver.
//! - [`invert`]: closed-form inversion of separable PI operators and
//!   gain reconstruction.
//! - [`sim`]: Galerkin simulation of the estimator error dynamics.
//! - [`verify`]: randomized self-check suites over the operator algebra.

pub mod affine;
pub mod invert;
pub mod lpi;
pub mod pde;
pub mod piop;
pub mod poly;
pub mod quad;
pub mod sdp;
pub mod sim;
pub mod verify;

use thiserror::Error;

/// Toolkit-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("signature mismatch: {0}")]
    SignatureMismatch(String),
    #[error("invalid integration limits: {0}")]
    InvalidLimits(String),
    #[error("operator structure violation: {0}")]
    StructureViolation(String),
    #[error("ill-posed boundary conditions on axis {axis}: {detail}")]
    WellPosedness { axis: char, detail: String },
    #[error("monomial degree {given} too low to match operator kernels; minimal sufficient degree is {needed}")]
    DegreeInfeasible { given: usize, needed: usize },
    #[error("singular matrix: {0}")]
    Singular(String),
    #[error("quadrature did not converge: {0}")]
    QuadratureNonConvergence(String),
    #[error("SDP solver: {0}")]
    Solver(String),
    #[error("solution rejected: {0}")]
    ToleranceViolation(String),
    #[error("simulation blow-up at t = {time}: state norm {norm:.3e}")]
    BlowUp { time: f64, norm: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("JSON: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
