use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::linsolve::SolveReport;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Everything that can go wrong while building meshes, assembling operators
/// or running the solvers.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Malformed mesh input (bad indices, non-manifold edges, empty mesh).
    InvalidMesh(String),
    /// A triangle with zero area.
    DegenerateTriangle { triangle: usize, area: f64 },
    /// `n = 0` or similar bad sizes.
    InvalidArgument(String),
    /// The mesh violates the Xu-Zikatanov cotangent condition.
    MeshNotMonotone { worst_edge_cot_sum: f64 },
    /// Stabilisation weights below the DMP threshold.
    InadmissibleWeights { weight_factor: f64, threshold: f64 },
    /// Time step too large for the contraction argument: `tau >= nu / L_H^2`.
    TimeStepTooLarge { tau: f64, limit: f64 },
    UnsupportedQuadrature { degree: usize },
    LinearSolve { report: SolveReport },
    /// Linear solve failure inside a time step.
    Slab { slab: usize, source: alloc::boxed::Box<Error> },
    PicardNonConvergence { slab: usize, increments: Vec<f64> },
    NonConvergence { residual_history: Vec<f64> },
    DimensionMismatch { expected: usize, found: usize },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidMesh(msg) => write!(f, "invalid mesh: {msg}"),
            Error::DegenerateTriangle { triangle, area } => {
                write!(f, "triangle {triangle} is degenerate (area {area:e})")
            }
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::MeshNotMonotone { worst_edge_cot_sum } => write!(
                f,
                "mesh fails the Xu-Zikatanov condition (worst edge cotangent sum {worst_edge_cot_sum:.7e})"
            ),
            Error::InadmissibleWeights { weight_factor, threshold } => write!(
                f,
                "weight factor {weight_factor} does not exceed the DMP threshold {threshold:.7}"
            ),
            Error::TimeStepTooLarge { tau, limit } => {
                write!(f, "time step {tau} must be smaller than nu/L_H^2 = {limit}")
            }
            Error::UnsupportedQuadrature { degree } => {
                write!(f, "no triangle quadrature rule of degree {degree}")
            }
            Error::LinearSolve { report } => write!(
                f,
                "{} did not converge: {} iterations, relative residual {:e}",
                report.method, report.iterations, report.relative_residual
            ),
            Error::Slab { slab, source } => write!(f, "time slab {slab}: {source}"),
            Error::PicardNonConvergence { slab, increments } => write!(
                f,
                "Picard iteration stalled on slab {slab} after {} steps (last increment {:e})",
                increments.len(),
                increments.last().copied().unwrap_or(f64::NAN)
            ),
            Error::NonConvergence { residual_history } => write!(
                f,
                "fixed-point iteration did not converge in {} iterations (last residual {:e})",
                residual_history.len(),
                residual_history.last().copied().unwrap_or(f64::NAN)
            ),
            Error::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
        }
    }
}

impl core::error::Error for Error {}
