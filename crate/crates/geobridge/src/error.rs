//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by geometry, simulation, and estimation routines.
#[derive(Debug, Error)]
pub enum GeoError {
    /// A point lies outside the region a chart can represent (e.g. too close
    /// to the singular antipode). The caller should re-center the chart.
    #[error("point outside chart: {0}")]
    PointOutsideChart(String),

    /// Chart coordinates outside the chart's validity ball.
    #[error("coordinates out of range: {0}")]
    CoordinatesOutOfRange(String),

    /// The metric tensor is not symmetric positive definite at the query point.
    #[error("singular metric: {0}")]
    SingularMetric(String),

    /// The logarithm map is undefined (target on the cut locus of the base).
    #[error("cut locus: {0}")]
    CutLocus(String),

    /// Operands live on different manifolds.
    #[error("manifold mismatch: {0}")]
    ManifoldMismatch(String),

    /// Invalid argument (dimensions, weights, configuration values).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A simulated state overflowed or became NaN; the path is discarded.
    #[error("non-finite state at step {step} (t = {time})")]
    NonFiniteState { step: usize, time: f64 },

    /// A correction-factor accumulation became non-finite.
    #[error("non-finite correction factor")]
    NonFiniteCorrection,

    /// Iterative solver failed to reach tolerance.
    #[error("non-convergent: {0}")]
    NonConvergent(String),

    /// The L a L^T system is numerically singular (condition bound exceeded).
    #[error("singular diffusion system: {0}")]
    SingularA(String),

    /// Components straddle antipodes of the chart anchor; no usable chart.
    #[error("chart degeneracy: {0}")]
    ChartDegeneracy(String),

    /// Every path in an ensemble failed.
    #[error("all paths failed")]
    AllPathsFailed,

    /// Importance weights sum to zero in finite precision.
    #[error("degenerate importance weights")]
    DegenerateWeights,

    /// I/O or parse failure in the CLI layer.
    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, GeoError>;
