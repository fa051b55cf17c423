//! Chart-based differential geometry for flat space and the unit 2-sphere.

pub mod chart;
pub mod coefficients;
pub mod manifold;

pub use chart::{Chart, ChartKind};
pub use coefficients::{
    chart_metric, christoffel_finite_difference, local_coefficients, spd_sqrt, LocalCoefficients,
};
pub use manifold::{
    exp_map, exp_map_with_flag, geodesic_distance, log_map, Manifold, ManifoldPoint,
    TangentVector,
};
