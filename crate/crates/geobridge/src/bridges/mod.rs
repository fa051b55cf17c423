//! Guided bridge schemes conditioned on the diagonal of a product manifold:
//! the flat-space pinned system, L-matrix guidance with its correction
//! factor, weighted-mean pinning with a coupled auxiliary process, and the
//! distance-gradient (Fermi) drift.

pub mod corrections;
pub mod euclidean;
pub mod fermi;
pub mod marchand;
pub mod pinning;
pub mod weighted_mean;

use nalgebra::{DMatrix, DVector};

use crate::error::{GeoError, Result};
use crate::geometry::{local_coefficients, Chart, ManifoldPoint};
use crate::product::ProductPoint;
use crate::sde::TimeGrid;

pub use corrections::{
    delyon_hu_log_correction, delyon_hu_log_correction_trace, marchand_log_correction,
    marchand_log_correction_trace,
};
pub use euclidean::euclidean_diagonal_bridge;
pub use fermi::{fermi_bridge, fermi_drift};
pub use marchand::marchand_bridge;
pub use pinning::{state_dependent_pinning, PinnedPaths};
pub use weighted_mean::{point_bridge, weighted_mean_bridge, PointBridgeOutcome};

/// Which guided scheme drives an ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeKind {
    /// Flat-space system pinned to the running weighted average.
    EuclideanDiagonal,
    /// L-matrix guidance with oblique projection and correction factor.
    Marchand,
    /// Weighted-mean pinning through a coupled auxiliary process.
    WeightedMean,
    /// Drift toward the closest diagonal point (no correction factor).
    Fermi,
}

impl SchemeKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "euclidean-diagonal" => Ok(Self::EuclideanDiagonal),
            "marchand" => Ok(Self::Marchand),
            "weighted-mean" => Ok(Self::WeightedMean),
            "fermi" => Ok(Self::Fermi),
            other => Err(GeoError::InvalidInput(format!("unknown scheme '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::EuclideanDiagonal => "euclidean-diagonal",
            Self::Marchand => "marchand",
            Self::WeightedMean => "weighted-mean",
            Self::Fermi => "fermi",
        }
    }

    /// Whether the scheme produces a correction factor usable as an
    /// importance weight.
    pub fn has_correction(&self) -> bool {
        matches!(self, Self::Marchand | Self::WeightedMean)
    }
}

/// Configuration of a guided run: scheme, weights, horizon, the activation
/// window of the L-matrix guidance, and the drift cap.
#[derive(Debug, Clone)]
pub struct GuidanceSpec {
    pub scheme: SchemeKind,
    pub weights: Vec<f64>,
    pub horizon: f64,
    pub epsilon: f64,
    pub drift_cap: f64,
    /// Scalar multiplier on the chart diffusion (1 reproduces Brownian
    /// motion; per-component weights additionally scale time as 1 / w_i).
    pub sigma_scale: f64,
}

impl GuidanceSpec {
    pub fn new(scheme: SchemeKind, weights: Vec<f64>, horizon: f64) -> Result<Self> {
        let spec = Self {
            scheme,
            weights,
            horizon,
            epsilon: horizon / 2.0,
            drift_cap: 1.0,
            sigma_scale: 1.0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Result<Self> {
        self.epsilon = epsilon;
        self.validate()?;
        Ok(self)
    }

    pub fn with_sigma_scale(mut self, s: f64) -> Result<Self> {
        self.sigma_scale = s;
        self.validate()?;
        Ok(self)
    }

    pub fn with_drift_cap(mut self, cap: f64) -> Result<Self> {
        self.drift_cap = cap;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.is_empty() || self.weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(GeoError::InvalidInput("weights must be positive".into()));
        }
        if !(self.weights.iter().sum::<f64>() > 0.0) {
            return Err(GeoError::InvalidInput("weights must sum positive".into()));
        }
        if !(self.horizon > 0.0) {
            return Err(GeoError::InvalidInput("horizon must be positive".into()));
        }
        if !(self.epsilon > 0.0) || self.epsilon > self.horizon {
            return Err(GeoError::InvalidInput(
                "activation window must lie in (0, T]".into(),
            ));
        }
        if !(self.drift_cap >= 1.0) {
            return Err(GeoError::InvalidInput("drift cap must be >= 1".into()));
        }
        if !(self.sigma_scale > 0.0) {
            return Err(GeoError::InvalidInput("sigma scale must be positive".into()));
        }
        Ok(())
    }

    /// Per-component time scaling tau_i = sigma_scale^2 / w_i. A component
    /// with weight w runs its Brownian clock at rate 1/w, matching a heat
    /// kernel at time t/w.
    pub fn time_scales(&self) -> Vec<f64> {
        self.weights
            .iter()
            .map(|w| self.sigma_scale * self.sigma_scale / w)
            .collect()
    }

    /// Guidance rate 1/(T - t) with t clamped so the denominator never
    /// drops below cutoff / drift_cap.
    pub fn pinning_rate(&self, t: f64, grid: &TimeGrid) -> f64 {
        let floor = grid.cutoff() / self.drift_cap;
        1.0 / (self.horizon - t).max(floor)
    }
}

/// Convergence status of a returned path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BridgeStatus {
    Converged,
    Failed,
}

/// One recorded grid state of a guided path. `chart_id` increments on each
/// chart switch so correction folds can group steps into chart intervals.
#[derive(Debug, Clone)]
pub struct BridgeStep {
    pub time: f64,
    pub chart: Chart,
    pub chart_id: usize,
    /// Flattened product coordinates in `chart` (component-major).
    pub y: DVector<f64>,
    /// Pinning target in `chart` at this time, when the scheme has one.
    pub pin: Option<DVector<f64>>,
    /// Auxiliary process state in its own chart, when the scheme has one.
    pub z: Option<DVector<f64>>,
    pub z_chart: Option<Chart>,
    pub intrinsic: ProductPoint,
    pub z_intrinsic: Option<ProductPoint>,
}

/// Convergence diagnostics of one path: the diagonal defect |L y| at the
/// middle and terminal grid times, the largest value of
/// defect^2 / ((T - t) loglog((T - t)^{-1} + e)) over the second half, the
/// largest diffusion eigenvalue seen, and the terminal component spread.
#[derive(Debug, Clone, Copy)]
pub struct BridgeDiagnostics {
    pub defect_mid: f64,
    pub defect_end: f64,
    pub envelope_ratio_mid: f64,
    pub envelope_ratio_end: f64,
    pub envelope_ratio_max: f64,
    pub sigma_eig_max: f64,
    pub spread_end: f64,
}

impl Default for BridgeDiagnostics {
    fn default() -> Self {
        Self {
            defect_mid: 0.0,
            defect_end: 0.0,
            envelope_ratio_mid: 0.0,
            envelope_ratio_end: 0.0,
            envelope_ratio_max: 0.0,
            sigma_eig_max: 0.0,
            spread_end: 0.0,
        }
    }
}

/// The loglog envelope (T - t) loglog((T - t)^{-1} + e) the defect is
/// measured against.
pub fn loglog_envelope(horizon: f64, t: f64) -> f64 {
    let gap = (horizon - t).max(f64::MIN_POSITIVE);
    gap * (gap.recip() + std::f64::consts::E).ln().ln()
}

/// A simulated guided path on the grid up to T - cutoff.
#[derive(Debug, Clone)]
pub struct BridgePath {
    pub grid: TimeGrid,
    pub steps: Vec<BridgeStep>,
    pub log_phi: f64,
    pub endpoint_mean: ManifoldPoint,
    pub status: BridgeStatus,
    pub diagnostics: BridgeDiagnostics,
}

impl BridgePath {
    pub fn endpoint(&self) -> &ProductPoint {
        &self.steps.last().expect("non-empty path").intrinsic
    }
}

/// Chart-local coefficients of all product components, with the per-
/// component time scalings already applied: drift_i = tau_i b(y_i),
/// diffusion_i = sqrt(tau_i) sigma(y_i).
pub struct ProductCoefficients {
    pub drift: DVector<f64>,
    pub sigma_blocks: Vec<DMatrix<f64>>,
    pub g_blocks: Vec<DMatrix<f64>>,
    pub sigma_eig_max: f64,
}

impl ProductCoefficients {
    /// Apply the block-diagonal diffusion to a noise vector.
    pub fn apply_sigma(&self, noise: &DVector<f64>) -> DVector<f64> {
        let d = self.sigma_blocks[0].nrows();
        let mut out = DVector::zeros(noise.len());
        for (i, block) in self.sigma_blocks.iter().enumerate() {
            let ni = DVector::from_iterator(d, (0..d).map(|s| noise[i * d + s]));
            let oi = block * ni;
            for s in 0..d {
                out[i * d + s] = oi[s];
            }
        }
        out
    }

    /// Dense block-diagonal diffusion matrix.
    pub fn sigma_full(&self) -> DMatrix<f64> {
        let d = self.sigma_blocks[0].nrows();
        let nd = d * self.sigma_blocks.len();
        let mut out = DMatrix::zeros(nd, nd);
        for (i, block) in self.sigma_blocks.iter().enumerate() {
            for a in 0..d {
                for b in 0..d {
                    out[(i * d + a, i * d + b)] = block[(a, b)];
                }
            }
        }
        out
    }
}

/// Evaluate the chart coefficients of each component of a flattened state.
pub fn product_coefficients(
    chart: &Chart,
    coords: &DVector<f64>,
    time_scales: &[f64],
) -> Result<ProductCoefficients> {
    let d = chart.dim();
    let n = time_scales.len();
    if coords.len() != n * d {
        return Err(GeoError::InvalidInput(
            "state length does not match component count".into(),
        ));
    }
    let mut drift = DVector::zeros(n * d);
    let mut sigma_blocks = Vec::with_capacity(n);
    let mut g_blocks = Vec::with_capacity(n);
    let mut eig_max: f64 = 0.0;
    for i in 0..n {
        let xi = DVector::from_iterator(d, (0..d).map(|s| coords[i * d + s]));
        let c = local_coefficients(chart, &xi)?;
        let tau = time_scales[i];
        for s in 0..d {
            drift[i * d + s] = tau * c.drift[s];
        }
        let block = &c.sigma * tau.sqrt();
        // Symmetric PSD block: the largest eigenvalue is bounded by the norm.
        eig_max = eig_max.max(block.norm());
        sigma_blocks.push(block);
        g_blocks.push(c.g);
        let _ = c.g_inv;
    }
    Ok(ProductCoefficients {
        drift,
        sigma_blocks,
        g_blocks,
        sigma_eig_max: eig_max,
    })
}

/// Extract component `i` from a flattened product vector.
pub fn component(coords: &DVector<f64>, i: usize, d: usize) -> DVector<f64> {
    DVector::from_iterator(d, (0..d).map(|s| coords[i * d + s]))
}

/// Overwrite component `i` of a flattened product vector.
pub fn set_component(coords: &mut DVector<f64>, i: usize, d: usize, value: &DVector<f64>) {
    for s in 0..d {
        coords[i * d + s] = value[s];
    }
}

/// Weighted anchor of chart coordinates, mapped back to the manifold.
pub fn chart_mean_point(
    chart: &Chart,
    coords: &DVector<f64>,
    n: usize,
    weights: &[f64],
) -> Result<ManifoldPoint> {
    let mu = crate::product::project_diagonal(coords, n, chart.dim(), weights)?;
    chart.from_chart(&mu)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_validation_catches_bad_inputs() {
        assert!(GuidanceSpec::new(SchemeKind::Marchand, vec![1.0, -1.0], 1.0).is_err());
        assert!(GuidanceSpec::new(SchemeKind::Marchand, vec![], 1.0).is_err());
        assert!(GuidanceSpec::new(SchemeKind::Marchand, vec![1.0, 1.0], 0.0).is_err());
        let ok = GuidanceSpec::new(SchemeKind::Marchand, vec![1.0, 1.0], 2.0).unwrap();
        assert_eq!(ok.epsilon, 1.0);
        assert!(ok.clone().with_epsilon(3.0).is_err());
        assert!(ok.with_drift_cap(0.5).is_err());
    }

    #[test]
    fn pinning_rate_is_clamped_at_the_cutoff() {
        let grid = TimeGrid::new(1.0, 100).unwrap();
        let spec = GuidanceSpec::new(SchemeKind::WeightedMean, vec![1.0, 1.0], 1.0).unwrap();
        let close = spec.pinning_rate(0.999999, &grid);
        assert!(close <= 1.0 / grid.cutoff() + 1e-9);
        let mid = spec.pinning_rate(0.5, &grid);
        assert!((mid - 2.0).abs() < 1e-12);
    }

    #[test]
    fn time_scales_invert_weights() {
        let spec =
            GuidanceSpec::new(SchemeKind::WeightedMean, vec![4.0, 1.0, 1.0, 2.0], 1.0).unwrap();
        let tau = spec.time_scales();
        assert_eq!(tau.len(), 4);
        assert!((tau[0] - 0.25).abs() < 1e-15);
        assert!((tau[3] - 0.5).abs() < 1e-15);
    }
}
