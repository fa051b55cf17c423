//! L-matrix guided bridge: the product diffusion receives the drift
//!     - Sigma(Y) beta(Y) L Y / (T - t)
//! inside the activation window (T - eps, T), where beta = Sigma^T L^T A and
//! A = (L Sigma Sigma^T L^T)^{-1}. Since ker L is the diagonal, the guidance
//! steers the chart state onto it. On a compact manifold the run is split
//! into chart intervals; the chart re-centers at the component mean whenever
//! a component leaves half the validity radius.

use nalgebra::DVector;

use crate::bridges::{
    chart_mean_point, loglog_envelope, product_coefficients, BridgeDiagnostics, BridgePath,
    BridgeStatus, BridgeStep, GuidanceSpec,
};
use crate::error::{GeoError, Result};
use crate::geometry::{Chart, Manifold, ManifoldPoint};
use crate::product::{flatten_in_chart, unflatten_from_chart, DiagonalConditioner, ProductPoint};
use crate::sampling::{channel, NoiseSource};
use crate::sde::{needs_switch, SwitchPolicy, TimeGrid};

/// Chart policy for the L-matrix scheme: switch when a component exits half
/// the validity radius, mirroring exit-time chart changes.
pub const MARCHAND_POLICY: SwitchPolicy = SwitchPolicy::Threshold(0.5);

/// Initial chart for a product state: flat manifolds use global
/// coordinates; the sphere uses a normal chart at the normalized ambient
/// mean of the components.
pub fn initial_chart(x: &ProductPoint, weights: &[f64]) -> Result<Chart> {
    match x.manifold() {
        Manifold::Euclidean(d) => Ok(Chart::identity(d)),
        Manifold::Sphere2 => {
            let total: f64 = weights.iter().sum();
            let mut m = [0.0f64; 3];
            for (c, w) in x.components().iter().zip(weights) {
                for s in 0..3 {
                    m[s] += w * c.coords()[s] / total;
                }
            }
            let norm = (m[0] * m[0] + m[1] * m[1] + m[2] * m[2]).sqrt();
            if norm < 1e-6 {
                return Err(GeoError::ChartDegeneracy(
                    "components balance out; no ambient mean to anchor a chart".into(),
                ));
            }
            let anchor = ManifoldPoint::sphere_normalized(&m)?;
            Ok(Chart::exp_normal(anchor))
        }
    }
}

/// Simulate one L-matrix guided bridge up to T - cutoff and attach its log
/// correction factor.
pub fn marchand_bridge(
    x: &ProductPoint,
    spec: &GuidanceSpec,
    grid: &TimeGrid,
    noise: &NoiseSource,
    path: u64,
) -> Result<BridgePath> {
    let n = x.n();
    let d = x.manifold().dim();
    if spec.weights.len() != n {
        return Err(GeoError::InvalidInput("one weight per component".into()));
    }
    if (spec.horizon - grid.horizon()).abs() > 1e-12 {
        return Err(GeoError::InvalidInput(
            "spec horizon must match the grid horizon".into(),
        ));
    }
    let tau = spec.time_scales();
    let cond = DiagonalConditioner::new(n, d, &spec.weights)?;
    let horizon = grid.horizon();
    let dt = grid.dt();
    let k_end = grid.guided_steps();
    let k_mid = ((0.5 * horizon) / dt).round() as usize;
    let activation = horizon - spec.epsilon;

    let mut chart = initial_chart(x, &spec.weights)?;
    let mut chart_id = 0usize;
    let mut y = flatten_in_chart(&chart, x)?;

    let mut steps: Vec<BridgeStep> = Vec::with_capacity(k_end + 1);
    let mut diag = BridgeDiagnostics::default();
    let mut xi = vec![0.0; n * d];

    for k in 0..=k_end {
        let t = grid.time(k);
        let intrinsic = unflatten_from_chart(&chart, &y, n)?;
        let defect = cond.diagonal_defect(&y);
        let ratio = defect * defect / loglog_envelope(horizon, t);
        if k == k_mid {
            diag.defect_mid = defect;
            diag.envelope_ratio_mid = ratio;
        }
        if k >= k_mid {
            diag.envelope_ratio_max = diag.envelope_ratio_max.max(ratio);
        }
        if k == k_end {
            diag.defect_end = defect;
            diag.envelope_ratio_end = ratio;
            diag.spread_end = intrinsic.spread()?;
        }
        steps.push(BridgeStep {
            time: t,
            chart: chart.clone(),
            chart_id,
            y: y.clone(),
            pin: None,
            z: None,
            z_chart: None,
            intrinsic: intrinsic.clone(),
            z_intrinsic: None,
        });
        if k == k_end {
            break;
        }

        let coeffs = product_coefficients(&chart, &y, &tau)?;
        diag.sigma_eig_max = diag.sigma_eig_max.max(coeffs.sigma_eig_max);
        let mut drift = coeffs.drift.clone();
        if t >= activation - 1e-12 {
            let sigma_full = coeffs.sigma_full();
            let terms = cond.oblique_terms(&sigma_full)?;
            let rate = spec.pinning_rate(t, grid);
            let ly = cond.l() * &y;
            // - Sigma beta (L Y) / (T - t) = - P Y / (T - t).
            let pull = &sigma_full * (&terms.beta * &ly) * rate;
            drift -= pull;
        }
        noise.fill_normals(path, channel::PRIMARY, k as u64, &mut xi);
        let noise_vec = DVector::from_row_slice(&xi);
        let diffused = coeffs.apply_sigma(&noise_vec);
        y += drift * dt + diffused * dt.sqrt();
        if y.iter().any(|v| !v.is_finite()) {
            return Err(GeoError::NonFiniteState { step: k, time: t });
        }
        // Chart switch on exit from the comfortable region.
        if needs_switch(MARCHAND_POLICY, &chart, &y) {
            let next_intrinsic = unflatten_from_chart(&chart, &y, n)?;
            let anchor = chart_mean_point(&chart, &y, n, &spec.weights)?;
            let new_chart = Chart::exp_normal(anchor);
            y = flatten_in_chart(&new_chart, &next_intrinsic)?;
            chart = new_chart;
            chart_id += 1;
        }
    }

    let endpoint_mean = chart_mean_point(
        &steps[k_end].chart,
        &steps[k_end].y,
        n,
        &spec.weights,
    )?;
    let mut out = BridgePath {
        grid: *grid,
        steps,
        log_phi: 0.0,
        endpoint_mean,
        status: BridgeStatus::Converged,
        diagnostics: diag,
    };
    out.log_phi = crate::bridges::corrections::marchand_log_correction(&out, spec, None)?;
    Ok(out)
}

/// Guidance drift of the L-matrix scheme at a given chart state, exposed
/// for direct inspection: - Sigma beta (L y) / (T - t) when active, zero
/// otherwise.
pub fn guidance_drift(
    cond: &DiagonalConditioner,
    chart: &Chart,
    y: &DVector<f64>,
    spec: &GuidanceSpec,
    grid: &TimeGrid,
    t: f64,
) -> Result<DVector<f64>> {
    let tau = spec.time_scales();
    if t < grid.horizon() - spec.epsilon - 1e-12 {
        return Ok(DVector::zeros(y.len()));
    }
    let coeffs = product_coefficients(chart, y, &tau)?;
    let sigma_full = coeffs.sigma_full();
    let terms = cond.oblique_terms(&sigma_full)?;
    let rate = spec.pinning_rate(t, grid);
    Ok(-(&sigma_full * (&terms.beta * (cond.l() * y))) * rate)
}

/// Largest pairwise distance among the terminal components, normalized by
/// the diagnostics bound 5 sqrt(cutoff n) * max sigma eigenvalue.
pub fn spread_ratio(path: &BridgePath, n: usize) -> f64 {
    let bound =
        5.0 * (path.grid.cutoff() * n as f64).sqrt() * path.diagnostics.sigma_eig_max.max(1e-300);
    path.diagnostics.spread_end / bound
}
