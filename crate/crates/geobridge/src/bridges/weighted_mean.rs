//! Weighted-mean pinning through a coupled auxiliary process.
//!
//! The auxiliary product state z carries the full chart Brownian dynamics
//! plus a pull onto its own running weighted mean, so z realizes the
//! conditioning to the diagonal. The primary state y drops the Brownian
//! drift and is pinned componentwise to z transferred into y's chart:
//!     dz^i = tau_i b(z^i) dt - (z^i - mu_w(z)) / (T - t) dt + sqrt(tau_i) sigma(z^i) dW~^i
//!     dy^i =                 - (y^i - v(z)^i)  / (T - t) dt + sqrt(tau_i) sigma(y^i) dW^i
//! Both charts re-center every step: y's at the weighted mean of y, z's at
//! the weighted mean of z. The dropped drift is priced by the correction
//! factor computed in `corrections`.
//!
//! `point_bridge` is the single-component specialization pinned to a fixed
//! target point; it backs the transition-density estimator.

use nalgebra::DVector;

use crate::bridges::corrections::{delyon_hu_log_correction, dh_increment};
use crate::bridges::{
    chart_mean_point, loglog_envelope, product_coefficients, BridgeDiagnostics, BridgePath,
    BridgeStatus, BridgeStep, GuidanceSpec,
};
use crate::error::{GeoError, Result};
use crate::geometry::{local_coefficients, Chart, Manifold, ManifoldPoint};
use crate::product::{
    flatten_in_chart, project_diagonal, unflatten_from_chart, DiagonalConditioner, ProductPoint,
};
use crate::sampling::{channel, NoiseSource};
use crate::sde::TimeGrid;

use super::marchand::initial_chart;

/// Simulate one weighted-mean pinned bridge up to T - cutoff and attach the
/// log correction factor.
pub fn weighted_mean_bridge(
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
    let recenter = matches!(x.manifold(), Manifold::Sphere2);
    let tau = spec.time_scales();
    let cond = DiagonalConditioner::new(n, d, &spec.weights)?;
    let horizon = grid.horizon();
    let dt = grid.dt();
    let k_end = grid.guided_steps();
    let k_mid = ((0.5 * horizon) / dt).round() as usize;

    let mut y_chart = initial_chart(x, &spec.weights)?;
    let mut z_chart = y_chart.clone();
    let mut chart_id = 0usize;
    let mut y = flatten_in_chart(&y_chart, x)?;
    let mut z = y.clone();

    let mut steps: Vec<BridgeStep> = Vec::with_capacity(k_end + 1);
    let mut diag = BridgeDiagnostics::default();
    let mut xi_y = vec![0.0; n * d];
    let mut xi_z = vec![0.0; n * d];

    for k in 0..=k_end {
        let t = grid.time(k);
        let intrinsic = unflatten_from_chart(&y_chart, &y, n)?;
        let z_intrinsic = unflatten_from_chart(&z_chart, &z, n)?;
        // Pinning targets: z components re-expressed in y's chart.
        let pin = flatten_in_chart(&y_chart, &z_intrinsic).map_err(|e| match e {
            GeoError::PointOutsideChart(m) => GeoError::ChartDegeneracy(m),
            other => other,
        })?;

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
            chart: y_chart.clone(),
            chart_id,
            y: y.clone(),
            pin: Some(pin.clone()),
            z: Some(z.clone()),
            z_chart: Some(z_chart.clone()),
            intrinsic: intrinsic.clone(),
            z_intrinsic: Some(z_intrinsic.clone()),
        });
        if k == k_end {
            break;
        }

        let rate = spec.pinning_rate(t, grid);
        let y_coeffs = product_coefficients(&y_chart, &y, &tau)?;
        let z_coeffs = product_coefficients(&z_chart, &z, &tau)?;
        diag.sigma_eig_max = diag.sigma_eig_max.max(y_coeffs.sigma_eig_max);

        noise.fill_normals(path, channel::PRIMARY, k as u64, &mut xi_y);
        noise.fill_normals(path, channel::AUXILIARY, k as u64, &mut xi_z);

        // Auxiliary update: Brownian dynamics plus pull onto its own mean.
        let mu_z = project_diagonal(&z, n, d, &spec.weights)?;
        let mut z_next = z.clone();
        {
            let noise_vec = DVector::from_row_slice(&xi_z);
            let diffused = z_coeffs.apply_sigma(&noise_vec);
            for i in 0..n {
                for s in 0..d {
                    let idx = i * d + s;
                    z_next[idx] += (z_coeffs.drift[idx] - (z[idx] - mu_z[s]) * rate) * dt
                        + diffused[idx] * dt.sqrt();
                }
            }
        }
        // Primary update: dropped Brownian drift, pinned to the transfer of z.
        let mut y_next = y.clone();
        {
            let noise_vec = DVector::from_row_slice(&xi_y);
            let diffused = y_coeffs.apply_sigma(&noise_vec);
            for idx in 0..n * d {
                y_next[idx] +=
                    -(y[idx] - pin[idx]) * rate * dt + diffused[idx] * dt.sqrt();
            }
        }
        if y_next.iter().chain(z_next.iter()).any(|v| !v.is_finite()) {
            return Err(GeoError::NonFiniteState { step: k, time: t });
        }

        if recenter {
            // Re-center both charts at their weighted means every step.
            let y_intr = unflatten_from_chart(&y_chart, &y_next, n)?;
            let z_intr = unflatten_from_chart(&z_chart, &z_next, n)?;
            let y_anchor = chart_mean_point(&y_chart, &y_next, n, &spec.weights)?;
            let z_anchor = chart_mean_point(&z_chart, &z_next, n, &spec.weights)?;
            y_chart = Chart::exp_normal(y_anchor);
            z_chart = Chart::exp_normal(z_anchor);
            y = flatten_in_chart(&y_chart, &y_intr).map_err(|e| match e {
                GeoError::PointOutsideChart(m) => GeoError::ChartDegeneracy(m),
                other => other,
            })?;
            z = flatten_in_chart(&z_chart, &z_intr).map_err(|e| match e {
                GeoError::PointOutsideChart(m) => GeoError::ChartDegeneracy(m),
                other => other,
            })?;
            chart_id += 1;
        } else {
            y = y_next;
            z = z_next;
        }
    }

    let last = &steps[k_end];
    let endpoint_mean = chart_mean_point(&last.chart, &last.y, n, &spec.weights)?;
    let mut out = BridgePath {
        grid: *grid,
        steps,
        log_phi: 0.0,
        endpoint_mean,
        status: BridgeStatus::Converged,
        diagnostics: diag,
    };
    out.log_phi = delyon_hu_log_correction(&out, spec)?;
    Ok(out)
}

/// Result of a single-component guided bridge toward a fixed point.
#[derive(Debug, Clone)]
pub struct PointBridgeOutcome {
    pub endpoint: ManifoldPoint,
    pub log_phi: f64,
}

/// Guided bridge of one Brownian motion from `z` to `v` in a fixed normal
/// chart centered at `z`:
///     dy = -(y - v_chart) / (T - t) dt + sigma(y) dW,
/// with the dropped chart drift priced into the running log correction.
pub fn point_bridge(
    z: &ManifoldPoint,
    v: &ManifoldPoint,
    grid: &TimeGrid,
    noise: &NoiseSource,
    path: u64,
) -> Result<PointBridgeOutcome> {
    z.same_manifold(v)?;
    let d = z.manifold().dim();
    let chart = match z.manifold() {
        Manifold::Euclidean(dim) => Chart::identity(dim),
        Manifold::Sphere2 => Chart::exp_normal(z.clone()),
    };
    let target = chart.to_chart(v)?;
    let mut y = chart.to_chart(z)?;
    let horizon = grid.horizon();
    let dt = grid.dt();
    let k_end = grid.guided_steps();
    let mut log_phi = 0.0f64;
    let mut xi = vec![0.0; d];
    let floor = grid.cutoff();

    for k in 0..k_end {
        let t = grid.time(k);
        let rate = 1.0 / (horizon - t).max(floor);
        let c0 = local_coefficients(&chart, &y)?;
        noise.fill_normals(path, channel::PRIMARY, k as u64, &mut xi);
        let noise_vec = DVector::from_row_slice(&xi);
        let mut y_next = y.clone();
        let diffused = &c0.sigma * noise_vec;
        for s in 0..d {
            y_next[s] += -(y[s] - target[s]) * rate * dt + diffused[s] * dt.sqrt();
        }
        if y_next.iter().any(|v| !v.is_finite()) {
            return Err(GeoError::NonFiniteState { step: k, time: t });
        }
        // Correction increment over [t, t + dt] in the fixed chart.
        let c1 = local_coefficients(&chart, &y_next)?;
        let ytil0 = &y - &target;
        let ytil1 = &y_next - &target;
        let dy = &y_next - &y;
        log_phi += dh_increment(&c0.g, &c1.g, &ytil0, &ytil1, &c0.drift, &dy, t, horizon, dt);
        if !log_phi.is_finite() {
            return Err(GeoError::NonFiniteCorrection);
        }
        y = y_next;
    }
    Ok(PointBridgeOutcome {
        endpoint: chart.from_chart(&y)?,
        log_phi,
    })
}

/// Pin-direction drift of the primary process at a recorded step, exposed
/// for tests: -(y - v(z)) * rate componentwise.
pub fn pin_drift(step: &BridgeStep, spec: &GuidanceSpec, grid: &TimeGrid) -> DVector<f64> {
    let rate = spec.pinning_rate(step.time, grid);
    let pin = step.pin.as_ref().expect("weighted-mean step has a pin");
    -(&step.y - pin) * rate
}

/// Weighted chart mean of the terminal state mapped back to the manifold,
/// recomputed from the records (mirrors `BridgePath::endpoint_mean`).
pub fn terminal_mean(path: &BridgePath, weights: &[f64]) -> Result<ManifoldPoint> {
    let last = path.steps.last().expect("non-empty path");
    let n = weights.len();
    chart_mean_point(&last.chart, &last.y, n, weights)
}

/// Residual between a component and its pin at the terminal step.
pub fn terminal_pin_gap(path: &BridgePath) -> f64 {
    let last = path.steps.last().expect("non-empty path");
    match &last.pin {
        Some(pin) => (&last.y - pin).norm(),
        None => f64::NAN,
    }
}
