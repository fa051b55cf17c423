//! Drift toward the closest diagonal point: minus the gradient of the
//! squared distance to the diagonal over 2 (T - t), which componentwise is
//! the logarithm toward the projection divided by T - t. The scheme carries
//! no correction factor and is excluded from importance resampling.

use nalgebra::DVector;

use crate::bridges::{
    loglog_envelope, BridgeDiagnostics, BridgePath, BridgeStatus, BridgeStep, GuidanceSpec,
};
use crate::error::{GeoError, Result};
use crate::geometry::{
    exp_map, local_coefficients, log_map, Chart, Manifold, ManifoldPoint, TangentVector,
};
use crate::product::{closest_diagonal_point, ProductPoint};
use crate::sampling::{channel, NoiseSource};
use crate::sde::TimeGrid;

/// Componentwise drift log_{x_i}(closest diagonal point) / (T - t), plus
/// the distance of `x` to the diagonal.
pub fn fermi_drift(x: &ProductPoint, t: f64, horizon: f64) -> Result<(Vec<TangentVector>, f64)> {
    if !(t < horizon) {
        return Err(GeoError::InvalidInput("need t < T".into()));
    }
    let proj = closest_diagonal_point(x)?;
    let mut out = Vec::with_capacity(x.n());
    for c in x.components() {
        let log = log_map(c, &proj.point)?;
        let scaled = TangentVector::new(c.clone(), log.vec() / (horizon - t))?;
        out.push(scaled);
    }
    Ok((out, proj.radial))
}

/// Simulate the drift-guided bridge: each component takes a Brownian step
/// in its own normal chart plus the pull toward the running closest
/// diagonal point.
pub fn fermi_bridge(
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
    let tau = spec.time_scales();
    let horizon = grid.horizon();
    let dt = grid.dt();
    let k_end = grid.guided_steps();
    let k_mid = ((0.5 * horizon) / dt).round() as usize;

    let mut current = x.clone();
    let mut steps = Vec::with_capacity(k_end + 1);
    let mut diag = BridgeDiagnostics::default();
    let mut xi = vec![0.0; n * d];
    let mut last_projection = closest_diagonal_point(&current)?;

    for k in 0..=k_end {
        let t = grid.time(k);
        let proj = closest_diagonal_point(&current)?;
        last_projection = proj.clone();
        // The radial distance to the diagonal plays the defect role here.
        let defect = proj.radial;
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
            diag.spread_end = current.spread()?;
        }
        // Record the state in a normal chart at the projection anchor.
        let chart = match current.manifold() {
            Manifold::Euclidean(dim) => Chart::identity(dim),
            Manifold::Sphere2 => Chart::exp_normal(proj.point.clone()),
        };
        let y = crate::product::flatten_in_chart(&chart, &current)?;
        steps.push(BridgeStep {
            time: t,
            chart,
            chart_id: k,
            y,
            pin: None,
            z: None,
            z_chart: None,
            intrinsic: current.clone(),
            z_intrinsic: None,
        });
        if k == k_end {
            break;
        }

        let rate = spec.pinning_rate(t, grid);
        noise.fill_normals(path, channel::PRIMARY, k as u64, &mut xi);
        let mut comps = Vec::with_capacity(n);
        for (i, c) in current.components().iter().enumerate() {
            // Per-component normal chart at the point itself: the Brownian
            // step is sqrt(tau dt) sigma(0) xi with sigma(0) = I.
            let pull = log_map(c, &proj.point)?;
            let step_chart = match c.manifold() {
                Manifold::Euclidean(dim) => Chart::identity(dim),
                Manifold::Sphere2 => Chart::exp_normal(c.clone()),
            };
            let origin = step_chart.to_chart(c)?;
            let coeffs = local_coefficients(&step_chart, &origin)?;
            let mut disp = DVector::zeros(d);
            for s in 0..d {
                let mut noise_s = 0.0;
                for s2 in 0..d {
                    noise_s += coeffs.sigma[(s, s2)] * xi[i * d + s2];
                }
                disp[s] = (tau[i] * dt).sqrt() * noise_s + tau[i] * coeffs.drift[s] * dt;
            }
            diag.sigma_eig_max = diag.sigma_eig_max.max(tau[i].sqrt());
            // Express the pull in chart coordinates and take one step.
            match c.manifold() {
                Manifold::Euclidean(_) => {
                    let next = c.coords() + pull.vec() * (rate * dt) + &disp;
                    comps.push(ManifoldPoint::from_vector(c.manifold(), next)?);
                }
                Manifold::Sphere2 => {
                    let v = TangentVector::projected(c.clone(), pull.vec() * (rate * dt))?;
                    let drifted = exp_map(c, &v)?;
                    let move_chart = Chart::exp_normal(drifted.clone());
                    let next = move_chart.from_chart(&disp)?;
                    comps.push(next);
                }
            }
        }
        current = ProductPoint::new(comps)?;
    }

    Ok(BridgePath {
        grid: *grid,
        steps,
        log_phi: 0.0,
        endpoint_mean: last_projection.point,
        status: BridgeStatus::Converged,
        diagnostics: diag,
    })
}
