//! Flat-space bridge to the diagonal: every component is pulled toward the
//! running weighted average,
//!     dY^i = -(Y^i - Ybar_w) / (T - t) dt + (sigma / sqrt(w_i)) dW^i,
//! which conditions the product of per-component Brownian motions (the
//! component with weight w runs at time scale 1/w) on meeting at time T.
//! The weighted average itself is driftless, so the diagonal endpoint is
//! Gaussian with mean Ybar_w(0) and variance sigma^2 T / sum(w).

use nalgebra::DVector;

use crate::bridges::{
    loglog_envelope, BridgeDiagnostics, BridgePath, BridgeStatus, BridgeStep, GuidanceSpec,
};
use crate::error::{GeoError, Result};
use crate::geometry::{Chart, Manifold, ManifoldPoint};
use crate::product::{
    flatten_in_chart, project_diagonal, unflatten_from_chart, DiagonalConditioner, ProductPoint,
};
use crate::sampling::{channel, NoiseSource};
use crate::sde::TimeGrid;

/// The n x n interaction matrix with 1 - 1/n on the diagonal and -1/n off
/// it (equal weights): the drift reads dY = -(1/(T-t)) (A (x) I_d) Y dt.
/// Its rows sum to zero, so the component average is driftless.
pub fn interaction_matrix(n: usize) -> nalgebra::DMatrix<f64> {
    let mut a = nalgebra::DMatrix::from_element(n, n, -1.0 / n as f64);
    for i in 0..n {
        a[(i, i)] += 1.0;
    }
    a
}

/// Simulate one flat-space diagonal bridge up to T - cutoff.
pub fn euclidean_diagonal_bridge(
    points: &[ManifoldPoint],
    spec: &GuidanceSpec,
    grid: &TimeGrid,
    noise: &NoiseSource,
    path: u64,
) -> Result<BridgePath> {
    let n = points.len();
    if n < 2 {
        return Err(GeoError::InvalidInput("need at least two points".into()));
    }
    let d = match points[0].manifold() {
        Manifold::Euclidean(d) => d,
        _ => {
            return Err(GeoError::InvalidInput(
                "the flat diagonal bridge requires a Euclidean manifold".into(),
            ))
        }
    };
    if spec.weights.len() != n {
        return Err(GeoError::InvalidInput("one weight per point".into()));
    }
    if (spec.horizon - grid.horizon()).abs() > 1e-12 {
        return Err(GeoError::InvalidInput(
            "spec horizon must match the grid horizon".into(),
        ));
    }
    let start = ProductPoint::new(points.to_vec())?;
    let chart = Chart::identity(d);
    let mut y = flatten_in_chart(&chart, &start)?;
    let tau = spec.time_scales();
    let cond = DiagonalConditioner::new(n, d, &spec.weights)?;
    let dt = grid.dt();
    let k_end = grid.guided_steps();
    let k_mid = ((0.5 * grid.horizon()) / dt).round() as usize;

    let mut steps = Vec::with_capacity(k_end + 1);
    let mut diag = BridgeDiagnostics {
        sigma_eig_max: tau.iter().cloned().fold(0.0f64, f64::max).sqrt(),
        ..Default::default()
    };
    let mut xi = vec![0.0; n * d];
    for k in 0..=k_end {
        let t = grid.time(k);
        let mu = project_diagonal(&y, n, d, &spec.weights)?;
        let intrinsic = unflatten_from_chart(&chart, &y, n)?;
        let mut pin = DVector::zeros(n * d);
        for i in 0..n {
            for s in 0..d {
                pin[i * d + s] = mu[s];
            }
        }
        let defect = cond.diagonal_defect(&y);
        let ratio = defect * defect / loglog_envelope(grid.horizon(), t);
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
            chart_id: 0,
            y: y.clone(),
            pin: Some(pin.clone()),
            z: None,
            z_chart: None,
            intrinsic,
            z_intrinsic: None,
        });
        if k == k_end {
            break;
        }
        let rate = spec.pinning_rate(t, grid);
        noise.fill_normals(path, channel::PRIMARY, k as u64, &mut xi);
        for i in 0..n {
            let scale = tau[i].sqrt() * dt.sqrt();
            for s in 0..d {
                let idx = i * d + s;
                y[idx] += -(y[idx] - mu[s]) * rate * dt + scale * xi[idx];
            }
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(GeoError::NonFiniteState {
                step: k,
                time: t,
            });
        }
    }

    let mu_end = project_diagonal(&steps[k_end].y, n, d, &spec.weights)?;
    let endpoint_mean = chart.from_chart(&mu_end)?;
    Ok(BridgePath {
        grid: *grid,
        steps,
        log_phi: 0.0,
        endpoint_mean,
        status: BridgeStatus::Converged,
        diagnostics: diag,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bridges::SchemeKind;
    use approx::assert_relative_eq;

    fn pts(coords: &[&[f64]]) -> Vec<ManifoldPoint> {
        coords
            .iter()
            .map(|c| ManifoldPoint::euclidean(c).unwrap())
            .collect()
    }

    #[test]
    fn interaction_matrix_matches_the_two_point_case() {
        let a = interaction_matrix(2);
        assert_relative_eq!(a[(0, 0)], 0.5);
        assert_relative_eq!(a[(0, 1)], -0.5);
        assert_relative_eq!(a[(1, 0)], -0.5);
        assert_relative_eq!(a[(1, 1)], 0.5);
        // Zero row sums: the all-ones vector is in the kernel.
        let ones = DVector::from_element(2, 1.0);
        assert_relative_eq!((a * ones).norm(), 0.0);
    }

    #[test]
    fn drift_vanishes_on_the_diagonal() {
        // sigma -> 0: a path started on the diagonal stays there.
        let points = pts(&[&[2.0], &[2.0], &[2.0]]);
        let spec = GuidanceSpec::new(SchemeKind::EuclideanDiagonal, vec![1.0; 3], 1.0)
            .unwrap()
            .with_sigma_scale(1e-8)
            .unwrap();
        let grid = TimeGrid::new(1.0, 200).unwrap();
        let noise = NoiseSource::new(1);
        let path = euclidean_diagonal_bridge(&points, &spec, &grid, &noise, 0).unwrap();
        for step in &path.steps {
            for v in step.y.iter() {
                assert!((v - 2.0).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn weighted_average_is_conserved_in_expectation() {
        let points = pts(&[&[0.0], &[1.0], &[2.0], &[3.0]]);
        let weights = vec![4.0, 1.0, 1.0, 2.0];
        let spec =
            GuidanceSpec::new(SchemeKind::EuclideanDiagonal, weights.clone(), 1.0).unwrap();
        let grid = TimeGrid::new(1.0, 100).unwrap();
        let noise = NoiseSource::new(7);
        let paths = 2000;
        let mut sum = 0.0;
        for j in 0..paths {
            let p = euclidean_diagonal_bridge(&points, &spec, &grid, &noise, j).unwrap();
            sum += p.endpoint_mean.coords()[0];
        }
        let mean = sum / paths as f64;
        // Weighted start average 9/8 with standard error sqrt(T/sum w)/sqrt(J).
        let se = (1.0f64 / 8.0).sqrt() / (paths as f64).sqrt();
        assert!(
            (mean - 1.125).abs() < 5.0 * se,
            "mean {mean} vs 1.125 (se {se})"
        );
    }

    #[test]
    fn path_records_cover_the_guided_grid() {
        let points = pts(&[&[0.0, 0.0], &[1.0, 1.0]]);
        let spec = GuidanceSpec::new(SchemeKind::EuclideanDiagonal, vec![1.0; 2], 0.5).unwrap();
        let grid = TimeGrid::new(0.5, 50).unwrap();
        let noise = NoiseSource::new(3);
        let path = euclidean_diagonal_bridge(&points, &spec, &grid, &noise, 1).unwrap();
        assert_eq!(path.steps.len(), grid.guided_steps() + 1);
        assert_relative_eq!(path.steps.last().unwrap().time, 0.5 - grid.dt());
        assert_eq!(path.log_phi, 0.0);
    }
}
