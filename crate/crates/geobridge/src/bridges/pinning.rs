//! Flat-space verification system for state-dependent pinning: an
//! unconditioned reference diffusion X and a guided process Y pulled toward
//! v(X),
//!     dX = sigma_x dB,
//!     dY = -(Y - v(X)) / (T - t) dt + sigma_y dW,
//! whose gap |Y_t - v(X_t)| obeys a (T - t) loglog envelope.

use nalgebra::DVector;

use crate::error::{GeoError, Result};
use crate::sampling::{channel, NoiseSource};
use crate::sde::TimeGrid;

/// Recorded trajectories of the coupled system plus the gap trace.
#[derive(Debug, Clone)]
pub struct PinnedPaths {
    pub times: Vec<f64>,
    pub x: Vec<DVector<f64>>,
    pub y: Vec<DVector<f64>>,
    pub gap: Vec<f64>,
}

impl PinnedPaths {
    /// gap^2 normalized by the loglog envelope at each recorded time.
    pub fn envelope_ratios(&self, horizon: f64) -> Vec<f64> {
        self.times
            .iter()
            .zip(&self.gap)
            .map(|(t, g)| g * g / crate::bridges::loglog_envelope(horizon, *t))
            .collect()
    }
}

/// Simulate the coupled system up to T - cutoff. `x0` seeds the reference
/// process; the guided process starts at v(x0). Both diffusions are scalar
/// multiples of the identity.
pub fn state_dependent_pinning(
    x0: &DVector<f64>,
    v_map: &dyn Fn(&DVector<f64>) -> DVector<f64>,
    sigma_x: f64,
    sigma_y: f64,
    grid: &TimeGrid,
    noise: &NoiseSource,
    path: u64,
) -> Result<PinnedPaths> {
    if !(sigma_x >= 0.0) || !(sigma_y >= 0.0) {
        return Err(GeoError::InvalidInput(
            "diffusion scales must be nonnegative".into(),
        ));
    }
    let nx = x0.len();
    let mut x = x0.clone();
    let mut y = v_map(&x);
    let ny = y.len();
    let horizon = grid.horizon();
    let dt = grid.dt();
    let k_end = grid.guided_steps();
    let floor = grid.cutoff();

    let mut out = PinnedPaths {
        times: Vec::with_capacity(k_end + 1),
        x: Vec::with_capacity(k_end + 1),
        y: Vec::with_capacity(k_end + 1),
        gap: Vec::with_capacity(k_end + 1),
    };
    let mut xi_x = vec![0.0; nx];
    let mut xi_y = vec![0.0; ny];
    for k in 0..=k_end {
        let t = grid.time(k);
        let target = v_map(&x);
        out.times.push(t);
        out.x.push(x.clone());
        out.y.push(y.clone());
        out.gap.push((&y - &target).norm());
        if k == k_end {
            break;
        }
        let rate = 1.0 / (horizon - t).max(floor);
        noise.fill_normals(path, channel::REFERENCE, k as u64, &mut xi_x);
        noise.fill_normals(path, channel::PRIMARY, k as u64, &mut xi_y);
        for s in 0..ny {
            y[s] += -(y[s] - target[s]) * rate * dt + sigma_y * dt.sqrt() * xi_y[s];
        }
        for s in 0..nx {
            x[s] += sigma_x * dt.sqrt() * xi_x[s];
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(GeoError::NonFiniteState { step: k, time: t });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_target_reduces_to_point_pinning() {
        let grid = TimeGrid::new(1.0, 500).unwrap();
        let noise = NoiseSource::new(41);
        let c = DVector::from_row_slice(&[2.0, -1.0]);
        let cc = c.clone();
        let v = move |_x: &DVector<f64>| cc.clone();
        let mut worst = 0.0f64;
        for j in 0..50 {
            let run = state_dependent_pinning(
                &DVector::zeros(2),
                &v,
                1.0,
                1.0,
                &grid,
                &noise,
                j,
            )
            .unwrap();
            let endgap = (run.y.last().unwrap() - &c).norm();
            worst = worst.max(endgap);
        }
        // Gap at T - dt scales like sqrt(dt loglog): generous multiple.
        assert!(worst < 0.5, "worst terminal gap {worst}");
    }

    #[test]
    fn weighted_average_target_pins_to_it() {
        let grid = TimeGrid::new(1.0, 500).unwrap();
        let noise = NoiseSource::new(42);
        let w = [2.0, 1.0, 1.0];
        let v = move |x: &DVector<f64>| {
            let total: f64 = w.iter().sum();
            DVector::from_element(1, (0..3).map(|i| w[i] * x[i]).sum::<f64>() / total)
        };
        let x0 = DVector::from_row_slice(&[0.0, 1.0, 2.0]);
        let run = state_dependent_pinning(&x0, &v, 1.0, 1.0, &grid, &noise, 0).unwrap();
        let last_gap = *run.gap.last().unwrap();
        assert!(last_gap < 0.3, "terminal gap {last_gap}");
    }

    #[test]
    fn identity_block_target_tracks_the_reference() {
        // v picks the first coordinate block: Y follows X^1.
        let grid = TimeGrid::new(1.0, 1000).unwrap();
        let noise = NoiseSource::new(43);
        let v = |x: &DVector<f64>| DVector::from_element(1, x[0]);
        let x0 = DVector::from_row_slice(&[0.5, -0.5]);
        let mut mid_ratios = Vec::new();
        let mut end_ratios = Vec::new();
        for j in 0..100 {
            let run = state_dependent_pinning(&x0, &v, 1.0, 1.0, &grid, &noise, j).unwrap();
            let ratios = run.envelope_ratios(1.0);
            mid_ratios.push(ratios[ratios.len() / 2]);
            end_ratios.push(*ratios.last().unwrap());
        }
        let p99 = |v: &mut Vec<f64>| {
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            v[(0.99 * (v.len() as f64 - 1.0)).round() as usize]
        };
        let end = p99(&mut end_ratios);
        let mid = p99(&mut mid_ratios).max(1e-12);
        assert!(end.is_finite());
        assert!(end < 10.0 * mid.max(1.0), "ratio blow-up: {end} vs {mid}");
    }
}
