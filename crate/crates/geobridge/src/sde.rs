//! Euler-Maruyama integration of chart-local SDEs, Brownian motion on the
//! supported manifolds, and chart re-centering along a path.

use nalgebra::{DMatrix, DVector};

use crate::error::{GeoError, Result};
use crate::geometry::{local_coefficients, Chart, Manifold, ManifoldPoint};
use crate::product::{components_from_chart, unflatten_from_chart, ProductPoint};
use crate::sampling::{channel, NoiseSource};

/// Uniform time grid on [0, T]. Guided schemes integrate up to T - cutoff;
/// the cutoff defaults to one step and must land on a grid point.
#[derive(Debug, Clone, Copy)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
    cutoff: f64,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        let dt = horizon / steps as f64;
        Self::with_cutoff(horizon, steps, dt)
    }

    pub fn with_cutoff(horizon: f64, steps: usize, cutoff: f64) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(GeoError::InvalidInput("horizon must be positive".into()));
        }
        if steps < 2 {
            return Err(GeoError::InvalidInput("need at least two steps".into()));
        }
        if !(cutoff > 0.0) || cutoff >= horizon {
            return Err(GeoError::InvalidInput(
                "cutoff must lie strictly inside (0, T)".into(),
            ));
        }
        let dt = horizon / steps as f64;
        let ratio = cutoff / dt;
        if (ratio - ratio.round()).abs() > 1e-9 {
            return Err(GeoError::InvalidInput(
                "T - cutoff must be a grid point (cutoff a multiple of dt)".into(),
            ));
        }
        Ok(Self {
            horizon,
            steps,
            cutoff,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt()
    }

    /// Number of steps a guided integration takes to reach T - cutoff.
    pub fn guided_steps(&self) -> usize {
        self.steps - (self.cutoff / self.dt()).round() as usize
    }
}

/// Seed lineage of a state: which (master seed, path, step) produced it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedLineage {
    pub master_seed: u64,
    pub path: u64,
    pub step: u64,
}

/// A chart-local state of a (product) path.
#[derive(Debug, Clone)]
pub struct PathState {
    pub chart: Chart,
    pub coords: DVector<f64>,
    pub time: f64,
    pub log_phi: f64,
    pub lineage: SeedLineage,
}

impl PathState {
    /// Number of product components this state describes.
    pub fn components(&self) -> usize {
        self.coords.len() / self.chart.dim()
    }

    /// Intrinsic points of every component.
    pub fn points(&self) -> Result<Vec<ManifoldPoint>> {
        components_from_chart(&self.chart, &self.coords, self.components())
    }

    /// Intrinsic product point described by this state (two or more
    /// components).
    pub fn intrinsic(&self) -> Result<ProductPoint> {
        unflatten_from_chart(&self.chart, &self.coords, self.components())
    }

    /// One explicit Euler-Maruyama update:
    /// coords' = coords + drift dt + diffusion (sqrt(dt) noise).
    pub fn em_step(
        &self,
        drift: &DVector<f64>,
        diffusion: &DMatrix<f64>,
        dt: f64,
        noise: &DVector<f64>,
    ) -> Result<PathState> {
        let coords = em_step(&self.coords, drift, diffusion, dt, noise)?;
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(GeoError::NonFiniteState {
                step: self.lineage.step as usize,
                time: self.time,
            });
        }
        Ok(PathState {
            chart: self.chart.clone(),
            coords,
            time: self.time + dt,
            log_phi: self.log_phi,
            lineage: SeedLineage {
                step: self.lineage.step + 1,
                ..self.lineage
            },
        })
    }
}

/// Euler-Maruyama update on raw coordinates.
pub fn em_step(
    coords: &DVector<f64>,
    drift: &DVector<f64>,
    diffusion: &DMatrix<f64>,
    dt: f64,
    noise: &DVector<f64>,
) -> Result<DVector<f64>> {
    if !(dt > 0.0) {
        return Err(GeoError::InvalidInput("dt must be positive".into()));
    }
    if drift.len() != coords.len() || diffusion.nrows() != coords.len() {
        return Err(GeoError::InvalidInput(
            "drift/diffusion dimensions do not match the state".into(),
        ));
    }
    Ok(coords + drift * dt + diffusion * (noise * dt.sqrt()))
}

/// Chart re-centering policy along a simulated path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SwitchPolicy {
    /// Re-center the chart at the anchor on every step.
    EveryStep,
    /// Re-center only when some component's coordinate norm exceeds the
    /// given fraction of the chart validity radius.
    Threshold(f64),
    /// Never switch (single fixed chart).
    Never,
}

/// Re-express a state in a fresh exponential normal chart centered at
/// `anchor`. The intrinsic point is unchanged.
pub fn chart_switch(state: &PathState, anchor: &ManifoldPoint) -> Result<PathState> {
    let n = state.components();
    let d = state.chart.dim();
    let new_chart = Chart::exp_normal(anchor.clone());
    let mut coords = DVector::zeros(n * d);
    for i in 0..n {
        let xi = DVector::from_iterator(d, (0..d).map(|s| state.coords[i * d + s]));
        let p = state.chart.from_chart(&xi)?;
        let yi = new_chart.to_chart(&p).map_err(|e| match e {
            GeoError::PointOutsideChart(m) => GeoError::ChartDegeneracy(m),
            other => other,
        })?;
        for s in 0..d {
            coords[i * d + s] = yi[s];
        }
    }
    Ok(PathState {
        chart: new_chart,
        coords,
        time: state.time,
        log_phi: state.log_phi,
        lineage: state.lineage,
    })
}

/// Whether `policy` asks for a switch given the current coordinates.
pub fn needs_switch(policy: SwitchPolicy, chart: &Chart, coords: &DVector<f64>) -> bool {
    match policy {
        SwitchPolicy::EveryStep => true,
        SwitchPolicy::Never => false,
        SwitchPolicy::Threshold(frac) => {
            if !chart.valid_radius().is_finite() {
                return false;
            }
            let d = chart.dim();
            let n = coords.len() / d;
            let bound = frac * chart.valid_radius();
            (0..n).any(|i| {
                let norm2: f64 = (0..d).map(|s| coords[i * d + s] * coords[i * d + s]).sum();
                norm2.sqrt() > bound
            })
        }
    }
}

/// Chart strategy for plain Brownian simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BrownianChart {
    /// Exponential normal chart re-centered at the current point per policy.
    Recenter(SwitchPolicy),
    /// A single fixed stereographic chart (projection from the north pole).
    FixedStereographicNorth,
}

/// Default policy for plain Brownian motion: re-center once coordinates
/// leave half the validity radius.
pub const BROWNIAN_POLICY: SwitchPolicy = SwitchPolicy::Threshold(0.5);

/// Simulate Brownian motion started at `x0` over the full grid, returning
/// the intrinsic point at every grid time (including the start).
pub fn simulate_brownian(
    x0: &ManifoldPoint,
    grid: &TimeGrid,
    noise: &NoiseSource,
    path: u64,
) -> Result<Vec<ManifoldPoint>> {
    simulate_brownian_with(x0, grid, noise, path, BrownianChart::Recenter(BROWNIAN_POLICY))
}

/// Brownian simulation with an explicit chart strategy.
pub fn simulate_brownian_with(
    x0: &ManifoldPoint,
    grid: &TimeGrid,
    noise: &NoiseSource,
    path: u64,
    chart_mode: BrownianChart,
) -> Result<Vec<ManifoldPoint>> {
    let d = x0.manifold().dim();
    let dt = grid.dt();
    let (mut chart, policy) = match (x0.manifold(), chart_mode) {
        (Manifold::Euclidean(dim), _) => (Chart::identity(dim), SwitchPolicy::Never),
        (Manifold::Sphere2, BrownianChart::Recenter(p)) => (Chart::exp_normal(x0.clone()), p),
        (Manifold::Sphere2, BrownianChart::FixedStereographicNorth) => {
            (Chart::stereographic_north(), SwitchPolicy::Never)
        }
    };
    let mut coords = chart.to_chart(x0)?;
    let mut out = Vec::with_capacity(grid.steps() + 1);
    out.push(x0.clone());
    let mut xi = vec![0.0; d];
    for k in 0..grid.steps() {
        let c = local_coefficients(&chart, &coords)?;
        noise.fill_normals(path, channel::BROWNIAN, k as u64, &mut xi);
        let z = DVector::from_row_slice(&xi);
        coords = em_step(&coords, &c.drift, &c.sigma, dt, &z)?;
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(GeoError::NonFiniteState {
                step: k,
                time: grid.time(k),
            });
        }
        // Exiting the chart validity region fails the path (dropped and
        // reported by callers); the policy controls eager re-centering.
        let point = chart.from_chart(&coords)?;
        out.push(point.clone());
        if needs_switch(policy, &chart, &coords) {
            chart = Chart::exp_normal(point.clone());
            coords = chart.to_chart(&point)?;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::geodesic_distance;
    use approx::assert_relative_eq;

    fn lineage() -> SeedLineage {
        SeedLineage {
            master_seed: 0,
            path: 0,
            step: 0,
        }
    }

    #[test]
    fn grid_spacing_and_guided_steps() {
        let g = TimeGrid::new(1.0, 500).unwrap();
        assert_relative_eq!(g.dt(), 0.002);
        assert_eq!(g.guided_steps(), 499);
        let g2 = TimeGrid::with_cutoff(2.0, 100, 0.1).unwrap();
        assert_eq!(g2.guided_steps(), 95);
        assert!(TimeGrid::with_cutoff(1.0, 100, 0.0101).is_err());
    }

    #[test]
    fn em_step_degenerate_cases() {
        let zero = DVector::zeros(2);
        let id = DMatrix::identity(2, 2);

        // No drift, no diffusion: unchanged.
        let c = DVector::from_row_slice(&[0.4, -0.2]);
        let out = em_step(&c, &zero, &DMatrix::zeros(2, 2), 0.1, &DVector::from_row_slice(&[3.0, 3.0])).unwrap();
        assert_relative_eq!((out - &c).norm(), 0.0);

        // Pure drift.
        let out = em_step(&zero, &DVector::from_row_slice(&[1.0, 0.0]), &DMatrix::zeros(2, 2), 0.1, &zero).unwrap();
        assert_relative_eq!(out[0], 0.1);
        assert_relative_eq!(out[1], 0.0);

        // Pure diffusion: dt = 0.25 scales the noise by 0.5.
        let out = em_step(&zero, &zero, &id, 0.25, &DVector::from_row_slice(&[2.0, -2.0])).unwrap();
        assert_relative_eq!(out[0], 1.0);
        assert_relative_eq!(out[1], -1.0);
    }

    #[test]
    fn path_state_em_step_flags_overflow() {
        let chart = Chart::identity(1);
        let state = PathState {
            chart,
            coords: DVector::from_row_slice(&[1.0]),
            time: 0.0,
            log_phi: 0.0,
            lineage: lineage(),
        };
        let bad = state.em_step(
            &DVector::from_row_slice(&[f64::INFINITY]),
            &DMatrix::zeros(1, 1),
            0.1,
            &DVector::zeros(1),
        );
        assert!(matches!(bad, Err(GeoError::NonFiniteState { .. })));
    }

    #[test]
    fn chart_switch_at_center_is_identity() {
        let p = ManifoldPoint::sphere(&[0.0, 0.0, 1.0]).unwrap();
        let chart = Chart::exp_normal(p.clone());
        let state = PathState {
            chart,
            coords: DVector::zeros(2),
            time: 0.3,
            log_phi: 0.0,
            lineage: lineage(),
        };
        let switched = chart_switch(&state, &p).unwrap();
        assert!(switched.coords.norm() < 1e-15);
        assert_relative_eq!(switched.time, 0.3);
    }

    #[test]
    fn chart_switch_recenters_and_preserves_the_point() {
        let p = ManifoldPoint::sphere(&[0.0, 0.0, 1.0]).unwrap();
        let chart = Chart::exp_normal(p);
        let coords = DVector::from_row_slice(&[0.2, 0.0]);
        let intrinsic = chart.from_chart(&coords).unwrap();
        let state = PathState {
            chart,
            coords,
            time: 0.0,
            log_phi: 0.0,
            lineage: lineage(),
        };
        let switched = chart_switch(&state, &intrinsic).unwrap();
        assert!(switched.coords.norm() < 1e-12);
        let back = switched.points().unwrap();
        assert!(geodesic_distance(&back[0], &intrinsic).unwrap() < 1e-9);
    }

    #[test]
    fn repeated_recentering_does_not_drift() {
        let src = NoiseSource::new(5);
        let p0 = ManifoldPoint::sphere_normalized(&[0.3, -0.2, 0.93]).unwrap();
        let chart = Chart::exp_normal(p0.clone());
        let mut state = PathState {
            chart,
            coords: DVector::zeros(2),
            time: 0.0,
            log_phi: 0.0,
            lineage: lineage(),
        };
        // Re-center 100 times at random anchors in a ball around the
        // point; the represented point must stay put.
        let base_chart = Chart::exp_normal(p0.clone());
        for k in 0..100u64 {
            let z = src.normals(0, 7, k, 2);
            let anchor_coords =
                DVector::from_row_slice(&[0.4 * z[0].tanh(), 0.4 * z[1].tanh()]);
            let anchor = base_chart.from_chart(&anchor_coords).unwrap();
            state = chart_switch(&state, &anchor).unwrap();
        }
        let end = state.points().unwrap();
        assert!(geodesic_distance(&end[0], &p0).unwrap() < 1e-7);
    }

    #[test]
    fn euclidean_brownian_increments_are_exact() {
        let src = NoiseSource::new(11);
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let x0 = ManifoldPoint::euclidean(&[0.0, 0.0]).unwrap();
        let path = simulate_brownian(&x0, &grid, &src, 3).unwrap();
        assert_eq!(path.len(), 5);
        // Replay the increments by hand.
        let mut expect = DVector::zeros(2);
        for k in 0..4u64 {
            let z = src.normals(3, channel::BROWNIAN, k, 2);
            expect += DVector::from_row_slice(&z) * grid.dt().sqrt();
            assert_relative_eq!(
                (path[(k + 1) as usize].coords() - &expect).norm(),
                0.0,
                epsilon = 1e-14
            );
        }
    }

    #[test]
    fn sphere_brownian_stays_on_sphere() {
        let src = NoiseSource::new(2);
        let grid = TimeGrid::new(0.5, 100).unwrap();
        let x0 = ManifoldPoint::sphere(&[0.0, 0.0, -1.0]).unwrap();
        let path = simulate_brownian(&x0, &grid, &src, 0).unwrap();
        for p in &path {
            assert_relative_eq!(p.coords().norm(), 1.0, epsilon = 1e-12);
        }
    }
}
