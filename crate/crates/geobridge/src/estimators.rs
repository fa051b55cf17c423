//! Mean estimators: the weighted Fréchet mean by Riemannian gradient
//! descent, the weighted diffusion mean by sampling importance resampling
//! over diagonal bridges, and the Monte Carlo transition-density estimate
//! behind the small-time consistency check.

use nalgebra::DVector;

use crate::bridges::{point_bridge, GuidanceSpec, SchemeKind};
use crate::ensemble::{sample_ensemble, EnsembleConfig};
use crate::error::{GeoError, Result};
use crate::geometry::{
    chart_metric, exp_map, log_map, spd_sqrt, Chart, Manifold, ManifoldPoint, TangentVector,
};
use crate::sampling::{channel, NoiseSource};
use crate::sde::TimeGrid;
use rayon::prelude::*;

/// Initialization of the Fréchet solver.
#[derive(Debug, Clone)]
pub enum FrechetInit {
    /// Weighted chart mean of the points in a normal chart at the first
    /// point that can host all of them.
    ComponentMean,
    Point(ManifoldPoint),
}

/// Gradient-descent configuration for the Fréchet mean.
#[derive(Debug, Clone)]
pub struct FrechetConfig {
    pub step_size: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub init: FrechetInit,
}

impl Default for FrechetConfig {
    fn default() -> Self {
        Self {
            step_size: 0.5,
            max_iters: 1000,
            tol: 1e-9,
            init: FrechetInit::ComponentMean,
        }
    }
}

/// A converged Fréchet-mean run.
#[derive(Debug, Clone)]
pub struct FrechetRun {
    pub point: ManifoldPoint,
    pub iterations: usize,
    pub grad_norm: f64,
}

fn component_mean_init(points: &[ManifoldPoint], weights: &[f64]) -> Result<ManifoldPoint> {
    // First point whose normal chart hosts every sample anchors the start.
    for candidate in points {
        let chart = match candidate.manifold() {
            Manifold::Euclidean(d) => Chart::identity(d),
            Manifold::Sphere2 => Chart::exp_normal(candidate.clone()),
        };
        let mut mean = DVector::zeros(chart.dim());
        let total: f64 = weights.iter().sum();
        let mut ok = true;
        for (p, w) in points.iter().zip(weights) {
            match chart.to_chart(p) {
                Ok(x) => mean += x * (*w / total),
                Err(_) => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            if let Ok(p) = chart.from_chart(&mean) {
                return Ok(p);
            }
        }
    }
    Err(GeoError::NonConvergent(
        "no sample point hosts all others in its normal chart".into(),
    ))
}

/// Weighted Fréchet mean: iterate p <- exp_p(step * sum_i w_i log_p(x_i) / sum_j w_j)
/// until the normalized gradient norm drops below tol.
pub fn frechet_mean(
    points: &[ManifoldPoint],
    weights: &[f64],
    config: &FrechetConfig,
) -> Result<ManifoldPoint> {
    Ok(frechet_mean_full(points, weights, config)?.point)
}

/// Fréchet mean with iteration diagnostics.
pub fn frechet_mean_full(
    points: &[ManifoldPoint],
    weights: &[f64],
    config: &FrechetConfig,
) -> Result<FrechetRun> {
    if points.is_empty() || points.len() != weights.len() {
        return Err(GeoError::InvalidInput(
            "need one positive weight per point".into(),
        ));
    }
    if weights.iter().any(|w| !(*w > 0.0)) {
        return Err(GeoError::InvalidInput("weights must be positive".into()));
    }
    if !(config.step_size > 0.0 && config.step_size <= 1.0) {
        return Err(GeoError::InvalidInput("step size must be in (0, 1]".into()));
    }
    let total: f64 = weights.iter().sum();
    let mut p = match &config.init {
        FrechetInit::ComponentMean => component_mean_init(points, weights)?,
        FrechetInit::Point(q) => q.clone(),
    };
    for iter in 0..config.max_iters {
        let mut grad = DVector::zeros(p.manifold().ambient_dim());
        for (x, w) in points.iter().zip(weights) {
            let log = log_map(&p, x).map_err(|e| match e {
                GeoError::CutLocus(m) => GeoError::CutLocus(format!(
                    "cut locus encountered during iteration: {m}"
                )),
                other => other,
            })?;
            grad += log.vec() * (*w / total);
        }
        let grad_norm = grad.norm();
        if grad_norm < config.tol {
            return Ok(FrechetRun {
                point: p,
                iterations: iter,
                grad_norm,
            });
        }
        let step = TangentVector::projected(p.clone(), grad * config.step_size)?;
        p = exp_map(&p, &step)?;
    }
    Err(GeoError::NonConvergent(format!(
        "no fixed point within {} iterations at tolerance {}",
        config.max_iters, config.tol
    )))
}

/// Sampling-importance-resampling configuration.
#[derive(Debug, Clone)]
pub struct SirConfig {
    /// Number of guided bridges J.
    pub paths: usize,
    /// Grid steps per bridge.
    pub steps: usize,
    pub seed: u64,
    /// Proposal scheme; must produce correction factors.
    pub scheme: SchemeKind,
    pub threads: Option<usize>,
}

impl SirConfig {
    pub fn new(paths: usize, steps: usize, seed: u64, scheme: SchemeKind) -> Result<Self> {
        if paths == 0 {
            return Err(GeoError::InvalidInput("need at least one path".into()));
        }
        if !scheme.has_correction() {
            return Err(GeoError::InvalidInput(format!(
                "scheme '{}' has no correction factor and cannot weight a resample",
                scheme.name()
            )));
        }
        Ok(Self {
            paths,
            steps,
            seed,
            scheme,
            threads: None,
        })
    }
}

/// Diagnostics of a resampling pass.
#[derive(Debug, Clone)]
pub struct SirDiagnostics {
    /// Effective sample size 1 / sum P_j^2 of the normalized weights.
    pub ess: f64,
    pub failures: usize,
    pub resampled_index: u64,
    pub log_phi_min: f64,
    pub log_phi_max: f64,
    pub log_phi_mean: f64,
    /// Weighted endpoint ensemble (endpoint mean, normalized weight).
    pub ensemble: Vec<(ManifoldPoint, f64)>,
    /// Weight-averaged endpoint (Fréchet mean of the ensemble).
    pub weighted_mean: Option<ManifoldPoint>,
}

/// Normalize positive weights from log values; invariant under common
/// shifts of the log weights.
pub fn normalize_log_weights(log_w: &[f64]) -> Result<Vec<f64>> {
    if log_w.is_empty() {
        return Err(GeoError::DegenerateWeights);
    }
    let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(GeoError::DegenerateWeights);
    }
    let raw: Vec<f64> = log_w.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = raw.iter().sum();
    if !(total > 0.0) {
        return Err(GeoError::DegenerateWeights);
    }
    Ok(raw.into_iter().map(|w| w / total).collect())
}

/// Weighted diffusion mean: sample J guided bridges, weight their diagonal
/// endpoints by the correction factors, and resample one.
pub fn diffusion_mean_sir(
    points: &[ManifoldPoint],
    weights: &[f64],
    horizon: f64,
    cfg: &SirConfig,
) -> Result<(ManifoldPoint, SirDiagnostics)> {
    if !cfg.scheme.has_correction() {
        return Err(GeoError::InvalidInput(
            "resampling requires a correction-factor scheme".into(),
        ));
    }
    let spec = GuidanceSpec::new(cfg.scheme, weights.to_vec(), horizon)?;
    let grid = TimeGrid::new(horizon, cfg.steps)?;
    let ens_cfg = EnsembleConfig {
        spec,
        grid,
        paths: cfg.paths,
        seed: cfg.seed,
        threads: cfg.threads,
        record_paths: 0,
    };
    let result = sample_ensemble(points, &ens_cfg)?;

    let converged: Vec<_> = result.converged().collect();
    if converged.is_empty() {
        return Err(GeoError::AllPathsFailed);
    }
    let log_w: Vec<f64> = converged.iter().map(|s| s.log_phi).collect();
    let probs = normalize_log_weights(&log_w)?;

    // Deterministic resampling draw from the dedicated channel.
    let noise = NoiseSource::new(cfg.seed);
    let u = noise.uniform(u64::MAX, channel::RESAMPLE, 0, 0);
    let mut cumulative = 0.0;
    let mut chosen = converged.len() - 1;
    for (i, p) in probs.iter().enumerate() {
        cumulative += p;
        if u <= cumulative {
            chosen = i;
            break;
        }
    }
    let pick = converged[chosen];
    let estimate = pick
        .endpoint_mean
        .clone()
        .ok_or(GeoError::AllPathsFailed)?;

    let ess = 1.0 / probs.iter().map(|p| p * p).sum::<f64>();
    let ensemble: Vec<(ManifoldPoint, f64)> = converged
        .iter()
        .zip(&probs)
        .map(|(s, p)| (s.endpoint_mean.clone().unwrap(), *p))
        .collect();
    let weighted_mean = {
        let pts: Vec<ManifoldPoint> = ensemble.iter().map(|(p, _)| p.clone()).collect();
        let ws: Vec<f64> = ensemble.iter().map(|(_, w)| w.max(1e-300)).collect();
        frechet_mean(&pts, &ws, &FrechetConfig::default()).ok()
    };
    let mean_log = log_w.iter().sum::<f64>() / log_w.len() as f64;
    let diagnostics = SirDiagnostics {
        ess,
        failures: result.failures,
        resampled_index: pick.path_id,
        log_phi_min: log_w.iter().cloned().fold(f64::INFINITY, f64::min),
        log_phi_max: log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        log_phi_mean: mean_log,
        ensemble,
        weighted_mean,
    };
    Ok((estimate, diagnostics))
}

/// Monte Carlo transition-density estimate configuration.
#[derive(Debug, Clone)]
pub struct DensityConfig {
    pub paths: usize,
    pub steps: usize,
    pub seed: u64,
    pub threads: Option<usize>,
}

/// Transition-density estimate
///     p_T(z, v) = sqrt(det A(v) / (2 pi T)^d) exp(-|a(z)(z - v)|^2 / (2 T)) E[phi_T],
/// with A the chart metric, a its matrix square root, d the chart
/// dimension, and the expectation over guided point bridges from z to v.
#[derive(Debug, Clone)]
pub struct DensityEstimate {
    pub value: f64,
    pub std_error: f64,
    pub prefactor: f64,
    pub mean_correction: f64,
    pub failures: usize,
}

pub fn transition_density_estimate(
    z: &ManifoldPoint,
    v: &ManifoldPoint,
    horizon: f64,
    cfg: &DensityConfig,
) -> Result<DensityEstimate> {
    z.same_manifold(v)?;
    if !(horizon > 0.0) {
        return Err(GeoError::InvalidInput("horizon must be positive".into()));
    }
    let d = z.manifold().dim();
    let chart = match z.manifold() {
        Manifold::Euclidean(dim) => Chart::identity(dim),
        Manifold::Sphere2 => Chart::exp_normal(z.clone()),
    };
    let zx = chart.to_chart(z)?;
    let vx = chart.to_chart(v)?;
    let a_v = chart_metric(&chart, &vx)?;
    let a_z = chart_metric(&chart, &zx)?;
    let sqrt_az = spd_sqrt(&a_z)?;
    let diff = &zx - &vx;
    let mahalanobis = (&sqrt_az * diff).norm_squared();
    let det_av = a_v.determinant();
    if !(det_av > 0.0) {
        return Err(GeoError::SingularMetric("det A(v) not positive".into()));
    }
    let prefactor = (det_av / (2.0 * std::f64::consts::PI * horizon).powi(d as i32)).sqrt()
        * (-mahalanobis / (2.0 * horizon)).exp();

    let grid = TimeGrid::new(horizon, cfg.steps)?;
    let noise = NoiseSource::new(cfg.seed);
    let threads = cfg.threads.unwrap_or_else(|| {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    });
    let run = |j: u64| point_bridge(z, v, &grid, &noise, j).ok().map(|o| o.log_phi);
    let outcomes: Vec<Option<f64>> = if threads <= 1 {
        (0..cfg.paths as u64).map(run).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| GeoError::Io(format!("thread pool: {e}")))?;
        pool.install(|| (0..cfg.paths as u64).into_par_iter().map(run).collect())
    };
    let mut phis = Vec::with_capacity(cfg.paths);
    let mut failures = 0usize;
    for o in outcomes {
        match o {
            Some(log_phi) if log_phi.is_finite() => phis.push(log_phi.exp()),
            _ => failures += 1,
        }
    }
    if phis.is_empty() {
        return Err(GeoError::AllPathsFailed);
    }
    let m = phis.len() as f64;
    let mean = phis.iter().sum::<f64>() / m;
    let var = phis.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / (m - 1.0).max(1.0);
    Ok(DensityEstimate {
        value: prefactor * mean,
        std_error: prefactor * (var / m).sqrt(),
        prefactor,
        mean_correction: mean,
        failures,
    })
}

/// The rescaled log-density -2 t log p_t(p, q) for each requested time; as
/// t shrinks the values approach the squared geodesic distance.
pub fn varadhan_check(
    p: &ManifoldPoint,
    q: &ManifoldPoint,
    times: &[f64],
    cfg: &DensityConfig,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(times.len());
    for (i, t) in times.iter().enumerate() {
        let mut cfg_t = cfg.clone();
        // Independent seeds per time keep the estimates uncorrelated.
        cfg_t.seed = cfg.seed.wrapping_add(i as u64);
        let est = transition_density_estimate(p, q, *t, &cfg_t)?;
        if !(est.value > 0.0) {
            return Err(GeoError::DegenerateWeights);
        }
        out.push(-2.0 * t * est.value.ln());
    }
    Ok(out)
}
