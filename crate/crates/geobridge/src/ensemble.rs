//! Parallel ensembles of guided paths. Path index keys the noise, so the
//! ensemble content is independent of the worker count; reductions happen
//! in path order.

use rayon::prelude::*;

use crate::bridges::{
    euclidean_diagonal_bridge, fermi_bridge, marchand_bridge, weighted_mean_bridge,
    BridgeDiagnostics, BridgePath, GuidanceSpec, SchemeKind,
};
use crate::error::{GeoError, Result};
use crate::geometry::ManifoldPoint;
use crate::product::ProductPoint;
use crate::sampling::NoiseSource;
use crate::sde::TimeGrid;

/// Ensemble configuration: guided scheme, grid, path count, master seed,
/// worker count (`None` = available parallelism), and how many paths keep
/// their full step records.
#[derive(Debug, Clone)]
pub struct EnsembleConfig {
    pub spec: GuidanceSpec,
    pub grid: TimeGrid,
    pub paths: usize,
    pub seed: u64,
    pub threads: Option<usize>,
    pub record_paths: usize,
}

/// Summary of one path: endpoint data, log correction factor, diagnostics.
#[derive(Debug, Clone)]
pub struct PathSummary {
    pub path_id: u64,
    pub converged: bool,
    pub failure: Option<String>,
    pub endpoint_mean: Option<ManifoldPoint>,
    pub endpoint: Option<ProductPoint>,
    pub log_phi: f64,
    pub diagnostics: BridgeDiagnostics,
}

/// Result of an ensemble run: per-path summaries in path order and the
/// first `record_paths` full paths.
#[derive(Debug)]
pub struct EnsembleResult {
    pub summaries: Vec<PathSummary>,
    pub recorded: Vec<(u64, BridgePath)>,
    pub failures: usize,
}

impl EnsembleResult {
    pub fn converged(&self) -> impl Iterator<Item = &PathSummary> {
        self.summaries.iter().filter(|s| s.converged)
    }
}

/// Simulate one path of the configured scheme.
pub fn simulate_path(
    points: &[ManifoldPoint],
    cfg: &EnsembleConfig,
    noise: &NoiseSource,
    path_id: u64,
) -> Result<BridgePath> {
    match cfg.spec.scheme {
        SchemeKind::EuclideanDiagonal => {
            euclidean_diagonal_bridge(points, &cfg.spec, &cfg.grid, noise, path_id)
        }
        SchemeKind::Marchand => {
            let x = ProductPoint::new(points.to_vec())?;
            marchand_bridge(&x, &cfg.spec, &cfg.grid, noise, path_id)
        }
        SchemeKind::WeightedMean => {
            let x = ProductPoint::new(points.to_vec())?;
            weighted_mean_bridge(&x, &cfg.spec, &cfg.grid, noise, path_id)
        }
        SchemeKind::Fermi => {
            let x = ProductPoint::new(points.to_vec())?;
            fermi_bridge(&x, &cfg.spec, &cfg.grid, noise, path_id)
        }
    }
}

fn run_one(points: &[ManifoldPoint], cfg: &EnsembleConfig, noise: &NoiseSource, j: u64) -> (PathSummary, Option<BridgePath>) {
    match simulate_path(points, cfg, noise, j) {
        Ok(path) => {
            let summary = PathSummary {
                path_id: j,
                converged: true,
                failure: None,
                endpoint_mean: Some(path.endpoint_mean.clone()),
                endpoint: Some(path.endpoint().clone()),
                log_phi: path.log_phi,
                diagnostics: path.diagnostics,
            };
            let keep = (j as usize) < cfg.record_paths;
            (summary, keep.then_some(path))
        }
        Err(e) => (
            PathSummary {
                path_id: j,
                converged: false,
                failure: Some(e.to_string()),
                endpoint_mean: None,
                endpoint: None,
                log_phi: f64::NAN,
                diagnostics: BridgeDiagnostics::default(),
            },
            None,
        ),
    }
}

/// Run the ensemble. Failed paths are kept in the summaries with their
/// failure reason and excluded from downstream weighting.
pub fn sample_ensemble(points: &[ManifoldPoint], cfg: &EnsembleConfig) -> Result<EnsembleResult> {
    if cfg.paths == 0 {
        return Err(GeoError::InvalidInput("path count must be positive".into()));
    }
    if points.len() != cfg.spec.weights.len() {
        return Err(GeoError::InvalidInput(
            "one weight per starting point".into(),
        ));
    }
    let noise = NoiseSource::new(cfg.seed);
    let threads = cfg
        .threads
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
        .max(1);
    let results: Vec<(PathSummary, Option<BridgePath>)> = if threads == 1 {
        (0..cfg.paths as u64)
            .map(|j| run_one(points, cfg, &noise, j))
            .collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| GeoError::Io(format!("thread pool: {e}")))?;
        pool.install(|| {
            (0..cfg.paths as u64)
                .into_par_iter()
                .map(|j| run_one(points, cfg, &noise, j))
                .collect()
        })
    };

    let mut summaries = Vec::with_capacity(cfg.paths);
    let mut recorded = Vec::new();
    let mut failures = 0usize;
    for (summary, path) in results {
        if !summary.converged {
            failures += 1;
        }
        if let Some(p) = path {
            recorded.push((summary.path_id, p));
        }
        summaries.push(summary);
    }
    if failures == cfg.paths {
        return Err(GeoError::AllPathsFailed);
    }
    Ok(EnsembleResult {
        summaries,
        recorded,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_config(paths: usize, threads: Option<usize>) -> (Vec<ManifoldPoint>, EnsembleConfig) {
        let points = vec![
            ManifoldPoint::euclidean(&[0.0, 0.0]).unwrap(),
            ManifoldPoint::euclidean(&[1.0, 0.0]).unwrap(),
            ManifoldPoint::euclidean(&[0.0, 1.0]).unwrap(),
        ];
        let spec =
            GuidanceSpec::new(SchemeKind::EuclideanDiagonal, vec![1.0; 3], 1.0).unwrap();
        let grid = TimeGrid::new(1.0, 50).unwrap();
        (
            points,
            EnsembleConfig {
                spec,
                grid,
                paths,
                seed: 314,
                threads,
                record_paths: 2,
            },
        )
    }

    #[test]
    fn ensembles_are_thread_count_invariant() {
        let (points, mut cfg) = flat_config(64, Some(1));
        let serial = sample_ensemble(&points, &cfg).unwrap();
        cfg.threads = Some(8);
        let parallel = sample_ensemble(&points, &cfg).unwrap();
        for (a, b) in serial.summaries.iter().zip(&parallel.summaries) {
            assert_eq!(a.path_id, b.path_id);
            let pa = a.endpoint_mean.as_ref().unwrap().coords();
            let pb = b.endpoint_mean.as_ref().unwrap().coords();
            assert_eq!(pa.as_slice(), pb.as_slice(), "path {}", a.path_id);
            assert_eq!(a.log_phi.to_bits(), b.log_phi.to_bits());
        }
    }

    #[test]
    fn recording_cap_is_respected() {
        let (points, cfg) = flat_config(10, Some(2));
        let out = sample_ensemble(&points, &cfg).unwrap();
        assert_eq!(out.recorded.len(), 2);
        assert_eq!(out.summaries.len(), 10);
        assert_eq!(out.failures, 0);
    }
}
