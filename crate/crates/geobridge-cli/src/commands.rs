//! Subcommand implementations: ensemble sampling with CSV/summary output,
//! mean estimation, invariant verification, and plot-data extraction.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use geobridge::bridges::{
    delyon_hu_log_correction_trace, marchand_log_correction_trace, BridgePath, GuidanceSpec,
    SchemeKind,
};
use geobridge::ensemble::{sample_ensemble, EnsembleConfig};
use geobridge::estimators::{
    diffusion_mean_sir, frechet_mean_full, FrechetConfig, FrechetInit, SirConfig,
};
use geobridge::geometry::{geodesic_distance, ManifoldPoint};
use geobridge::verify::{run_suite, Suite};
use geobridge::{GeoError, Result, TimeGrid};

use crate::config::{fmt_f64, EstimatorKind, RunConfig};

/// Worker-count override from the environment.
pub fn thread_override() -> Option<usize> {
    std::env::var("GEOBRIDGE_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|n| *n > 0)
}

fn build_spec(cfg: &RunConfig) -> Result<GuidanceSpec> {
    let mut spec = GuidanceSpec::new(cfg.scheme, cfg.weights.clone(), cfg.horizon)?
        .with_drift_cap(cfg.drift_cap)?
        .with_sigma_scale(cfg.sigma_scale)?;
    if let Some(e) = cfg.epsilon {
        spec = spec.with_epsilon(e)?;
    }
    Ok(spec)
}

fn build_grid(cfg: &RunConfig) -> Result<TimeGrid> {
    match cfg.cutoff {
        Some(c) => TimeGrid::with_cutoff(cfg.horizon, cfg.steps, c),
        None => TimeGrid::new(cfg.horizon, cfg.steps),
    }
}

fn file_header(cfg: &RunConfig) -> String {
    format!(
        "# config_hash = {:016x}\n# seed = {}\n",
        cfg.hash(),
        cfg.seed
    )
}

fn coords_csv(p: &ManifoldPoint) -> String {
    p.coords()
        .iter()
        .map(|c| fmt_f64(*c))
        .collect::<Vec<_>>()
        .join(",")
}

/// Ensemble average of per-path diagonal endpoints: arithmetic on flat
/// space, Fréchet on the sphere.
fn ensemble_mean(points: &[ManifoldPoint]) -> Result<ManifoldPoint> {
    let weights = vec![1.0; points.len()];
    frechet_mean_full(points, &weights, &FrechetConfig::default()).map(|r| r.point)
}

/// Running log correction factors of a recorded path, one per step.
fn correction_trace(path: &BridgePath, spec: &GuidanceSpec) -> Result<Vec<f64>> {
    match spec.scheme {
        SchemeKind::Marchand => marchand_log_correction_trace(path, spec, None),
        SchemeKind::WeightedMean => delyon_hu_log_correction_trace(path, spec),
        _ => Ok(vec![0.0; path.steps.len()]),
    }
}

/// `sample-bridge`: run the configured ensemble and write paths.csv plus
/// summary.txt into the output directory.
pub fn cmd_sample_bridge(cfg: &RunConfig, out_dir: &Path) -> Result<()> {
    let spec = build_spec(cfg)?;
    let grid = build_grid(cfg)?;
    let n = cfg.points.len();
    let ens = EnsembleConfig {
        spec: spec.clone(),
        grid,
        paths: cfg.paths,
        seed: cfg.seed,
        threads: thread_override(),
        record_paths: cfg.record_paths,
    };
    let result = sample_ensemble(&cfg.points, &ens)?;

    fs::create_dir_all(out_dir).map_err(|e| GeoError::Io(format!("{}: {e}", out_dir.display())))?;

    // paths.csv: full traces for recorded paths (components plus a
    // diagonal-mean row with component_id = n), terminal rows for the rest.
    let coord_cols: Vec<String> = (0..cfg.manifold.ambient_dim())
        .map(|i| format!("x{i}"))
        .collect();
    let mut csv = file_header(cfg);
    let _ = writeln!(csv, "path_id,step,t,component_id,{},log_phi", coord_cols.join(","));
    for (path_id, path) in &result.recorded {
        let trace = correction_trace(path, &spec)?;
        for (k, step) in path.steps.iter().enumerate() {
            for (i, comp) in step.intrinsic.components().iter().enumerate() {
                let _ = writeln!(
                    csv,
                    "{path_id},{k},{},{i},{},{}",
                    fmt_f64(step.time),
                    coords_csv(comp),
                    fmt_f64(trace[k])
                );
            }
            let mean =
                geobridge::bridges::chart_mean_point(&step.chart, &step.y, n, &cfg.weights)?;
            let _ = writeln!(
                csv,
                "{path_id},{k},{},{n},{},{}",
                fmt_f64(step.time),
                coords_csv(&mean),
                fmt_f64(trace[k])
            );
        }
    }
    let terminal_step = grid.guided_steps();
    let terminal_time = grid.time(terminal_step);
    for s in result.summaries.iter().filter(|s| s.converged) {
        if (s.path_id as usize) < cfg.record_paths {
            continue;
        }
        let endpoint = s.endpoint.as_ref().expect("converged path has an endpoint");
        for (i, comp) in endpoint.components().iter().enumerate() {
            let _ = writeln!(
                csv,
                "{},{terminal_step},{},{i},{},{}",
                s.path_id,
                fmt_f64(terminal_time),
                coords_csv(comp),
                fmt_f64(s.log_phi)
            );
        }
        let mean = s.endpoint_mean.as_ref().unwrap();
        let _ = writeln!(
            csv,
            "{},{terminal_step},{},{n},{},{}",
            s.path_id,
            fmt_f64(terminal_time),
            coords_csv(mean),
            fmt_f64(s.log_phi)
        );
    }
    fs::write(out_dir.join("paths.csv"), csv)
        .map_err(|e| GeoError::Io(format!("paths.csv: {e}")))?;

    // summary.txt
    let endpoint_means: Vec<ManifoldPoint> = result
        .converged()
        .map(|s| s.endpoint_mean.clone().unwrap())
        .collect();
    let center = ensemble_mean(&endpoint_means)?;
    let mut spread_mean = 0.0;
    let mut spread_max = 0.0f64;
    for p in &endpoint_means {
        let d = geodesic_distance(p, &center)?;
        spread_mean += d;
        spread_max = spread_max.max(d);
    }
    spread_mean /= endpoint_means.len() as f64;

    let mut summary = file_header(cfg);
    let _ = writeln!(summary, "scheme = {}", spec.scheme.name());
    let _ = writeln!(summary, "paths_total = {}", cfg.paths);
    let _ = writeln!(summary, "paths_failed = {}", result.failures);
    let _ = writeln!(
        summary,
        "paths_converged = {}",
        cfg.paths - result.failures
    );
    let _ = writeln!(summary, "terminal_time = {}", fmt_f64(terminal_time));
    let _ = writeln!(
        summary,
        "endpoint_mean = {}",
        coords_csv(&center).replace(',', " ")
    );
    let _ = writeln!(summary, "endpoint_spread_mean = {}", fmt_f64(spread_mean));
    let _ = writeln!(summary, "endpoint_spread_max = {}", fmt_f64(spread_max));
    if spec.scheme.has_correction() {
        let logs: Vec<f64> = result.converged().map(|s| s.log_phi).collect();
        let probs = geobridge::estimators::normalize_log_weights(&logs)?;
        let ess = 1.0 / probs.iter().map(|p| p * p).sum::<f64>();
        let _ = writeln!(summary, "ess = {}", fmt_f64(ess));
        let mean = logs.iter().sum::<f64>() / logs.len() as f64;
        let min = logs.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let _ = writeln!(summary, "log_phi_min = {}", fmt_f64(min));
        let _ = writeln!(summary, "log_phi_mean = {}", fmt_f64(mean));
        let _ = writeln!(summary, "log_phi_max = {}", fmt_f64(max));
    }
    let _ = writeln!(summary, "# --- config echo ---");
    summary.push_str(&cfg.canonical());
    fs::write(out_dir.join("summary.txt"), summary)
        .map_err(|e| GeoError::Io(format!("summary.txt: {e}")))?;
    Ok(())
}

/// `estimate-mean`: Fréchet and/or diffusion mean, written to estimate.txt.
pub fn cmd_estimate_mean(
    cfg: &RunConfig,
    estimator: Option<EstimatorKind>,
    out_dir: &Path,
) -> Result<()> {
    let which = estimator.unwrap_or(cfg.estimator);
    fs::create_dir_all(out_dir).map_err(|e| GeoError::Io(format!("{}: {e}", out_dir.display())))?;
    let mut text = file_header(cfg);
    let fcfg = FrechetConfig {
        step_size: cfg.frechet_step,
        max_iters: cfg.frechet_max_iters,
        tol: cfg.frechet_tol,
        init: FrechetInit::ComponentMean,
    };

    let mut frechet_point = None;
    if matches!(which, EstimatorKind::Frechet | EstimatorKind::Both) {
        let run = frechet_mean_full(&cfg.points, &cfg.weights, &fcfg)?;
        let _ = writeln!(
            text,
            "frechet_point = {}",
            coords_csv(&run.point).replace(',', " ")
        );
        let _ = writeln!(text, "frechet_iterations = {}", run.iterations);
        let _ = writeln!(text, "frechet_grad_norm = {}", fmt_f64(run.grad_norm));
        frechet_point = Some(run.point);
    }
    if matches!(which, EstimatorKind::Diffusion | EstimatorKind::Both) {
        let scheme = if cfg.scheme.has_correction() {
            cfg.scheme
        } else {
            SchemeKind::WeightedMean
        };
        let sir = SirConfig {
            paths: cfg.paths,
            steps: cfg.steps,
            seed: cfg.seed,
            scheme,
            threads: thread_override(),
        };
        let (point, diag) = diffusion_mean_sir(&cfg.points, &cfg.weights, cfg.horizon, &sir)?;
        let _ = writeln!(
            text,
            "diffusion_point = {}",
            coords_csv(&point).replace(',', " ")
        );
        let _ = writeln!(text, "diffusion_scheme = {}", scheme.name());
        let _ = writeln!(text, "diffusion_ess = {}", fmt_f64(diag.ess));
        let _ = writeln!(text, "diffusion_failures = {}", diag.failures);
        let _ = writeln!(text, "diffusion_resampled_index = {}", diag.resampled_index);
        let _ = writeln!(text, "log_phi_min = {}", fmt_f64(diag.log_phi_min));
        let _ = writeln!(text, "log_phi_mean = {}", fmt_f64(diag.log_phi_mean));
        let _ = writeln!(text, "log_phi_max = {}", fmt_f64(diag.log_phi_max));
        if let Some(wm) = &diag.weighted_mean {
            let _ = writeln!(
                text,
                "diffusion_ensemble_mean = {}",
                coords_csv(wm).replace(',', " ")
            );
        }
        if let Some(fp) = &frechet_point {
            let _ = writeln!(
                text,
                "frechet_diffusion_distance = {}",
                fmt_f64(geodesic_distance(fp, &point)?)
            );
        }
    }
    let _ = writeln!(text, "# --- config echo ---");
    text.push_str(&cfg.canonical());
    fs::write(out_dir.join("estimate.txt"), text)
        .map_err(|e| GeoError::Io(format!("estimate.txt: {e}")))?;
    Ok(())
}

/// `verify`: run an invariant suite; returns false when any check fails.
pub fn cmd_verify(suite: &str, seed: u64) -> Result<bool> {
    let suite = Suite::parse(suite)?;
    let checks = run_suite(suite, seed)?;
    let mut ok = true;
    for c in &checks {
        println!("{}", c.line());
        ok &= c.passed;
    }
    println!(
        "{}: {} of {} checks passed (seed {seed})",
        if ok { "OK" } else { "FAILURE" },
        checks.iter().filter(|c| c.passed).count(),
        checks.len()
    );
    Ok(ok)
}

// ------------------------------------------------------------- plot-data

#[derive(Debug, Clone)]
struct PathRow {
    path_id: u64,
    step: usize,
    t: f64,
    component_id: usize,
    coords: Vec<f64>,
    #[allow(dead_code)]
    log_phi: f64,
}

fn read_paths_csv(path: &Path) -> Result<(Vec<PathRow>, usize)> {
    // Malformed plot input is a usage-class problem (exit code 2).
    let body = fs::read_to_string(path)
        .map_err(|e| GeoError::InvalidInput(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    let mut coord_cols = 0usize;
    let mut header_seen = false;
    for line in body.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !header_seen {
            header_seen = true;
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() < 6 || cols[0] != "path_id" {
                return Err(GeoError::InvalidInput("unrecognized paths.csv header".into()));
            }
            coord_cols = cols.len() - 5;
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != coord_cols + 5 {
            return Err(GeoError::InvalidInput(format!(
                "row has {} fields, expected {}",
                parts.len(),
                coord_cols + 5
            )));
        }
        let parse_err = |what: &str| GeoError::InvalidInput(format!("bad {what} in row '{line}'"));
        rows.push(PathRow {
            path_id: parts[0].parse().map_err(|_| parse_err("path_id"))?,
            step: parts[1].parse().map_err(|_| parse_err("step"))?,
            t: parts[2].parse().map_err(|_| parse_err("t"))?,
            component_id: parts[3].parse().map_err(|_| parse_err("component_id"))?,
            coords: parts[4..4 + coord_cols]
                .iter()
                .map(|v| v.parse::<f64>().map_err(|_| parse_err("coordinate")))
                .collect::<Result<_>>()?,
            log_phi: parts[4 + coord_cols]
                .parse()
                .map_err(|_| parse_err("log_phi"))?,
        });
    }
    if rows.is_empty() {
        return Err(GeoError::InvalidInput("no data rows".into()));
    }
    Ok((rows, coord_cols))
}

fn row_point(row: &PathRow, coord_cols: usize) -> Result<ManifoldPoint> {
    if coord_cols == 3 {
        // Unit rows are sphere points; anything else is flat 3-space.
        let norm: f64 = row.coords.iter().map(|c| c * c).sum::<f64>().sqrt();
        if (norm - 1.0).abs() < 1e-6 {
            return ManifoldPoint::sphere_normalized(&row.coords);
        }
    }
    ManifoldPoint::euclidean(&row.coords)
}

/// `plot-data`: reduce a paths.csv into plot-ready CSV.
pub fn cmd_plot_data(
    kind: &str,
    input: &Path,
    out: Option<&Path>,
    path_id: u64,
    bins: usize,
) -> Result<()> {
    let (rows, coord_cols) = read_paths_csv(input)?;
    let n_components = rows
        .iter()
        .map(|r| r.component_id)
        .max()
        .expect("non-empty rows");
    let text = match kind {
        "endpoint-density" => {
            // Diagonal-mean rows at each path's terminal step, binned by
            // geodesic distance from the reference (the first recorded
            // diagonal mean).
            let reference = rows
                .iter()
                .find(|r| r.component_id == n_components && r.step == 0)
                .or_else(|| rows.iter().find(|r| r.component_id == n_components))
                .ok_or_else(|| GeoError::InvalidInput("no diagonal-mean rows".into()))?;
            let ref_point = row_point(reference, coord_cols)?;
            let mut terminal: std::collections::BTreeMap<u64, &PathRow> =
                std::collections::BTreeMap::new();
            for r in rows.iter().filter(|r| r.component_id == n_components) {
                terminal
                    .entry(r.path_id)
                    .and_modify(|cur| {
                        if r.step > cur.step {
                            *cur = r;
                        }
                    })
                    .or_insert(r);
            }
            let mut dists = Vec::with_capacity(terminal.len());
            for r in terminal.values() {
                dists.push(geodesic_distance(&row_point(r, coord_cols)?, &ref_point)?);
            }
            let max = dists.iter().cloned().fold(0.0f64, f64::max).max(1e-12);
            let width = max / bins as f64;
            let mut counts = vec![0usize; bins];
            for d in &dists {
                let b = ((d / width) as usize).min(bins - 1);
                counts[b] += 1;
            }
            let total = dists.len() as f64;
            let mut out = String::from("bin_lo,bin_hi,count,density\n");
            for (b, c) in counts.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{},{},{c},{}",
                    fmt_f64(b as f64 * width),
                    fmt_f64((b as f64 + 1.0) * width),
                    fmt_f64(*c as f64 / (total * width))
                );
            }
            out
        }
        "path-trace" => {
            let mut out = format!(
                "step,t,component_id,{}\n",
                (0..coord_cols)
                    .map(|i| format!("x{i}"))
                    .collect::<Vec<_>>()
                    .join(",")
            );
            let mut any = false;
            for r in rows.iter().filter(|r| r.path_id == path_id) {
                any = true;
                let _ = writeln!(
                    out,
                    "{},{},{},{}",
                    r.step,
                    fmt_f64(r.t),
                    r.component_id,
                    r.coords
                        .iter()
                        .map(|c| fmt_f64(*c))
                        .collect::<Vec<_>>()
                        .join(",")
                );
            }
            if !any {
                return Err(GeoError::InvalidInput(format!(
                    "path {path_id} not present in the file"
                )));
            }
            out
        }
        "mean-on-diagonal" => {
            let mut out = format!(
                "step,t,{}\n",
                (0..coord_cols)
                    .map(|i| format!("x{i}"))
                    .collect::<Vec<_>>()
                    .join(",")
            );
            let mut any = false;
            for r in rows
                .iter()
                .filter(|r| r.path_id == path_id && r.component_id == n_components)
            {
                any = true;
                let _ = writeln!(
                    out,
                    "{},{},{}",
                    r.step,
                    fmt_f64(r.t),
                    r.coords
                        .iter()
                        .map(|c| fmt_f64(*c))
                        .collect::<Vec<_>>()
                        .join(",")
                );
            }
            if !any {
                return Err(GeoError::InvalidInput(format!(
                    "no diagonal-mean rows for path {path_id}"
                )));
            }
            out
        }
        other => {
            return Err(GeoError::InvalidInput(format!(
                "unknown plot kind '{other}' (endpoint-density | path-trace | mean-on-diagonal)"
            )))
        }
    };
    match out {
        Some(p) => fs::write(p, text).map_err(|e| GeoError::Io(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
