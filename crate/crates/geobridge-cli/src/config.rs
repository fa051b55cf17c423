//! Flat key = value run configuration with section headers.
//!
//! ```text
//! [manifold]
//! kind = sphere2            # sphere2 | euclidean
//! dim = 2                   # euclidean coordinate dimension
//!
//! [data]
//! points = 0 0 1; 0.3 0 0.95
//! # file = points.csv       # one point per row instead of inline points
//! weights = 1 1
//!
//! [scheme]
//! kind = weighted-mean      # euclidean-diagonal | marchand | weighted-mean | fermi
//! horizon = 1.0
//! epsilon = 0.5
//! drift-cap = 1.0
//! sigma-scale = 1.0
//!
//! [grid]
//! steps = 500
//! # cutoff = 0.002          # defaults to one step
//!
//! [run]
//! paths = 1000
//! seed = 42
//! record-paths = 10
//!
//! [estimate]
//! estimator = frechet       # frechet | diffusion | both
//! frechet-step = 0.5
//! frechet-tol = 1e-9
//! frechet-max-iters = 1000
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use geobridge::bridges::SchemeKind;
use geobridge::{GeoError, Manifold, ManifoldPoint, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    Frechet,
    Diffusion,
    Both,
}

impl EstimatorKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "frechet" => Ok(Self::Frechet),
            "diffusion" => Ok(Self::Diffusion),
            "both" => Ok(Self::Both),
            other => Err(GeoError::InvalidInput(format!(
                "unknown estimator '{other}' (expected frechet, diffusion, or both)"
            ))),
        }
    }
}

/// Fully resolved run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub manifold: Manifold,
    pub points: Vec<ManifoldPoint>,
    pub weights: Vec<f64>,
    pub scheme: SchemeKind,
    pub horizon: f64,
    pub epsilon: Option<f64>,
    pub drift_cap: f64,
    pub sigma_scale: f64,
    pub steps: usize,
    pub cutoff: Option<f64>,
    pub paths: usize,
    pub seed: u64,
    pub record_paths: usize,
    pub estimator: EstimatorKind,
    pub frechet_step: f64,
    pub frechet_tol: f64,
    pub frechet_max_iters: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            manifold: Manifold::Sphere2,
            points: Vec::new(),
            weights: Vec::new(),
            scheme: SchemeKind::WeightedMean,
            horizon: 1.0,
            epsilon: None,
            drift_cap: 1.0,
            sigma_scale: 1.0,
            steps: 500,
            cutoff: None,
            paths: 1000,
            seed: 42,
            record_paths: 10,
            estimator: EstimatorKind::Frechet,
            frechet_step: 0.5,
            frechet_tol: 1e-9,
            frechet_max_iters: 1000,
        }
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.parse::<f64>()
        .map_err(|_| GeoError::InvalidInput(format!("{key}: cannot parse '{v}' as a number")))
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.parse::<usize>()
        .map_err(|_| GeoError::InvalidInput(format!("{key}: cannot parse '{v}' as a count")))
}

fn parse_point_row(manifold: Manifold, row: &str) -> Result<ManifoldPoint> {
    let coords: Vec<f64> = row
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| GeoError::InvalidInput(format!("bad coordinate '{t}'")))
        })
        .collect::<Result<_>>()?;
    match manifold {
        Manifold::Euclidean(d) => {
            if coords.len() != d {
                return Err(GeoError::InvalidInput(format!(
                    "point '{row}' has {} coordinates, expected {d}",
                    coords.len()
                )));
            }
            ManifoldPoint::euclidean(&coords)
        }
        Manifold::Sphere2 => ManifoldPoint::sphere_normalized(&coords),
    }
}

/// Parse the configuration text; `base_dir` resolves a relative data file.
pub fn parse_config(text: &str, base_dir: &Path) -> Result<RunConfig> {
    let mut sections: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
    let mut current = String::from("");
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') && line.ends_with(']') {
            current = line[1..line.len() - 1].trim().to_string();
            sections.entry(current.clone()).or_default();
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            GeoError::InvalidInput(format!("line {}: expected 'key = value'", lineno + 1))
        })?;
        sections
            .entry(current.clone())
            .or_default()
            .insert(key.trim().to_string(), value.trim().to_string());
    }

    let get = |sec: &str, key: &str| -> Option<String> {
        sections.get(sec).and_then(|m| m.get(key)).cloned()
    };

    let mut cfg = RunConfig::default();
    let kind = get("manifold", "kind").unwrap_or_else(|| "sphere2".into());
    cfg.manifold = match kind.as_str() {
        "sphere2" => Manifold::Sphere2,
        "euclidean" => {
            let d = parse_usize(
                "manifold.dim",
                &get("manifold", "dim").unwrap_or_else(|| "2".into()),
            )?;
            if d == 0 {
                return Err(GeoError::InvalidInput("manifold.dim must be >= 1".into()));
            }
            Manifold::Euclidean(d)
        }
        other => {
            return Err(GeoError::InvalidInput(format!(
                "manifold.kind '{other}' (expected sphere2 or euclidean)"
            )))
        }
    };

    let inline = get("data", "points");
    let file = get("data", "file");
    let rows: Vec<String> = match (inline, file) {
        (Some(_), Some(_)) => {
            return Err(GeoError::InvalidInput(
                "data: give either inline points or a file, not both".into(),
            ))
        }
        (Some(pts), None) => pts
            .split(';')
            .map(|r| r.trim().to_string())
            .filter(|r| !r.is_empty())
            .collect(),
        (None, Some(f)) => {
            let path = base_dir.join(&f);
            let body = std::fs::read_to_string(&path).map_err(|e| {
                GeoError::Io(format!("data.file {}: {e}", path.display()))
            })?;
            body.lines()
                .map(|r| r.trim().to_string())
                .filter(|r| !r.is_empty() && !r.starts_with('#'))
                .collect()
        }
        (None, None) => Vec::new(),
    };
    cfg.points = rows
        .iter()
        .map(|r| parse_point_row(cfg.manifold, r))
        .collect::<Result<_>>()?;
    if cfg.points.len() < 2 {
        return Err(GeoError::InvalidInput(
            "data: need at least two points".into(),
        ));
    }

    cfg.weights = match get("data", "weights") {
        Some(w) => w
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|t| parse_f64("data.weights", t))
            .collect::<Result<_>>()?,
        None => vec![1.0; cfg.points.len()],
    };
    if cfg.weights.len() != cfg.points.len() {
        return Err(GeoError::InvalidInput(format!(
            "data: {} weights for {} points",
            cfg.weights.len(),
            cfg.points.len()
        )));
    }

    if let Some(v) = get("scheme", "kind") {
        cfg.scheme = SchemeKind::parse(&v)?;
    }
    if let Some(v) = get("scheme", "horizon") {
        cfg.horizon = parse_f64("scheme.horizon", &v)?;
    }
    if let Some(v) = get("scheme", "epsilon") {
        cfg.epsilon = Some(parse_f64("scheme.epsilon", &v)?);
    }
    if let Some(v) = get("scheme", "drift-cap") {
        cfg.drift_cap = parse_f64("scheme.drift-cap", &v)?;
    }
    if let Some(v) = get("scheme", "sigma-scale") {
        cfg.sigma_scale = parse_f64("scheme.sigma-scale", &v)?;
    }
    if let Some(v) = get("grid", "steps") {
        cfg.steps = parse_usize("grid.steps", &v)?;
    }
    if let Some(v) = get("grid", "cutoff") {
        cfg.cutoff = Some(parse_f64("grid.cutoff", &v)?);
    }
    if let Some(v) = get("run", "paths") {
        cfg.paths = parse_usize("run.paths", &v)?;
    }
    if let Some(v) = get("run", "seed") {
        cfg.seed = v
            .parse::<u64>()
            .map_err(|_| GeoError::InvalidInput(format!("run.seed: bad value '{v}'")))?;
    }
    if let Some(v) = get("run", "record-paths") {
        cfg.record_paths = parse_usize("run.record-paths", &v)?;
    }
    if let Some(v) = get("estimate", "estimator") {
        cfg.estimator = EstimatorKind::parse(&v)?;
    }
    if let Some(v) = get("estimate", "frechet-step") {
        cfg.frechet_step = parse_f64("estimate.frechet-step", &v)?;
    }
    if let Some(v) = get("estimate", "frechet-tol") {
        cfg.frechet_tol = parse_f64("estimate.frechet-tol", &v)?;
    }
    if let Some(v) = get("estimate", "frechet-max-iters") {
        cfg.frechet_max_iters = parse_usize("estimate.frechet-max-iters", &v)?;
    }

    if cfg.paths == 0 {
        return Err(GeoError::InvalidInput("run.paths must be positive".into()));
    }
    if cfg.record_paths == 0 {
        cfg.record_paths = 1;
    }
    if cfg.steps < 2 {
        return Err(GeoError::InvalidInput("grid.steps must be >= 2".into()));
    }
    if !(cfg.horizon > 0.0) {
        return Err(GeoError::InvalidInput(
            "scheme.horizon must be positive".into(),
        ));
    }
    if cfg.scheme == SchemeKind::EuclideanDiagonal
        && !matches!(cfg.manifold, Manifold::Euclidean(_))
    {
        return Err(GeoError::InvalidInput(
            "scheme euclidean-diagonal requires a euclidean manifold".into(),
        ));
    }
    Ok(cfg)
}

/// Serialize a number with 17 significant digits (lossless f64 round trip).
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

impl RunConfig {
    /// Canonical text form: fully resolved values in a fixed order. This is
    /// the string embedded in outputs and fed to the hash.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        out.push_str("[manifold]\n");
        match self.manifold {
            Manifold::Sphere2 => out.push_str("kind = sphere2\n"),
            Manifold::Euclidean(d) => {
                out.push_str("kind = euclidean\n");
                out.push_str(&format!("dim = {d}\n"));
            }
        }
        out.push_str("[data]\n");
        let rows: Vec<String> = self
            .points
            .iter()
            .map(|p| {
                p.coords()
                    .iter()
                    .map(|c| fmt_f64(*c))
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect();
        out.push_str(&format!("points = {}\n", rows.join("; ")));
        out.push_str(&format!(
            "weights = {}\n",
            self.weights
                .iter()
                .map(|w| fmt_f64(*w))
                .collect::<Vec<_>>()
                .join(" ")
        ));
        out.push_str("[scheme]\n");
        out.push_str(&format!("kind = {}\n", self.scheme.name()));
        out.push_str(&format!("horizon = {}\n", fmt_f64(self.horizon)));
        if let Some(e) = self.epsilon {
            out.push_str(&format!("epsilon = {}\n", fmt_f64(e)));
        }
        out.push_str(&format!("drift-cap = {}\n", fmt_f64(self.drift_cap)));
        out.push_str(&format!("sigma-scale = {}\n", fmt_f64(self.sigma_scale)));
        out.push_str("[grid]\n");
        out.push_str(&format!("steps = {}\n", self.steps));
        if let Some(c) = self.cutoff {
            out.push_str(&format!("cutoff = {}\n", fmt_f64(c)));
        }
        out.push_str("[run]\n");
        out.push_str(&format!("paths = {}\n", self.paths));
        out.push_str(&format!("seed = {}\n", self.seed));
        out.push_str(&format!("record-paths = {}\n", self.record_paths));
        out
    }

    /// FNV-1a hash of the canonical text.
    pub fn hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.canonical().bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x1000_0000_01b3);
        }
        h
    }
}

/// The default configuration as a documented template.
pub fn defaults_text() -> String {
    let d = RunConfig::default();
    format!(
        "# geobridge run configuration (defaults)\n\
         [manifold]\n\
         kind = sphere2            # sphere2 | euclidean\n\
         dim = 2                   # euclidean coordinate dimension\n\n\
         [data]\n\
         points =                  # inline: x y z; x y z; ... (or use file = <csv>)\n\
         weights =                 # one positive weight per point (default: all 1)\n\n\
         [scheme]\n\
         kind = {}\n\
         horizon = {}\n\
         # epsilon = horizon / 2   # L-matrix activation window\n\
         drift-cap = {}\n\
         sigma-scale = {}\n\n\
         [grid]\n\
         steps = {}\n\
         # cutoff = horizon / steps\n\n\
         [run]\n\
         paths = {}\n\
         seed = {}\n\
         record-paths = {}\n\n\
         [estimate]\n\
         estimator = frechet       # frechet | diffusion | both\n\
         frechet-step = {}\n\
         frechet-tol = {}\n\
         frechet-max-iters = {}\n",
        d.scheme.name(),
        d.horizon,
        d.drift_cap,
        d.sigma_scale,
        d.steps,
        d.paths,
        d.seed,
        d.record_paths,
        d.frechet_step,
        d.frechet_tol,
        d.frechet_max_iters,
    )
}
