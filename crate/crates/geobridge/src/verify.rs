//! Runtime invariant suites with pinned seeds. Each check reports the
//! measured value against its bound so the command-line `verify`
//! subcommand and the test harness share one source of truth.

use nalgebra::{DMatrix, DVector};

use crate::bridges::{
    euclidean_diagonal_bridge, marchand_bridge, weighted_mean_bridge, GuidanceSpec, SchemeKind,
};
use crate::error::{GeoError, Result};
use crate::estimators::{
    diffusion_mean_sir, frechet_mean, frechet_mean_full, transition_density_estimate,
    DensityConfig, FrechetConfig, SirConfig,
};
use crate::geometry::{
    christoffel_finite_difference, exp_map, geodesic_distance, local_coefficients, log_map, Chart,
    ManifoldPoint, TangentVector,
};
use crate::product::{
    build_l, closest_diagonal_point, project_diagonal, DiagonalConditioner, ProductPoint,
};
use crate::sampling::{channel, sample_vmf, NoiseSource};
use crate::sde::{simulate_brownian, simulate_brownian_with, BrownianChart, SwitchPolicy, TimeGrid};

/// Default master seed of the pinned suites.
pub const DEFAULT_SEED: u64 = 0x47e0_b21d;

/// How a measured value compares against its bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    AtMost,
    AtLeast,
}

/// One invariant check outcome.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: String,
    pub measured: f64,
    pub bound: f64,
    pub direction: Direction,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn at_most(name: &str, measured: f64, bound: f64, detail: String) -> Self {
        Self {
            name: name.into(),
            measured,
            bound,
            direction: Direction::AtMost,
            passed: measured.is_finite() && measured <= bound,
            detail,
        }
    }

    fn at_least(name: &str, measured: f64, bound: f64, detail: String) -> Self {
        Self {
            name: name.into(),
            measured,
            bound,
            direction: Direction::AtLeast,
            passed: measured.is_finite() && measured >= bound,
            detail,
        }
    }

    pub fn line(&self) -> String {
        let rel = match self.direction {
            Direction::AtMost => "<=",
            Direction::AtLeast => ">=",
        };
        format!(
            "{}: {} ({:.6e} {} {:.6e}){}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.measured,
            rel,
            self.bound,
            if self.detail.is_empty() {
                String::new()
            } else {
                format!(" [{}]", self.detail)
            }
        )
    }
}

/// Invariant suite selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Geometry,
    Conditioner,
    Brownian,
    Bridges,
    Estimators,
    All,
}

impl Suite {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "geometry" => Ok(Self::Geometry),
            "conditioner" => Ok(Self::Conditioner),
            "brownian" => Ok(Self::Brownian),
            "bridges" => Ok(Self::Bridges),
            "estimators" => Ok(Self::Estimators),
            "all" => Ok(Self::All),
            other => Err(GeoError::InvalidInput(format!("unknown suite '{other}'"))),
        }
    }
}

/// Run a suite at the given master seed.
pub fn run_suite(suite: Suite, seed: u64) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    match suite {
        Suite::Geometry => geometry_suite(seed, &mut out)?,
        Suite::Conditioner => conditioner_suite(seed, &mut out)?,
        Suite::Brownian => brownian_suite(seed, &mut out)?,
        Suite::Bridges => bridges_suite(seed, &mut out)?,
        Suite::Estimators => estimators_suite(seed, &mut out)?,
        Suite::All => {
            geometry_suite(seed, &mut out)?;
            conditioner_suite(seed, &mut out)?;
            brownian_suite(seed, &mut out)?;
            bridges_suite(seed, &mut out)?;
            estimators_suite(seed, &mut out)?;
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------- helpers

fn random_sphere_point(noise: &NoiseSource, i: u64) -> ManifoldPoint {
    let g = noise.normals(i, 100, 0, 3);
    ManifoldPoint::sphere_normalized(&[g[0], g[1], g[2]])
        .unwrap_or_else(|_| ManifoldPoint::sphere(&[0.0, 0.0, 1.0]).unwrap())
}

fn random_tangent(noise: &NoiseSource, p: &ManifoldPoint, i: u64, max_norm: f64) -> TangentVector {
    let g = noise.normals(i, 101, 0, 4);
    let raw = DVector::from_row_slice(&[g[0], g[1], g[2]]);
    let v = TangentVector::projected(p.clone(), raw).unwrap();
    let u = 0.5 * (g[3].tanh() + 1.0); // deterministic scale in (0, 1)
    let target = u * max_norm;
    let n = v.norm();
    if n < 1e-12 {
        return TangentVector::new(p.clone(), DVector::zeros(3)).unwrap();
    }
    TangentVector::new(p.clone(), v.vec() * (target / n)).unwrap()
}

/// Two-sample Kolmogorov-Smirnov distance.
pub fn ks_distance(a: &mut [f64], b: &mut [f64]) -> f64 {
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let (n, m) = (a.len(), b.len());
    let mut i = 0;
    let mut j = 0;
    let mut d = 0.0f64;
    while i < n && j < m {
        let x = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < n && a[i] <= x {
            i += 1;
        }
        while j < m && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    d
}

/// Critical two-sample Kolmogorov-Smirnov distance at the 1% level.
pub fn ks_critical_1pct(n: usize, m: usize) -> f64 {
    1.62762 * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}

/// Chi-square 99th percentile for 31 degrees of freedom.
pub const CHI2_99_DOF31: f64 = 52.191;

/// Nearest-rank percentile (q in [0, 1]) of an unsorted sample.
pub fn percentile(values: &mut [f64], q: f64) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if values.is_empty() {
        return f64::NAN;
    }
    let idx = (q * (values.len() as f64 - 1.0)).round() as usize;
    values[idx.min(values.len() - 1)]
}

fn sample_mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, var)
}

// ---------------------------------------------------------------- geometry

fn geometry_suite(seed: u64, out: &mut Vec<CheckResult>) -> Result<()> {
    let noise = NoiseSource::new(seed);

    // sigma sigma^T = g^{-1} over random charts and points.
    let mut worst = 0.0f64;
    for i in 0..1000u64 {
        let g = noise.normals(i, 102, 0, 3);
        let (chart, x) = match i % 3 {
            0 => (
                Chart::stereographic_north(),
                DVector::from_row_slice(&[2.0 * g[0], 2.0 * g[1]]),
            ),
            1 => (
                Chart::exp_normal(random_sphere_point(&noise, i)),
                DVector::from_row_slice(&[1.2 * g[0].tanh(), 1.2 * g[1].tanh()]),
            ),
            _ => (
                Chart::identity(3),
                DVector::from_row_slice(&[g[0], g[1], g[2]]),
            ),
        };
        let c = local_coefficients(&chart, &x)?;
        worst = worst.max((&c.sigma * c.sigma.transpose() - &c.g_inv).norm());
    }
    out.push(CheckResult::at_most(
        "geometry.sigma_squares_to_inverse_metric",
        worst,
        1e-8,
        "1000 random (chart, x)".into(),
    ));

    // exp/log round trip on the sphere.
    let mut worst = 0.0f64;
    for i in 0..1000u64 {
        let p = random_sphere_point(&noise, i);
        let v = random_tangent(&noise, &p, i, 0.9 * std::f64::consts::PI);
        let q = exp_map(&p, &v)?;
        let back = log_map(&p, &q)?;
        worst = worst.max((back.vec() - v.vec()).norm());
    }
    out.push(CheckResult::at_most(
        "geometry.exp_log_round_trip",
        worst,
        1e-8,
        "1000 random tangents, |v| <= 0.9 pi".into(),
    ));

    // Normal-chart radius equals geodesic distance.
    let mut worst = 0.0f64;
    for i in 0..1000u64 {
        let p = random_sphere_point(&noise, i);
        let v = random_tangent(&noise, &p, i + 5000, 0.9 * std::f64::consts::PI);
        let q = exp_map(&p, &v)?;
        let chart = Chart::exp_normal(p.clone());
        let x = chart.to_chart(&q)?;
        worst = worst.max((x.norm() - geodesic_distance(&p, &q)?).abs());
    }
    out.push(CheckResult::at_most(
        "geometry.normal_chart_radius_is_distance",
        worst,
        1e-8,
        "1000 random pairs within 0.9 pi".into(),
    ));

    // Distance axioms: symmetry exactly, triangle inequality with slack.
    let mut sym = 0.0f64;
    let mut tri: f64 = f64::NEG_INFINITY;
    for i in 0..1000u64 {
        let a = random_sphere_point(&noise, 3 * i);
        let b = random_sphere_point(&noise, 3 * i + 1);
        let c = random_sphere_point(&noise, 3 * i + 2);
        sym = sym.max((geodesic_distance(&a, &b)? - geodesic_distance(&b, &a)?).abs());
        tri = tri.max(geodesic_distance(&a, &c)? - geodesic_distance(&a, &b)? - geodesic_distance(&b, &c)?);
    }
    out.push(CheckResult::at_most(
        "geometry.distance_symmetry",
        sym,
        0.0,
        "exact".into(),
    ));
    out.push(CheckResult::at_most(
        "geometry.triangle_inequality_slack",
        tri,
        1e-12,
        "1000 random triples".into(),
    ));

    // Finite-difference Christoffels against the closed conformal form.
    let mut worst = 0.0f64;
    let chart = Chart::stereographic_north();
    for i in 0..200u64 {
        let g = noise.normals(i, 103, 0, 2);
        let x = DVector::from_row_slice(&[2.5 * g[0].tanh(), 2.5 * g[1].tanh()]);
        let fd = christoffel_finite_difference(&chart, &x, 1e-5)?;
        let closed = local_coefficients(&chart, &x)?.christoffel;
        for k in 0..2 {
            worst = worst.max((&fd[k] - &closed[k]).norm());
        }
    }
    out.push(CheckResult::at_most(
        "geometry.finite_difference_christoffel",
        worst,
        1e-5,
        "stereographic chart, 200 points".into(),
    ));
    Ok(())
}

// ------------------------------------------------------------- conditioner

fn conditioner_suite(seed: u64, out: &mut Vec<CheckResult>) -> Result<()> {
    let noise = NoiseSource::new(seed);

    // Kernel equivalence: |L v| equals the distance to the replicated
    // diagonal computed by explicit projection.
    let mut worst = 0.0f64;
    for trial in 0..1000u64 {
        let n = 2 + (trial % 5) as usize; // up to 6
        let d = 1 + (trial % 3) as usize; // up to 3
        let l = build_l(n, d)?;
        let g = noise.normals(trial, 104, 0, n * d + d);
        let v = if trial % 4 == 0 {
            // Construct an exact diagonal vector.
            let mut v = DVector::zeros(n * d);
            for i in 0..n {
                for s in 0..d {
                    v[i * d + s] = g[n * d + s];
                }
            }
            v
        } else {
            DVector::from_row_slice(&g[..n * d])
        };
        // Orthonormal diagonal basis: e_s replicated and scaled by 1/sqrt(n).
        let mut proj = DVector::zeros(n * d);
        for s in 0..d {
            let mut dot = 0.0;
            for i in 0..n {
                dot += v[i * d + s];
            }
            for i in 0..n {
                proj[i * d + s] = dot / n as f64;
            }
        }
        let dist = (&v - proj).norm();
        worst = worst.max(((&l * &v).norm() - dist).abs());
    }
    out.push(CheckResult::at_most(
        "conditioner.kernel_matches_diagonal_distance",
        worst,
        1e-9,
        "1000 random vectors, n <= 6, d <= 3".into(),
    ));

    // Pythagoras: projection plus complement recovers the squared norm.
    let mut worst = 0.0f64;
    for trial in 0..500u64 {
        let n = 3 + (trial % 3) as usize;
        let d = 1 + (trial % 2) as usize;
        let g = noise.normals(trial, 105, 0, n * d);
        let v = DVector::from_row_slice(&g);
        let mu = project_diagonal(&v, n, d, &vec![1.0; n])?;
        let mut rep = DVector::zeros(n * d);
        for i in 0..n {
            for s in 0..d {
                rep[i * d + s] = mu[s];
            }
        }
        let l = build_l(n, d)?;
        let pyth = (&v - &rep).norm_squared() + rep.norm_squared() - v.norm_squared();
        worst = worst.max(pyth.abs());
        // Idempotence of the weighted projection.
        let mu2 = project_diagonal(&rep, n, d, &vec![1.0; n])?;
        worst = worst.max((mu2 - mu).norm());
        let _ = (&l * &v).norm();
    }
    out.push(CheckResult::at_most(
        "conditioner.projection_pythagoras",
        worst,
        1e-10,
        "500 random states".into(),
    ));

    // L P = L over random SPD diffusion matrices.
    let mut worst = 0.0f64;
    for trial in 0..500u64 {
        let n = 2 + (trial % 3) as usize; // up to 4
        let d = 1 + (trial % 3) as usize; // up to 3
        let nd = n * d;
        let cond = DiagonalConditioner::equal_weights(n, d)?;
        let g = noise.normals(trial, 106, 0, nd * nd);
        let m = DMatrix::from_vec(nd, nd, g);
        let spd = &m * m.transpose() + DMatrix::identity(nd, nd) * 0.3;
        let sigma = crate::geometry::spd_sqrt(&spd)?;
        let terms = cond.oblique_terms(&sigma)?;
        worst = worst.max((cond.l() * &terms.p - cond.l()).norm());
    }
    out.push(CheckResult::at_most(
        "conditioner.oblique_projection_fixes_l",
        worst,
        1e-8,
        "500 random SPD diffusions, n <= 4, d <= 3".into(),
    ));

    // Flat closest point equals the weighted projection with equal weights.
    let mut worst = 0.0f64;
    for trial in 0..50u64 {
        let n = 2 + (trial % 4) as usize;
        let d = 2usize;
        let g = noise.normals(trial, 107, 0, n * d);
        let comps: Vec<ManifoldPoint> = (0..n)
            .map(|i| ManifoldPoint::euclidean(&[g[i * d], g[i * d + 1]]).unwrap())
            .collect();
        let x = ProductPoint::new(comps)?;
        let proj = closest_diagonal_point(&x)?;
        let flat = project_diagonal(
            &DVector::from_iterator(n * d, (0..n * d).map(|k| g[k])),
            n,
            d,
            &vec![1.0; n],
        )?;
        worst = worst.max((proj.point.coords() - flat).norm());
    }
    out.push(CheckResult::at_most(
        "conditioner.flat_closest_point_is_projection",
        worst,
        1e-7,
        "50 random flat products".into(),
    ));
    Ok(())
}

// ---------------------------------------------------------------- brownian

fn brownian_suite(seed: u64, out: &mut Vec<CheckResult>) -> Result<()> {
    // Flat coordinate variance matches the horizon.
    {
        let grid = TimeGrid::new(1.0, 20)?;
        let x0 = ManifoldPoint::euclidean(&[0.0, 0.0]).unwrap();
        let paths = 10_000u64;
        let mut endpoints = Vec::with_capacity(paths as usize);
        for j in 0..paths {
            let path = simulate_brownian(&x0, &grid, &NoiseSource::new(seed ^ 0xb0), j)?;
            endpoints.push(path.last().unwrap().coords()[0]);
        }
        let (_, var) = sample_mean_var(&endpoints);
        // Variance of the sample variance: 2 sigma^4 / (n - 1).
        let se = (2.0f64 / (paths as f64 - 1.0)).sqrt();
        out.push(CheckResult::at_most(
            "brownian.flat_variance_matches_horizon",
            (var - 1.0).abs(),
            5.0 * se,
            format!("sample variance {var:.4} over {paths} paths"),
        ));
    }

    // Short-time mean squared displacement on the sphere: E d^2 = 2 t.
    {
        let t = 0.01;
        let grid = TimeGrid::new(t, 20)?;
        let x0 = ManifoldPoint::sphere(&[0.0, 0.0, 1.0]).unwrap();
        let paths = 10_000u64;
        let mut total = 0.0;
        for j in 0..paths {
            let path = simulate_brownian(&x0, &grid, &NoiseSource::new(seed ^ 0xb1), j)?;
            total += geodesic_distance(&x0, path.last().unwrap())?.powi(2);
        }
        let mean = total / paths as f64;
        out.push(CheckResult::at_most(
            "brownian.sphere_short_time_displacement",
            (mean / (2.0 * t) - 1.0).abs(),
            0.10,
            format!("E[d^2]/(2t) = {:.4}", mean / (2.0 * t)),
        ));
    }

    // Long-run law on the sphere is uniform: chi-square over 32 equal-area
    // bands in the third coordinate.
    {
        let grid = TimeGrid::new(50.0, 1000)?;
        let x0 = ManifoldPoint::sphere(&[0.0, 0.0, 1.0]).unwrap();
        let paths = 10_000u64;
        let mut counts = [0usize; 32];
        for j in 0..paths {
            let path = simulate_brownian(&x0, &grid, &NoiseSource::new(seed ^ 0xb2), j)?;
            let z = path.last().unwrap().coords()[2].clamp(-1.0, 1.0);
            let bin = (((z + 1.0) / 2.0) * 32.0).floor().min(31.0) as usize;
            counts[bin] += 1;
        }
        let expected = paths as f64 / 32.0;
        let chi2: f64 = counts
            .iter()
            .map(|c| {
                let diff = *c as f64 - expected;
                diff * diff / expected
            })
            .sum();
        out.push(CheckResult::at_most(
            "brownian.sphere_long_run_uniformity_chi2",
            chi2,
            CHI2_99_DOF31,
            "32 equal-area bands, 1e4 paths".into(),
        ));
    }

    // Chart invariance: per-step normal-chart re-centering against a fixed
    // stereographic chart, compared by the law of the displacement.
    {
        let t = 0.5;
        let grid = TimeGrid::new(t, 100)?;
        let x0 = ManifoldPoint::sphere(&[0.0, 0.0, -1.0]).unwrap();
        let paths = 10_000u64;
        let mut recentered = Vec::with_capacity(paths as usize);
        let mut fixed = Vec::with_capacity(paths as usize);
        let mut dropped = 0usize;
        let src_a = NoiseSource::new(seed ^ 0xb3);
        let src_b = NoiseSource::new(seed ^ 0xb4);
        for j in 0..paths {
            let a = simulate_brownian_with(
                &x0,
                &grid,
                &src_a,
                j,
                BrownianChart::Recenter(SwitchPolicy::EveryStep),
            )?;
            recentered.push(geodesic_distance(&x0, a.last().unwrap())?);
            // Rare fixed-chart paths wander past the validity radius near
            // the projection pole; they are dropped and counted.
            match simulate_brownian_with(&x0, &grid, &src_b, j, BrownianChart::FixedStereographicNorth)
            {
                Ok(b) => fixed.push(geodesic_distance(&x0, b.last().unwrap())?),
                Err(_) => dropped += 1,
            }
        }
        let d = ks_distance(&mut recentered, &mut fixed);
        out.push(CheckResult::at_most(
            "brownian.chart_invariance_ks",
            d,
            ks_critical_1pct(recentered.len(), fixed.len()),
            format!("re-centered vs fixed stereographic, t = 0.5, {dropped} dropped"),
        ));
    }

    // Determinism across runs and thread counts.
    {
        let grid = TimeGrid::new(0.3, 30)?;
        let x0 = ManifoldPoint::sphere(&[0.0, 0.0, 1.0]).unwrap();
        let one = simulate_brownian(&x0, &grid, &NoiseSource::new(seed), 5)?;
        let two = simulate_brownian(&x0, &grid, &NoiseSource::new(seed), 5)?;
        let mut delta = 0.0f64;
        for (a, b) in one.iter().zip(&two) {
            for s in 0..3 {
                if a.coords()[s].to_bits() != b.coords()[s].to_bits() {
                    delta = 1.0;
                }
            }
        }
        out.push(CheckResult::at_most(
            "brownian.bitwise_determinism",
            delta,
            0.0,
            "replayed path identical".into(),
        ));
    }

    // Product generator additivity through a weak one-step estimate with an
    // exact-zero-mean control variate on the first-order term.
    {
        let h: f64 = 1e-3;
        let paths = 100_000u64;
        let x1 = ManifoldPoint::sphere(&[1.0, 0.0, 0.0]).unwrap();
        let x2 = ManifoldPoint::sphere(&[0.0, 1.0, 0.0]).unwrap();
        let a1 = [0.6, 0.0, 0.8];
        let a2 = [0.0, 0.6, 0.8];
        let f1 = |p: &ManifoldPoint| 1.0 + 0.5 * (p.coords()[0] * a1[0] + p.coords()[1] * a1[1] + p.coords()[2] * a1[2]);
        let f2 = |p: &ManifoldPoint| 1.0 + 0.5 * (p.coords()[0] * a2[0] + p.coords()[1] * a2[1] + p.coords()[2] * a2[2]);

        // Finite-difference Laplacians in normal coordinates.
        let lap = |f: &dyn Fn(&ManifoldPoint) -> f64, p: &ManifoldPoint| -> f64 {
            let chart = Chart::exp_normal(p.clone());
            let hh = 1e-4;
            let mut sum = 0.0;
            for s in 0..2 {
                let mut xp = DVector::zeros(2);
                xp[s] = hh;
                let mut xm = DVector::zeros(2);
                xm[s] = -hh;
                let fp = f(&chart.from_chart(&xp).unwrap());
                let fm = f(&chart.from_chart(&xm).unwrap());
                sum += (fp + fm - 2.0 * f(p)) / (hh * hh);
            }
            sum
        };
        let oracle = 0.5 * (lap(&f1, &x1) * f2(&x2) + f1(&x1) * lap(&f2, &x2));

        // Tangent gradients for the control variate.
        let grad = |f: &dyn Fn(&ManifoldPoint) -> f64, p: &ManifoldPoint| -> DVector<f64> {
            let chart = Chart::exp_normal(p.clone());
            let hh = 1e-5;
            let mut g = DVector::zeros(2);
            for s in 0..2 {
                let mut xp = DVector::zeros(2);
                xp[s] = hh;
                let mut xm = DVector::zeros(2);
                xm[s] = -hh;
                g[s] = (f(&chart.from_chart(&xp).unwrap()) - f(&chart.from_chart(&xm).unwrap()))
                    / (2.0 * hh);
            }
            g
        };
        let g1 = grad(&f1, &x1);
        let g2 = grad(&f2, &x2);
        let f0 = f1(&x1) * f2(&x2);
        let chart1 = Chart::exp_normal(x1.clone());
        let chart2 = Chart::exp_normal(x2.clone());
        let src = NoiseSource::new(seed ^ 0xb5);
        let mut acc = 0.0;
        for j in 0..paths {
            let z = src.normals(j, channel::BROWNIAN, 0, 4);
            // One product Euler step from the chart origins: displacement
            // sqrt(h) z exactly (coefficients at the origin are trivial).
            let d1 = DVector::from_row_slice(&[h.sqrt() * z[0], h.sqrt() * z[1]]);
            let d2 = DVector::from_row_slice(&[h.sqrt() * z[2], h.sqrt() * z[3]]);
            let p1 = chart1.from_chart(&d1)?;
            let p2 = chart2.from_chart(&d2)?;
            let increment = f1(&p1) * f2(&p2) - f0;
            // Control: the first-order term has exact zero mean.
            let control = f2(&x2) * (g1.dot(&d1)) + f1(&x1) * (g2.dot(&d2));
            acc += (increment - control) / h;
        }
        let estimate = acc / paths as f64;
        out.push(CheckResult::at_most(
            "brownian.product_generator_additivity",
            (estimate / oracle - 1.0).abs(),
            0.05,
            format!("generator {estimate:.5} vs sum of halves {oracle:.5}"),
        ));
    }
    Ok(())
}

// ----------------------------------------------------------------- bridges

fn bridges_suite(seed: u64, out: &mut Vec<CheckResult>) -> Result<()> {
    // Diagonal-average martingale on the flat pinned system.
    {
        let points = [
            ManifoldPoint::euclidean(&[0.0]).unwrap(),
            ManifoldPoint::euclidean(&[1.0]).unwrap(),
            ManifoldPoint::euclidean(&[2.0]).unwrap(),
        ];
        let spec = GuidanceSpec::new(SchemeKind::EuclideanDiagonal, vec![1.0; 3], 1.0)?;
        let grid = TimeGrid::new(1.0, 100)?;
        let noise = NoiseSource::new(seed ^ 0xc0);
        let paths = 10_000u64;
        let mut means = Vec::with_capacity(paths as usize);
        for j in 0..paths {
            let p = euclidean_diagonal_bridge(&points, &spec, &grid, &noise, j)?;
            means.push(p.endpoint_mean.coords()[0]);
        }
        let (mean, var) = sample_mean_var(&means);
        let se = (var / paths as f64).sqrt();
        out.push(CheckResult::at_most(
            "bridges.flat_average_martingale",
            (mean - 1.0).abs(),
            5.0 * se,
            format!("endpoint average {mean:.5} vs start average 1"),
        ));
    }

    // Flat midpoint law for the L-matrix scheme: the component average is
    // an unguided Brownian average, N(1/2, (T - cutoff) sigma^2 / n).
    {
        let x = ProductPoint::new(vec![
            ManifoldPoint::euclidean(&[0.0]).unwrap(),
            ManifoldPoint::euclidean(&[1.0]).unwrap(),
        ])?;
        let spec = GuidanceSpec::new(SchemeKind::Marchand, vec![1.0; 2], 1.0)?.with_epsilon(1.0)?;
        let grid = TimeGrid::new(1.0, 200)?;
        let noise = NoiseSource::new(seed ^ 0xc1);
        let paths = 10_000u64;
        let mut mids = Vec::with_capacity(paths as usize);
        for j in 0..paths {
            let p = marchand_bridge(&x, &spec, &grid, &noise, j)?;
            mids.push(p.endpoint_mean.coords()[0]);
        }
        let (mean, var) = sample_mean_var(&mids);
        let expect_var = (1.0 - grid.cutoff()) / 2.0;
        let se_mean = (expect_var / paths as f64).sqrt();
        let se_var = expect_var * (2.0f64 / (paths as f64 - 1.0)).sqrt();
        out.push(CheckResult::at_most(
            "bridges.l_matrix_flat_midpoint_mean",
            (mean - 0.5).abs(),
            5.0 * se_mean,
            format!("midpoint mean {mean:.5}"),
        ));
        out.push(CheckResult::at_most(
            "bridges.l_matrix_flat_midpoint_variance",
            (var - expect_var).abs(),
            5.0 * se_var,
            format!("midpoint variance {var:.5} vs {expect_var:.5}"),
        ));
    }

    // Scheme equivalence on flat space: the pinned system and the
    // weighted-mean scheme share their endpoint law.
    {
        let points = [
            ManifoldPoint::euclidean(&[0.0]).unwrap(),
            ManifoldPoint::euclidean(&[1.0]).unwrap(),
        ];
        let x = ProductPoint::new(points.to_vec())?;
        let spec_e = GuidanceSpec::new(SchemeKind::EuclideanDiagonal, vec![1.0; 2], 1.0)?;
        let spec_w = GuidanceSpec::new(SchemeKind::WeightedMean, vec![1.0; 2], 1.0)?;
        let grid = TimeGrid::new(1.0, 200)?;
        let paths = 10_000u64;
        let src_a = NoiseSource::new(seed ^ 0xc2);
        let src_b = NoiseSource::new(seed ^ 0xc3);
        let mut a = Vec::with_capacity(paths as usize);
        let mut b = Vec::with_capacity(paths as usize);
        for j in 0..paths {
            a.push(
                euclidean_diagonal_bridge(&points, &spec_e, &grid, &src_a, j)?
                    .endpoint_mean
                    .coords()[0],
            );
            b.push(
                weighted_mean_bridge(&x, &spec_w, &grid, &src_b, j)?
                    .endpoint_mean
                    .coords()[0],
            );
        }
        let d = ks_distance(&mut a, &mut b);
        out.push(CheckResult::at_most(
            "bridges.flat_scheme_equivalence_ks",
            d,
            ks_critical_1pct(paths as usize, paths as usize),
            "pinned system vs weighted-mean, equal weights".into(),
        ));
    }

    // Correction degeneracy: flat unit diffusion gives log phi = 0 exactly.
    {
        let x = ProductPoint::new(vec![
            ManifoldPoint::euclidean(&[0.0, 0.0]).unwrap(),
            ManifoldPoint::euclidean(&[1.0, 1.0]).unwrap(),
        ])?;
        let spec = GuidanceSpec::new(SchemeKind::WeightedMean, vec![1.0; 2], 1.0)?;
        let grid = TimeGrid::new(1.0, 100)?;
        let noise = NoiseSource::new(seed ^ 0xc4);
        let mut worst = 0.0f64;
        for j in 0..100 {
            let p = weighted_mean_bridge(&x, &spec, &grid, &noise, j)?;
            worst = worst.max(p.log_phi.abs());
        }
        out.push(CheckResult::at_most(
            "bridges.flat_correction_degeneracy",
            worst,
            0.0,
            "bit-exact zero over 100 paths".into(),
        ));
    }

    // Convergence envelope and endpoint spread on the sphere (both guided
    // schemes), plus the loglog no-blow-up percentile comparison.
    for (name, scheme) in [
        ("l_matrix", SchemeKind::Marchand),
        ("weighted_mean", SchemeKind::WeightedMean),
    ] {
        let x = ProductPoint::new(vec![
            ManifoldPoint::sphere_normalized(&[0.25, 0.0, 1.0]).unwrap(),
            ManifoldPoint::sphere_normalized(&[0.0, 0.3, 1.0]).unwrap(),
            ManifoldPoint::sphere_normalized(&[-0.2, -0.15, 1.0]).unwrap(),
        ])?;
        let spec = GuidanceSpec::new(scheme, vec![1.0; 3], 1.0)?;
        let grid = TimeGrid::new(1.0, 1000)?;
        let noise = NoiseSource::new(seed ^ 0xc5);
        let paths = 100u64;
        let mut mid = Vec::new();
        let mut end = Vec::new();
        let mut max_ratio = 0.0f64;
        let mut spread = Vec::new();
        let mut sig = 0.0f64;
        let simulate = |j: u64| -> Result<crate::bridges::BridgePath> {
            match scheme {
                SchemeKind::Marchand => marchand_bridge(&x, &spec, &grid, &noise, j),
                _ => weighted_mean_bridge(&x, &spec, &grid, &noise, j),
            }
        };
        for j in 0..paths {
            let p = simulate(j)?;
            mid.push(p.diagnostics.envelope_ratio_mid);
            end.push(p.diagnostics.envelope_ratio_end);
            max_ratio = max_ratio.max(p.diagnostics.envelope_ratio_max);
            spread.push(p.diagnostics.spread_end);
            sig = sig.max(p.diagnostics.sigma_eig_max);
        }
        let p99_end = percentile(&mut end, 0.99);
        let p99_mid = percentile(&mut mid, 0.99).max(1e-12);
        out.push(CheckResult::at_most(
            &format!("bridges.{name}_loglog_envelope_no_blowup"),
            p99_end / p99_mid,
            10.0,
            format!("p99 ratio end/mid, max ratio {max_ratio:.3}"),
        ));
        let bound = 5.0 * (grid.cutoff() * 3.0).sqrt() * sig;
        let p99_spread = percentile(&mut spread, 0.99);
        out.push(CheckResult::at_most(
            &format!("bridges.{name}_terminal_spread"),
            p99_spread,
            bound,
            "p99 spread vs 5 sqrt(cutoff n) max sigma".into(),
        ));
    }
    Ok(())
}

// -------------------------------------------------------------- estimators

fn estimators_suite(seed: u64, out: &mut Vec<CheckResult>) -> Result<()> {
    // Fréchet fixed point and rescaling invariance on a sphere cluster.
    {
        let noise = NoiseSource::new(seed ^ 0xd0);
        let mu = ManifoldPoint::sphere(&[0.0, 0.0, 1.0]).unwrap();
        let pts = sample_vmf(&noise, &mu, 8.0, 12)?;
        let weights: Vec<f64> = (0..12).map(|i| 1.0 + (i % 3) as f64).collect();
        let cfg = FrechetConfig::default();
        let run = frechet_mean_full(&pts, &weights, &cfg)?;
        out.push(CheckResult::at_most(
            "estimators.frechet_fixed_point_gradient",
            run.grad_norm,
            cfg.tol,
            format!("{} iterations", run.iterations),
        ));
        let scaled: Vec<f64> = weights.iter().map(|w| 0.037 * w).collect();
        let rescaled = frechet_mean(&pts, &scaled, &cfg)?;
        out.push(CheckResult::at_most(
            "estimators.frechet_rescaling_invariance",
            geodesic_distance(&run.point, &rescaled)?,
            1e-9,
            "common factor 0.037".into(),
        ));
    }

    // Resampling probabilities: normalized, shift invariant.
    {
        let logs = [0.3, -2.0, 1.4, 0.0, -0.7];
        let p = crate::estimators::normalize_log_weights(&logs)?;
        let total: f64 = p.iter().sum();
        let shifted: Vec<f64> = logs.iter().map(|l| l - 55.5).collect();
        let p2 = crate::estimators::normalize_log_weights(&shifted)?;
        let drift = p
            .iter()
            .zip(&p2)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max)
            .max((total - 1.0).abs());
        out.push(CheckResult::at_most(
            "estimators.sir_probability_normalization",
            drift,
            1e-12,
            "sum to one, shift invariant".into(),
        ));
    }

    // Small-horizon agreement between the resampled diffusion mean and the
    // Fréchet mean on a sphere cluster, across pinned seeds.
    {
        let mut worst_draw = 0.0f64;
        let mut worst_mean = 0.0f64;
        let mut min_ess = f64::INFINITY;
        let horizon = 0.05;
        let n_pts = 10usize;
        for s in 0..5u64 {
            let noise = NoiseSource::new(seed ^ (0xd1 + s));
            let mu = ManifoldPoint::sphere(&[0.0, 0.0, 1.0]).unwrap();
            // Cluster inside a 0.3-radian cap.
            let pts: Vec<ManifoldPoint> = sample_vmf(&noise, &mu, 60.0, n_pts)?;
            let weights = vec![1.0; n_pts];
            let frechet = frechet_mean(&pts, &weights, &FrechetConfig::default())?;
            let cfg = SirConfig {
                paths: 2000,
                steps: 50,
                seed: seed ^ (0xe0 + s),
                scheme: SchemeKind::WeightedMean,
                threads: None,
            };
            let (est, diag) = diffusion_mean_sir(&pts, &weights, horizon, &cfg)?;
            worst_draw = worst_draw.max(geodesic_distance(&est, &frechet)?);
            worst_mean = worst_mean
                .max(geodesic_distance(diag.weighted_mean.as_ref().unwrap(), &frechet)?);
            min_ess = min_ess.min(diag.ess);
        }
        // The weighted ensemble mean carries the location; the resampled
        // draw scatters with sd sqrt(T / sum w) around it by construction.
        out.push(CheckResult::at_most(
            "estimators.small_horizon_mean_agreement",
            worst_mean,
            0.1,
            "weighted ensemble mean vs Frechet, 5 pinned seeds, T = 0.05, J = 2000".into(),
        ));
        out.push(CheckResult::at_most(
            "estimators.small_horizon_draw_envelope",
            worst_draw,
            3.5 * (horizon / n_pts as f64).sqrt(),
            "resampled draw within 3.5 sd of the diagonal law".into(),
        ));
        out.push(CheckResult::at_least(
            "estimators.sir_effective_sample_size",
            min_ess,
            20.0,
            "worst effective sample size of 2000 paths".into(),
        ));
    }

    // Density normalization on the line: trapezoid integral over a
    // six-sigma window.
    {
        let z = ManifoldPoint::euclidean(&[0.0]).unwrap();
        let t: f64 = 1.0;
        let cfg = DensityConfig {
            paths: 8,
            steps: 40,
            seed: seed ^ 0xd2,
            threads: Some(1),
        };
        let span = 6.0 * t.sqrt();
        let nodes = 241usize;
        let hstep = 2.0 * span / (nodes - 1) as f64;
        let mut integral = 0.0;
        for i in 0..nodes {
            let v = -span + i as f64 * hstep;
            let vp = ManifoldPoint::euclidean(&[v]).unwrap();
            let est = transition_density_estimate(&z, &vp, t, &cfg)?;
            let w = if i == 0 || i == nodes - 1 { 0.5 } else { 1.0 };
            integral += w * est.value * hstep;
        }
        out.push(CheckResult::at_most(
            "estimators.density_normalization",
            (integral - 1.0).abs(),
            0.03,
            format!("integral {integral:.5} over six sigma"),
        ));
    }
    Ok(())
}
