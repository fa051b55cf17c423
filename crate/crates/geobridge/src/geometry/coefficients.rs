//! Chart-local Ito coefficients of Brownian motion: metric tensor g, its
//! inverse, the diffusion matrix sigma = sqrt(g^{-1}) (symmetric matrix
//! square root), Christoffel symbols, and the drift b^k = -1/2 g^{ij} Gamma^k_ij.

use nalgebra::{DMatrix, DVector};

use crate::error::{GeoError, Result};
use crate::geometry::chart::{Chart, ChartKind};
use crate::geometry::manifold::Manifold;

/// Central difference step for the finite-difference Christoffel fallback.
pub const FD_STEP: f64 = 1e-5;
/// Eigenvalue floor applied when taking the matrix square root of g^{-1}.
pub const EIGENVALUE_FLOOR: f64 = 1e-12;

/// Chart-local coefficients at a point. `christoffel[k]` is the matrix
/// (Gamma^k_ij)_ij, symmetric in (i, j).
#[derive(Debug, Clone)]
pub struct LocalCoefficients {
    pub g: DMatrix<f64>,
    pub g_inv: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
    pub christoffel: Vec<DMatrix<f64>>,
    pub drift: DVector<f64>,
}

/// Metric tensor of `chart` at chart coordinates `x` (closed forms).
pub fn chart_metric(chart: &Chart, x: &DVector<f64>) -> Result<DMatrix<f64>> {
    let d = chart.dim();
    if x.len() != d {
        return Err(GeoError::InvalidInput(format!(
            "coordinates length {} does not match chart dimension {}",
            x.len(),
            d
        )));
    }
    let r = x.norm();
    if r >= chart.valid_radius() {
        return Err(GeoError::CoordinatesOutOfRange(format!(
            "|x| = {r} outside validity radius {}",
            chart.valid_radius()
        )));
    }
    match (chart.manifold(), chart.kind()) {
        (Manifold::Euclidean(_), _) => Ok(DMatrix::identity(d, d)),
        (Manifold::Sphere2, ChartKind::StereographicNorth)
        | (Manifold::Sphere2, ChartKind::StereographicSouth) => {
            // Conformal round metric 4/(1+|x|^2)^2 I.
            let lambda = 4.0 / (1.0 + r * r).powi(2);
            Ok(DMatrix::identity(2, 2) * lambda)
        }
        (Manifold::Sphere2, ChartKind::ExpNormal) => {
            // Radial direction carries eigenvalue 1, tangential sin^2(r)/r^2.
            if r < 1e-8 {
                return Ok(DMatrix::identity(2, 2));
            }
            let s = (r.sin() / r).powi(2);
            let mut g = DMatrix::identity(2, 2) * s;
            let scale = (1.0 - s) / (r * r);
            for i in 0..2 {
                for j in 0..2 {
                    g[(i, j)] += scale * x[i] * x[j];
                }
            }
            Ok(g)
        }
        (Manifold::Sphere2, ChartKind::Identity) => Err(GeoError::InvalidInput(
            "identity chart is not defined on the sphere".into(),
        )),
    }
}

/// Symmetric positive-definite matrix square root via eigendecomposition,
/// with eigenvalues floored at [`EIGENVALUE_FLOOR`].
pub fn spd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sym = nalgebra::SymmetricEigen::new(m.clone());
    let mut vals = sym.eigenvalues.clone();
    for v in vals.iter_mut() {
        if !v.is_finite() {
            return Err(GeoError::SingularMetric("non-finite eigenvalue".into()));
        }
        *v = v.max(EIGENVALUE_FLOOR).sqrt();
    }
    let q = sym.eigenvectors;
    Ok(&q * DMatrix::from_diagonal(&vals) * q.transpose())
}

fn invert_spd(g: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    g.clone()
        .try_inverse()
        .filter(|m| m.iter().all(|v| v.is_finite()))
        .ok_or_else(|| GeoError::SingularMetric(format!("{what} not invertible")))
}

/// Christoffel symbols of a conformal metric exp(2 phi) I in two dimensions:
/// Gamma^k_ij = delta_ki d_j phi + delta_kj d_i phi - delta_ij d_k phi,
/// with phi = log 2 - log(1 + |x|^2) for the stereographic sphere.
fn christoffel_stereographic(x: &DVector<f64>) -> Vec<DMatrix<f64>> {
    let denom = 1.0 + x.norm_squared();
    let dphi = [-2.0 * x[0] / denom, -2.0 * x[1] / denom];
    let mut out = vec![DMatrix::zeros(2, 2); 2];
    for k in 0..2 {
        for i in 0..2 {
            for j in 0..2 {
                let mut v = 0.0;
                if k == i {
                    v += dphi[j];
                }
                if k == j {
                    v += dphi[i];
                }
                if i == j {
                    v -= dphi[k];
                }
                out[k][(i, j)] = v;
            }
        }
    }
    out
}

/// Finite-difference Christoffel symbols from the metric alone:
/// Gamma^k_ij = 1/2 g^{kl} (d_i g_lj + d_j g_li - d_l g_ij).
pub fn christoffel_finite_difference(
    chart: &Chart,
    x: &DVector<f64>,
    h: f64,
) -> Result<Vec<DMatrix<f64>>> {
    let d = chart.dim();
    let g_inv = invert_spd(&chart_metric(chart, x)?, "metric")?;
    // dg[i] holds the partial derivative of g along coordinate i.
    let mut dg = Vec::with_capacity(d);
    for i in 0..d {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        let gp = chart_metric(chart, &xp)?;
        let gm = chart_metric(chart, &xm)?;
        dg.push((gp - gm) / (2.0 * h));
    }
    let mut out = vec![DMatrix::zeros(d, d); d];
    for k in 0..d {
        for i in 0..d {
            for j in 0..d {
                let mut sum = 0.0;
                for l in 0..d {
                    sum += g_inv[(k, l)] * (dg[i][(l, j)] + dg[j][(l, i)] - dg[l][(i, j)]);
                }
                out[k][(i, j)] = 0.5 * sum;
            }
        }
    }
    Ok(out)
}

/// Full coefficient set at `x`: closed-form Christoffels for flat and
/// stereographic charts, central finite differences otherwise.
pub fn local_coefficients(chart: &Chart, x: &DVector<f64>) -> Result<LocalCoefficients> {
    let d = chart.dim();
    let g = chart_metric(chart, x)?;
    let g_inv = invert_spd(&g, "metric")?;
    let sigma = spd_sqrt(&g_inv)?;
    let christoffel = match (chart.manifold(), chart.kind()) {
        (Manifold::Euclidean(_), _) => vec![DMatrix::zeros(d, d); d],
        (Manifold::Sphere2, ChartKind::StereographicNorth)
        | (Manifold::Sphere2, ChartKind::StereographicSouth) => christoffel_stereographic(x),
        _ => christoffel_finite_difference(chart, x, FD_STEP)?,
    };
    // b^k = -1/2 sum_ij g^{ij} Gamma^k_ij
    let mut drift = DVector::zeros(d);
    for k in 0..d {
        let mut sum = 0.0;
        for i in 0..d {
            for j in 0..d {
                sum += g_inv[(i, j)] * christoffel[k][(i, j)];
            }
        }
        drift[k] = -0.5 * sum;
    }
    Ok(LocalCoefficients {
        g,
        g_inv,
        sigma,
        christoffel,
        drift,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::manifold::ManifoldPoint;
    use approx::assert_relative_eq;

    #[test]
    fn euclidean_coefficients_are_trivial() {
        let chart = Chart::identity(3);
        let x = DVector::from_row_slice(&[0.4, -2.0, 7.0]);
        let c = local_coefficients(&chart, &x).unwrap();
        assert_relative_eq!((&c.g - DMatrix::identity(3, 3)).norm(), 0.0);
        assert_relative_eq!((&c.sigma - DMatrix::identity(3, 3)).norm(), 0.0);
        assert_relative_eq!(c.drift.norm(), 0.0);
        for k in 0..3 {
            assert_relative_eq!(c.christoffel[k].norm(), 0.0);
        }
    }

    #[test]
    fn stereographic_origin_metric_is_four() {
        let chart = Chart::stereographic_north();
        let c = local_coefficients(&chart, &DVector::zeros(2)).unwrap();
        assert_relative_eq!(c.g[(0, 0)], 4.0, epsilon = 1e-14);
        assert_relative_eq!(c.g[(1, 1)], 4.0, epsilon = 1e-14);
        assert_relative_eq!(c.g[(0, 1)], 0.0, epsilon = 1e-14);
        assert_relative_eq!(c.drift.norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn stereographic_christoffel_closed_form_value() {
        // Gamma^1_11 = -2 x_1 / (1 + |x|^2) = -1 at x = (1, 0).
        let chart = Chart::stereographic_north();
        let x = DVector::from_row_slice(&[1.0, 0.0]);
        let c = local_coefficients(&chart, &x).unwrap();
        assert_relative_eq!(c.christoffel[0][(0, 0)], -1.0, epsilon = 1e-12);
    }

    #[test]
    fn finite_difference_matches_stereographic_closed_form() {
        let chart = Chart::stereographic_north();
        for xy in [[0.0, 0.0], [1.0, 0.0], [0.3, -0.7], [2.0, 1.5]] {
            let x = DVector::from_row_slice(&xy);
            let closed = christoffel_stereographic(&x);
            let fd = christoffel_finite_difference(&chart, &x, FD_STEP).unwrap();
            for k in 0..2 {
                assert!(
                    (&closed[k] - &fd[k]).norm() < 1e-5,
                    "finite-difference mismatch at {xy:?}"
                );
            }
        }
    }

    #[test]
    fn sigma_squares_to_inverse_metric() {
        let chart = Chart::exp_normal(ManifoldPoint::sphere(&[0.0, 0.0, 1.0]).unwrap());
        let x = DVector::from_row_slice(&[0.8, -0.4]);
        let c = local_coefficients(&chart, &x).unwrap();
        assert!((&c.sigma * c.sigma.transpose() - &c.g_inv).norm() < 1e-12);
        // Christoffel symmetry in the lower indices.
        for k in 0..2 {
            assert!((c.christoffel[k][(0, 1)] - c.christoffel[k][(1, 0)]).abs() < 1e-8);
        }
    }

    #[test]
    fn exp_normal_origin_is_flat_to_first_order() {
        let chart = Chart::exp_normal(ManifoldPoint::sphere_normalized(&[1.0, 1.0, 1.0]).unwrap());
        let c = local_coefficients(&chart, &DVector::zeros(2)).unwrap();
        assert!((&c.g - DMatrix::identity(2, 2)).norm() < 1e-12);
        assert!(c.drift.norm() < 1e-6);
    }

    #[test]
    fn metric_errors_outside_radius() {
        let chart = Chart::stereographic_north();
        let x = DVector::from_row_slice(&[11.0, 0.0]);
        assert!(chart_metric(&chart, &x).is_err());
    }
}
