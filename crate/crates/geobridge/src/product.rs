//! Product-manifold state, the diagonal submanifold, and the conditioning
//! matrices directing guidance toward it.
//!
//! Product states are flattened component-major: the coordinates of
//! component 0 first, then component 1, and so on.

use nalgebra::{DMatrix, DVector};

use crate::error::{GeoError, Result};
use crate::estimators::{frechet_mean, FrechetConfig};
use crate::geometry::{geodesic_distance, Chart, Manifold, ManifoldPoint};

/// Condition-number bound past which L a L^T is treated as singular.
pub const CONDITION_BOUND: f64 = 1e12;

/// An ordered n-tuple of points on a common manifold.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductPoint {
    components: Vec<ManifoldPoint>,
}

impl ProductPoint {
    pub fn new(components: Vec<ManifoldPoint>) -> Result<Self> {
        if components.len() < 2 {
            return Err(GeoError::InvalidInput(
                "a product point needs at least two components".into(),
            ));
        }
        let m = components[0].manifold();
        for c in &components[1..] {
            if c.manifold() != m {
                return Err(GeoError::ManifoldMismatch(
                    "product components on different manifolds".into(),
                ));
            }
        }
        Ok(Self { components })
    }

    pub fn components(&self) -> &[ManifoldPoint] {
        &self.components
    }

    pub fn n(&self) -> usize {
        self.components.len()
    }

    pub fn manifold(&self) -> Manifold {
        self.components[0].manifold()
    }

    /// Largest pairwise geodesic distance between components.
    pub fn spread(&self) -> Result<f64> {
        let mut max = 0.0f64;
        for i in 0..self.n() {
            for j in (i + 1)..self.n() {
                max = max.max(geodesic_distance(&self.components[i], &self.components[j])?);
            }
        }
        Ok(max)
    }
}

/// Conditioning data for the diagonal of an n-fold product in a chart of
/// dimension d: the (n-1)d x nd matrix L with orthonormal rows, zero row
/// sums, and kernel exactly the replicated diagonal.
#[derive(Debug, Clone)]
pub struct DiagonalConditioner {
    n: usize,
    d: usize,
    l: DMatrix<f64>,
    weights: Vec<f64>,
}

/// Quantities of the oblique projection built from a diffusion matrix:
/// a = Sigma Sigma^T, A = (L a L^T)^{-1}, P = a L^T A L, beta = Sigma^T L^T A,
/// eta = sqrt(det A).
#[derive(Debug, Clone)]
pub struct ObliqueTerms {
    pub a: DMatrix<f64>,
    pub a_inv: DMatrix<f64>,
    pub big_a: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub beta: DMatrix<f64>,
    pub eta: f64,
}

/// Orthonormal basis of the complement of the diagonal in R^n (Helmert
/// rows), applied blockwise to each of the d coordinate slots.
///
/// Row k (1-based) of the n-space part is (1, .., 1, -k, 0, .., 0) / sqrt(k (k+1)).
pub fn build_l(n: usize, d: usize) -> Result<DMatrix<f64>> {
    if n < 2 || d < 1 {
        return Err(GeoError::InvalidInput(format!(
            "conditioner needs n >= 2 and d >= 1, got n = {n}, d = {d}"
        )));
    }
    let mut helmert = DMatrix::zeros(n - 1, n);
    for k in 1..n {
        let norm = (k as f64 * (k as f64 + 1.0)).sqrt();
        for j in 0..k {
            helmert[(k - 1, j)] = 1.0 / norm;
        }
        helmert[(k - 1, k)] = -(k as f64) / norm;
    }
    // Kronecker product H (x) I_d under component-major flattening.
    let mut l = DMatrix::zeros((n - 1) * d, n * d);
    for r in 0..(n - 1) {
        for c in 0..n {
            let v = helmert[(r, c)];
            if v != 0.0 {
                for s in 0..d {
                    l[(r * d + s, c * d + s)] = v;
                }
            }
        }
    }
    Ok(l)
}

impl DiagonalConditioner {
    pub fn new(n: usize, d: usize, weights: &[f64]) -> Result<Self> {
        if weights.len() != n {
            return Err(GeoError::InvalidInput(format!(
                "{} weights for {} components",
                weights.len(),
                n
            )));
        }
        if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(GeoError::InvalidInput("weights must be positive".into()));
        }
        Ok(Self {
            n,
            d,
            l: build_l(n, d)?,
            weights: weights.to_vec(),
        })
    }

    pub fn equal_weights(n: usize, d: usize) -> Result<Self> {
        Self::new(n, d, &vec![1.0; n])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn l(&self) -> &DMatrix<f64> {
        &self.l
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// |L x|, the Euclidean distance of a flattened chart state from the
    /// replicated diagonal subspace.
    pub fn diagonal_defect(&self, x: &DVector<f64>) -> f64 {
        (&self.l * x).norm()
    }

    /// Oblique-projection quantities for a product diffusion matrix.
    pub fn oblique_terms(&self, sigma: &DMatrix<f64>) -> Result<ObliqueTerms> {
        let nd = self.n * self.d;
        if sigma.nrows() != nd || sigma.ncols() != nd {
            return Err(GeoError::InvalidInput(format!(
                "diffusion matrix is {}x{}, expected {nd}x{nd}",
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        let a = sigma * sigma.transpose();
        let a_inv = a
            .clone()
            .try_inverse()
            .ok_or_else(|| GeoError::SingularA("Sigma Sigma^T not invertible".into()))?;
        let lal = &self.l * &a * self.l.transpose();
        // Reject ill-conditioned systems before inverting.
        let eig = nalgebra::SymmetricEigen::new(lal.clone());
        let mut min = f64::INFINITY;
        let mut max: f64 = 0.0;
        for v in eig.eigenvalues.iter() {
            min = min.min(*v);
            max = max.max(v.abs());
        }
        if !(min > 0.0) || max / min > CONDITION_BOUND {
            return Err(GeoError::SingularA(format!(
                "L a L^T condition number {:.3e} exceeds bound",
                max / min
            )));
        }
        let big_a = lal
            .try_inverse()
            .ok_or_else(|| GeoError::SingularA("L a L^T not invertible".into()))?;
        let p = &a * self.l.transpose() * &big_a * &self.l;
        let beta = sigma.transpose() * self.l.transpose() * &big_a;
        let det = big_a.determinant();
        if !(det > 0.0) {
            return Err(GeoError::SingularA(format!("det A = {det} not positive")));
        }
        Ok(ObliqueTerms {
            a,
            a_inv,
            big_a,
            p,
            beta,
            eta: det.sqrt(),
        })
    }
}

/// Weighted per-block average of a flattened chart state: the d-vector
/// mu(x) = sum_i w_i x_i / sum_j w_j. With equal weights this is the
/// orthogonal projection onto the diagonal, read as a single block.
pub fn project_diagonal(x: &DVector<f64>, n: usize, d: usize, weights: &[f64]) -> Result<DVector<f64>> {
    if x.len() != n * d {
        return Err(GeoError::InvalidInput(format!(
            "state length {} does not match n d = {}",
            x.len(),
            n * d
        )));
    }
    if weights.len() != n {
        return Err(GeoError::InvalidInput("weights length mismatch".into()));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(GeoError::InvalidInput("weights must sum positive".into()));
    }
    let mut mu = DVector::zeros(d);
    for i in 0..n {
        for s in 0..d {
            mu[s] += weights[i] * x[i * d + s];
        }
    }
    Ok(mu / total)
}

/// Outcome of projecting a product point to the diagonal: the closest
/// diagonal point (as a point of M) and the product-space distance to it.
#[derive(Debug, Clone)]
pub struct DiagonalProjection {
    pub point: ManifoldPoint,
    /// sqrt(sum_i d(x_i, point)^2), the distance from x to the diagonal.
    pub radial: f64,
}

/// Closest point of the diagonal to `x`: the unweighted Fréchet mean of the
/// components, solved by Riemannian gradient descent warm-started at the
/// chart mean of the components in a normal chart at the first component.
pub fn closest_diagonal_point(x: &ProductPoint) -> Result<DiagonalProjection> {
    let cfg = FrechetConfig::default();
    let weights = vec![1.0; x.n()];
    let point = frechet_mean(x.components(), &weights, &cfg)?;
    let mut sq = 0.0;
    for c in x.components() {
        sq += geodesic_distance(c, &point)?.powi(2);
    }
    Ok(DiagonalProjection {
        point,
        radial: sq.sqrt(),
    })
}

/// Same as [`closest_diagonal_point`] with an explicit solver configuration.
pub fn closest_diagonal_point_with(
    x: &ProductPoint,
    cfg: &FrechetConfig,
) -> Result<DiagonalProjection> {
    let weights = vec![1.0; x.n()];
    let point = frechet_mean(x.components(), &weights, cfg)?;
    let mut sq = 0.0;
    for c in x.components() {
        sq += geodesic_distance(c, &point)?.powi(2);
    }
    Ok(DiagonalProjection {
        point,
        radial: sq.sqrt(),
    })
}

/// Flatten the chart coordinates of every component (component-major).
pub fn flatten_in_chart(chart: &Chart, x: &ProductPoint) -> Result<DVector<f64>> {
    let d = chart.dim();
    let mut out = DVector::zeros(x.n() * d);
    for (i, c) in x.components().iter().enumerate() {
        let xi = chart.to_chart(c)?;
        for s in 0..d {
            out[i * d + s] = xi[s];
        }
    }
    Ok(out)
}

/// Rebuild the intrinsic components from flattened chart coordinates.
pub fn components_from_chart(
    chart: &Chart,
    coords: &DVector<f64>,
    n: usize,
) -> Result<Vec<ManifoldPoint>> {
    let d = chart.dim();
    if coords.len() != n * d {
        return Err(GeoError::InvalidInput(
            "flattened coordinates have the wrong length".into(),
        ));
    }
    let mut comps = Vec::with_capacity(n);
    for i in 0..n {
        let xi = DVector::from_iterator(d, (0..d).map(|s| coords[i * d + s]));
        comps.push(chart.from_chart(&xi)?);
    }
    Ok(comps)
}

/// Rebuild the intrinsic product point from flattened chart coordinates.
pub fn unflatten_from_chart(chart: &Chart, coords: &DVector<f64>, n: usize) -> Result<ProductPoint> {
    ProductPoint::new(components_from_chart(chart, coords, n)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ManifoldPoint;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_4;

    #[test]
    fn helmert_two_by_one_is_forced() {
        let l = build_l(2, 1).unwrap();
        let s = 1.0 / 2.0f64.sqrt();
        assert_relative_eq!(l[(0, 0)], s, epsilon = 1e-15);
        assert_relative_eq!(l[(0, 1)], -s, epsilon = 1e-15);
    }

    #[test]
    fn helmert_three_by_one_matches_gram_schmidt_oracle() {
        // Orthonormalize {e1 - e2, e1 + e2 - 2 e3} by hand and compare.
        let v1 = DVector::from_row_slice(&[1.0, -1.0, 0.0]);
        let v2 = DVector::from_row_slice(&[1.0, 1.0, -2.0]);
        let q1: DVector<f64> = &v1 / v1.norm();
        let v2p: DVector<f64> = &v2 - &q1 * q1.dot(&v2);
        let q2: DVector<f64> = &v2p / v2p.norm();

        let l = build_l(3, 1).unwrap();
        for j in 0..3 {
            assert_relative_eq!(l[(0, j)], q1[j], epsilon = 1e-14);
            assert_relative_eq!(l[(1, j)], q2[j], epsilon = 1e-14);
        }
    }

    #[test]
    fn blockwise_kernel_contains_every_diagonal_vector() {
        // Brute force over a grid of (a, b) diagonal states for n = 2, d = 2.
        let l = build_l(2, 2).unwrap();
        assert_eq!((l.nrows(), l.ncols()), (2, 4));
        for ai in 0..10 {
            for bi in 0..10 {
                let a = -1.0 + 2.0 * ai as f64 / 9.0;
                let b = -3.0 + 6.0 * bi as f64 / 9.0;
                let v = DVector::from_row_slice(&[a, b, a, b]);
                assert!((&l * &v).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn rows_are_orthonormal_with_zero_sums() {
        for (n, d) in [(2, 1), (3, 1), (4, 2), (6, 3)] {
            let l = build_l(n, d).unwrap();
            let gram = &l * l.transpose();
            assert!((gram - DMatrix::identity((n - 1) * d, (n - 1) * d)).norm() < 1e-12);
            for r in 0..(n - 1) * d {
                let sum: f64 = (0..n * d).map(|c| l[(r, c)]).sum();
                assert!(sum.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn project_diagonal_matches_arithmetic() {
        let x = DVector::from_row_slice(&[1.0, 2.0, 3.0]);
        let mu = project_diagonal(&x, 3, 1, &[1.0, 1.0, 1.0]).unwrap();
        assert_relative_eq!(mu[0], 2.0);
        // Replicated mean is the orthogonal projection.
        let residual = DVector::from_row_slice(&[1.0 - 2.0, 2.0 - 2.0, 3.0 - 2.0]);
        let l = build_l(3, 1).unwrap();
        assert_relative_eq!((&l * &x).norm(), residual.norm(), epsilon = 1e-12);

        let w = project_diagonal(&x, 3, 1, &[2.0, 1.0, 1.0]).unwrap();
        assert_relative_eq!(w[0], 7.0 / 4.0);

        let fixed = project_diagonal(&DVector::from_row_slice(&[5.0, 5.0, 5.0]), 3, 1, &[1.0; 3])
            .unwrap();
        assert_relative_eq!(fixed[0], 5.0);
    }

    #[test]
    fn oblique_terms_identity_diffusion() {
        let cond = DiagonalConditioner::equal_weights(3, 2).unwrap();
        let sigma = DMatrix::identity(6, 6);
        let t = cond.oblique_terms(&sigma).unwrap();
        assert!((&t.a - DMatrix::identity(6, 6)).norm() < 1e-14);
        assert!((&t.big_a - DMatrix::identity(4, 4)).norm() < 1e-12);
        assert!((&t.p - cond.l().transpose() * cond.l()).norm() < 1e-12);
        assert_relative_eq!(t.eta, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn oblique_terms_scalar_diffusion() {
        let cond = DiagonalConditioner::equal_weights(2, 1).unwrap();
        let sigma = DMatrix::identity(2, 2) * 2.0;
        let t = cond.oblique_terms(&sigma).unwrap();
        assert!((&t.a - DMatrix::identity(2, 2) * 4.0).norm() < 1e-14);
        assert_relative_eq!(t.big_a[(0, 0)], 0.25, epsilon = 1e-14);
        assert_relative_eq!(t.eta, 0.5, epsilon = 1e-14);
        assert!((&t.p - cond.l().transpose() * cond.l()).norm() < 1e-12);
    }

    #[test]
    fn lp_equals_l_for_random_spd_diffusions() {
        // Property from the construction: L P = (L a L^T) A L = L.
        let src = crate::sampling::NoiseSource::new(31);
        for case in 0..50u64 {
            let n = 2 + (case % 3) as usize;
            let d = 1 + (case % 2) as usize;
            let nd = n * d;
            let cond = DiagonalConditioner::equal_weights(n, d).unwrap();
            let raw = src.normals(case, 9, 0, nd * nd);
            let m = DMatrix::from_vec(nd, nd, raw);
            let sigma = &m * m.transpose() + DMatrix::identity(nd, nd) * 0.5;
            let sqrt = crate::geometry::spd_sqrt(&sigma).unwrap();
            let t = cond.oblique_terms(&sqrt).unwrap();
            assert!(
                (cond.l() * &t.p - cond.l()).norm() < 1e-8,
                "L P != L for case {case}"
            );
        }
    }

    #[test]
    fn closest_point_euclidean_is_the_mean() {
        let x = ProductPoint::new(vec![
            ManifoldPoint::euclidean(&[0.0, 0.0]).unwrap(),
            ManifoldPoint::euclidean(&[2.0, 0.0]).unwrap(),
        ])
        .unwrap();
        let proj = closest_diagonal_point(&x).unwrap();
        assert_relative_eq!(proj.point.coords()[0], 1.0, epsilon = 1e-9);
        assert_relative_eq!(proj.point.coords()[1], 0.0, epsilon = 1e-9);
        assert_relative_eq!(proj.radial, 2.0f64.sqrt(), epsilon = 1e-9);
    }

    #[test]
    fn closest_point_on_diagonal_is_fixed() {
        let p = ManifoldPoint::sphere_normalized(&[0.3, 0.3, 0.9]).unwrap();
        let x = ProductPoint::new(vec![p.clone(), p.clone(), p.clone()]).unwrap();
        let proj = closest_diagonal_point(&x).unwrap();
        assert!(geodesic_distance(&proj.point, &p).unwrap() < 1e-9);
        assert!(proj.radial < 1e-9);
    }

    #[test]
    fn closest_point_sphere_matches_grid_search_oracle() {
        let a = ManifoldPoint::sphere(&[1.0, 0.0, 0.0]).unwrap();
        let b = ManifoldPoint::sphere(&[0.0, 1.0, 0.0]).unwrap();
        let x = ProductPoint::new(vec![a.clone(), b.clone()]).unwrap();
        let proj = closest_diagonal_point(&x).unwrap();

        // Independent oracle: grid search over the sphere at half-degree
        // resolution, minimizing the summed squared distance.
        let mut best = (f64::INFINITY, [0.0; 3]);
        let step = 0.5f64.to_radians();
        let mut theta = 0.0;
        while theta <= std::f64::consts::PI {
            let mut phi = 0.0;
            while phi < 2.0 * std::f64::consts::PI {
                let cand = ManifoldPoint::sphere_normalized(&[
                    theta.sin() * phi.cos(),
                    theta.sin() * phi.sin(),
                    theta.cos(),
                ])
                .unwrap();
                let cost = geodesic_distance(&a, &cand).unwrap().powi(2)
                    + geodesic_distance(&b, &cand).unwrap().powi(2);
                if cost < best.0 {
                    best = (cost, [cand.coords()[0], cand.coords()[1], cand.coords()[2]]);
                }
                phi += step;
            }
            theta += step;
        }
        let oracle = ManifoldPoint::sphere_normalized(&best.1).unwrap();
        assert!(
            geodesic_distance(&proj.point, &oracle).unwrap() < 0.02,
            "solver {:?} vs grid oracle {:?}",
            proj.point,
            oracle
        );
        // Closed form for this symmetric pair.
        let mid = ManifoldPoint::sphere_normalized(&[1.0, 1.0, 0.0]).unwrap();
        assert!(geodesic_distance(&proj.point, &mid).unwrap() < 1e-7);
        assert_relative_eq!(proj.radial, 2.0f64.sqrt() * FRAC_PI_4, epsilon = 1e-7);
    }
}
