//! Intrinsic points, tangent vectors, and the exponential/logarithm maps
//! for the supported manifolds: flat space of any dimension and the round
//! unit 2-sphere embedded in R^3.

use nalgebra::DVector;

use crate::error::{GeoError, Result};

/// Unit-norm tolerance accepted by the strict sphere constructor.
pub const SPHERE_NORM_TOL: f64 = 1e-12;
/// Tangency tolerance accepted by the strict tangent constructor.
pub const TANGENT_TOL: f64 = 1e-10;
/// Angular margin kept away from the antipode in the logarithm map.
pub const CUT_LOCUS_MARGIN: f64 = 1e-8;

/// The manifold a point lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Manifold {
    /// Flat d-dimensional space.
    Euclidean(usize),
    /// The unit 2-sphere in R^3.
    Sphere2,
}

impl Manifold {
    /// Intrinsic dimension.
    pub fn dim(&self) -> usize {
        match self {
            Manifold::Euclidean(d) => *d,
            Manifold::Sphere2 => 2,
        }
    }

    /// Length of the coordinate vector a point carries.
    pub fn ambient_dim(&self) -> usize {
        match self {
            Manifold::Euclidean(d) => *d,
            Manifold::Sphere2 => 3,
        }
    }
}

/// A point on a manifold. Sphere points are stored as embedded unit
/// vectors in R^3; flat points store their coordinates directly.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldPoint {
    manifold: Manifold,
    coords: DVector<f64>,
}

impl ManifoldPoint {
    /// Flat-space point from its coordinates.
    pub fn euclidean(coords: &[f64]) -> Result<Self> {
        if coords.is_empty() {
            return Err(GeoError::InvalidInput("empty coordinate vector".into()));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(GeoError::InvalidInput("non-finite coordinate".into()));
        }
        Ok(Self {
            manifold: Manifold::Euclidean(coords.len()),
            coords: DVector::from_row_slice(coords),
        })
    }

    /// Sphere point; the input must already be unit length to 1e-12.
    pub fn sphere(coords: &[f64]) -> Result<Self> {
        if coords.len() != 3 {
            return Err(GeoError::InvalidInput(format!(
                "sphere point needs 3 coordinates, got {}",
                coords.len()
            )));
        }
        let v = DVector::from_row_slice(coords);
        let norm = v.norm();
        if !norm.is_finite() || (norm - 1.0).abs() > SPHERE_NORM_TOL {
            return Err(GeoError::InvalidInput(format!(
                "sphere point norm {norm} deviates from 1 by more than {SPHERE_NORM_TOL}"
            )));
        }
        // Renormalize so downstream identities hold to machine precision.
        Ok(Self {
            manifold: Manifold::Sphere2,
            coords: v / norm,
        })
    }

    /// Sphere point from any nonzero vector, normalized onto the sphere.
    pub fn sphere_normalized(coords: &[f64]) -> Result<Self> {
        if coords.len() != 3 {
            return Err(GeoError::InvalidInput(format!(
                "sphere point needs 3 coordinates, got {}",
                coords.len()
            )));
        }
        let v = DVector::from_row_slice(coords);
        let norm = v.norm();
        if !norm.is_finite() || norm < 1e-12 {
            return Err(GeoError::InvalidInput(
                "cannot normalize a (near-)zero vector onto the sphere".into(),
            ));
        }
        Ok(Self {
            manifold: Manifold::Sphere2,
            coords: v / norm,
        })
    }

    pub fn from_vector(manifold: Manifold, coords: DVector<f64>) -> Result<Self> {
        match manifold {
            Manifold::Euclidean(_) => Self::euclidean(coords.as_slice()),
            Manifold::Sphere2 => Self::sphere(coords.as_slice()),
        }
    }

    pub fn manifold(&self) -> Manifold {
        self.manifold
    }

    pub fn coords(&self) -> &DVector<f64> {
        &self.coords
    }

    pub fn same_manifold(&self, other: &ManifoldPoint) -> Result<()> {
        if self.manifold != other.manifold {
            return Err(GeoError::ManifoldMismatch(format!(
                "{:?} vs {:?}",
                self.manifold, other.manifold
            )));
        }
        Ok(())
    }
}

/// A tangent vector anchored at a base point. For the sphere the vector is
/// stored in ambient R^3 coordinates orthogonal to the base point.
#[derive(Debug, Clone)]
pub struct TangentVector {
    base: ManifoldPoint,
    vec: DVector<f64>,
}

impl TangentVector {
    /// Strict constructor; sphere vectors must be tangent to 1e-10.
    pub fn new(base: ManifoldPoint, vec: DVector<f64>) -> Result<Self> {
        if vec.len() != base.manifold().ambient_dim() {
            return Err(GeoError::InvalidInput(format!(
                "tangent vector length {} does not match ambient dimension {}",
                vec.len(),
                base.manifold().ambient_dim()
            )));
        }
        if let Manifold::Sphere2 = base.manifold() {
            let inner = vec.dot(base.coords());
            if inner.abs() > TANGENT_TOL {
                return Err(GeoError::InvalidInput(format!(
                    "vector not tangent: <v, p> = {inner}"
                )));
            }
        }
        Ok(Self { base, vec })
    }

    /// Constructor that projects out any normal component first (sphere only).
    pub fn projected(base: ManifoldPoint, vec: DVector<f64>) -> Result<Self> {
        let vec = match base.manifold() {
            Manifold::Sphere2 => {
                let inner = vec.dot(base.coords());
                vec - base.coords() * inner
            }
            Manifold::Euclidean(_) => vec,
        };
        Self::new(base, vec)
    }

    pub fn base(&self) -> &ManifoldPoint {
        &self.base
    }

    pub fn vec(&self) -> &DVector<f64> {
        &self.vec
    }

    pub fn norm(&self) -> f64 {
        self.vec.norm()
    }
}

/// Geodesic exponential map. Flat space translates; the sphere follows the
/// great circle cos(|v|) p + sin(|v|) v/|v|.
pub fn exp_map(p: &ManifoldPoint, v: &TangentVector) -> Result<ManifoldPoint> {
    Ok(exp_map_with_flag(p, v)?.0)
}

/// Exponential map together with an invertibility flag: `false` when |v|
/// reaches the injectivity radius (pi on the sphere), in which case the
/// logarithm map cannot recover `v`.
pub fn exp_map_with_flag(p: &ManifoldPoint, v: &TangentVector) -> Result<(ManifoldPoint, bool)> {
    p.same_manifold(v.base())?;
    if (p.coords() - v.base().coords()).norm() > 1e-9 {
        return Err(GeoError::InvalidInput(
            "tangent vector based at a different point".into(),
        ));
    }
    match p.manifold() {
        Manifold::Euclidean(_) => {
            let q = p.coords() + v.vec();
            Ok((ManifoldPoint::from_vector(p.manifold(), q)?, true))
        }
        Manifold::Sphere2 => {
            let r = v.norm();
            if r < 1e-14 {
                return Ok((p.clone(), true));
            }
            let q = p.coords() * r.cos() + v.vec() * (r.sin() / r);
            let point = ManifoldPoint::sphere_normalized(q.as_slice())?;
            Ok((point, r < std::f64::consts::PI))
        }
    }
}

/// Geodesic logarithm map; errors with [`GeoError::CutLocus`] when `q` is
/// antipodal to `p` on the sphere.
pub fn log_map(p: &ManifoldPoint, q: &ManifoldPoint) -> Result<TangentVector> {
    p.same_manifold(q)?;
    match p.manifold() {
        Manifold::Euclidean(_) => TangentVector::new(p.clone(), q.coords() - p.coords()),
        Manifold::Sphere2 => {
            let cos_theta = p.coords().dot(q.coords()).clamp(-1.0, 1.0);
            // Component of q orthogonal to p; its norm is sin(theta).
            let u = q.coords() - p.coords() * cos_theta;
            let sin_theta = u.norm();
            let theta = sin_theta.atan2(cos_theta);
            if theta > std::f64::consts::PI - CUT_LOCUS_MARGIN {
                return Err(GeoError::CutLocus(format!(
                    "log undefined at angle {theta} (antipodal within margin)"
                )));
            }
            if sin_theta < 1e-14 {
                return TangentVector::new(p.clone(), DVector::zeros(3));
            }
            TangentVector::new(p.clone(), u * (theta / sin_theta))
        }
    }
}

/// Geodesic distance: |p - q| in flat space, arccos(<p, q>) on the sphere.
pub fn geodesic_distance(p: &ManifoldPoint, q: &ManifoldPoint) -> Result<f64> {
    p.same_manifold(q)?;
    match p.manifold() {
        Manifold::Euclidean(_) => Ok((p.coords() - q.coords()).norm()),
        Manifold::Sphere2 => {
            let cos_theta = p.coords().dot(q.coords()).clamp(-1.0, 1.0);
            // Cross-product magnitude is symmetric in (p, q) and atan2 keeps
            // accuracy near theta = 0 where acos loses digits.
            let (a, b) = (p.coords(), q.coords());
            let cx = a[1] * b[2] - a[2] * b[1];
            let cy = a[2] * b[0] - a[0] * b[2];
            let cz = a[0] * b[1] - a[1] * b[0];
            let sin_theta = (cx * cx + cy * cy + cz * cz).sqrt();
            Ok(sin_theta.atan2(cos_theta))
        }
    }
}
