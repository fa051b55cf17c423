//! Local parameterizations: identity coordinates on flat space,
//! stereographic projections of the sphere, and exponential normal charts
//! centered at an arbitrary point.

use nalgebra::{DVector, Vector3};

use crate::error::{GeoError, Result};
use crate::geometry::manifold::{exp_map, log_map, Manifold, ManifoldPoint, TangentVector};

/// Default validity radius of a stereographic chart (chart-coordinate norm).
pub const STEREOGRAPHIC_RADIUS: f64 = 10.0;
/// Default validity radius of an exponential normal chart on the sphere.
pub const EXP_NORMAL_RADIUS_FACTOR: f64 = 0.9;
/// Angular margin kept away from a stereographic chart's projection pole.
pub const POLE_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChartKind {
    /// Global coordinates on flat space.
    Identity,
    /// Projection from the north pole (0,0,1); maps the south pole to 0.
    StereographicNorth,
    /// Projection from the south pole (0,0,-1); maps the north pole to 0.
    StereographicSouth,
    /// Normal coordinates of the exponential map at a chosen center.
    ExpNormal,
}

/// A chart: forward map `to_chart` (point -> coordinates) and inverse
/// `from_chart`. Exponential normal charts carry a deterministically
/// constructed orthonormal tangent basis at their center.
#[derive(Debug, Clone)]
pub struct Chart {
    manifold: Manifold,
    kind: ChartKind,
    center: Option<ManifoldPoint>,
    basis: Option<[Vector3<f64>; 2]>,
    valid_radius: f64,
}

/// Deterministic orthonormal basis of the tangent plane at `c` on the sphere:
/// seed with the ambient axis least aligned with `c` (lowest index on ties),
/// project, normalize, and complete with the cross product.
fn tangent_basis(c: &ManifoldPoint) -> [Vector3<f64>; 2] {
    let cv = Vector3::new(c.coords()[0], c.coords()[1], c.coords()[2]);
    let mut axis = 0;
    for i in 1..3 {
        if cv[i].abs() < cv[axis].abs() {
            axis = i;
        }
    }
    let mut a = Vector3::zeros();
    a[axis] = 1.0;
    let e1 = (a - cv * cv.dot(&a)).normalize();
    let e2 = cv.cross(&e1);
    [e1, e2]
}

impl Chart {
    pub fn identity(dim: usize) -> Self {
        Chart {
            manifold: Manifold::Euclidean(dim),
            kind: ChartKind::Identity,
            center: None,
            basis: None,
            valid_radius: f64::INFINITY,
        }
    }

    pub fn stereographic_north() -> Self {
        Chart {
            manifold: Manifold::Sphere2,
            kind: ChartKind::StereographicNorth,
            center: None,
            basis: None,
            valid_radius: STEREOGRAPHIC_RADIUS,
        }
    }

    pub fn stereographic_south() -> Self {
        Chart {
            manifold: Manifold::Sphere2,
            kind: ChartKind::StereographicSouth,
            center: None,
            basis: None,
            valid_radius: STEREOGRAPHIC_RADIUS,
        }
    }

    /// Exponential normal chart centered at `center`.
    pub fn exp_normal(center: ManifoldPoint) -> Self {
        let (basis, radius) = match center.manifold() {
            Manifold::Sphere2 => (
                Some(tangent_basis(&center)),
                EXP_NORMAL_RADIUS_FACTOR * std::f64::consts::PI,
            ),
            Manifold::Euclidean(_) => (None, f64::INFINITY),
        };
        Chart {
            manifold: center.manifold(),
            kind: ChartKind::ExpNormal,
            center: Some(center),
            basis,
            valid_radius: radius,
        }
    }

    pub fn manifold(&self) -> Manifold {
        self.manifold
    }

    pub fn kind(&self) -> ChartKind {
        self.kind
    }

    pub fn center(&self) -> Option<&ManifoldPoint> {
        self.center.as_ref()
    }

    /// Chart-coordinate radius inside which the chart is trusted.
    pub fn valid_radius(&self) -> f64 {
        self.valid_radius
    }

    /// Chart coordinate dimension (the manifold dimension).
    pub fn dim(&self) -> usize {
        self.manifold.dim()
    }

    /// Forward coordinate map x = phi(p).
    pub fn to_chart(&self, p: &ManifoldPoint) -> Result<DVector<f64>> {
        if p.manifold() != self.manifold {
            return Err(GeoError::ManifoldMismatch(format!(
                "chart on {:?}, point on {:?}",
                self.manifold,
                p.manifold()
            )));
        }
        match self.kind {
            ChartKind::Identity => Ok(p.coords().clone()),
            ChartKind::StereographicNorth | ChartKind::StereographicSouth => {
                let c = p.coords();
                // Distance from the projection pole, as 1 -/+ z.
                let denom = match self.kind {
                    ChartKind::StereographicNorth => 1.0 - c[2],
                    _ => 1.0 + c[2],
                };
                // The pole itself projects to infinity; keep an angular margin.
                if denom < 0.5 * POLE_MARGIN * POLE_MARGIN {
                    return Err(GeoError::PointOutsideChart(
                        "point at the projection pole".into(),
                    ));
                }
                let x = DVector::from_row_slice(&[c[0] / denom, c[1] / denom]);
                if x.norm() > self.valid_radius {
                    return Err(GeoError::PointOutsideChart(format!(
                        "stereographic coordinates |x| = {} beyond radius {}",
                        x.norm(),
                        self.valid_radius
                    )));
                }
                Ok(x)
            }
            ChartKind::ExpNormal => {
                let center = self.center.as_ref().expect("exp-normal chart has a center");
                match self.manifold {
                    Manifold::Euclidean(_) => Ok(p.coords() - center.coords()),
                    Manifold::Sphere2 => {
                        let v = log_map(center, p).map_err(|_| {
                            GeoError::PointOutsideChart(
                                "point antipodal to the chart center".into(),
                            )
                        })?;
                        let basis = self.basis.as_ref().unwrap();
                        let vv = Vector3::new(v.vec()[0], v.vec()[1], v.vec()[2]);
                        Ok(DVector::from_row_slice(&[
                            vv.dot(&basis[0]),
                            vv.dot(&basis[1]),
                        ]))
                    }
                }
            }
        }
    }

    /// Inverse coordinate map p = phi^{-1}(x). Sphere outputs are unit norm.
    pub fn from_chart(&self, x: &DVector<f64>) -> Result<ManifoldPoint> {
        if x.len() != self.dim() {
            return Err(GeoError::InvalidInput(format!(
                "chart coordinates have length {}, expected {}",
                x.len(),
                self.dim()
            )));
        }
        if x.iter().any(|c| !c.is_finite()) {
            return Err(GeoError::CoordinatesOutOfRange(
                "non-finite chart coordinates".into(),
            ));
        }
        if x.norm() >= self.valid_radius {
            return Err(GeoError::CoordinatesOutOfRange(format!(
                "|x| = {} outside validity radius {}",
                x.norm(),
                self.valid_radius
            )));
        }
        match self.kind {
            ChartKind::Identity => ManifoldPoint::from_vector(self.manifold, x.clone()),
            ChartKind::StereographicNorth | ChartKind::StereographicSouth => {
                let r2 = x.norm_squared();
                let denom = 1.0 + r2;
                let z = match self.kind {
                    ChartKind::StereographicNorth => (r2 - 1.0) / denom,
                    _ => (1.0 - r2) / denom,
                };
                ManifoldPoint::sphere_normalized(&[2.0 * x[0] / denom, 2.0 * x[1] / denom, z])
            }
            ChartKind::ExpNormal => {
                let center = self.center.as_ref().unwrap();
                match self.manifold {
                    Manifold::Euclidean(_) => {
                        ManifoldPoint::from_vector(self.manifold, center.coords() + x)
                    }
                    Manifold::Sphere2 => {
                        let basis = self.basis.as_ref().unwrap();
                        let amb = basis[0] * x[0] + basis[1] * x[1];
                        let v = TangentVector::new(
                            center.clone(),
                            DVector::from_row_slice(&[amb[0], amb[1], amb[2]]),
                        )?;
                        exp_map(center, &v)
                    }
                }
            }
        }
    }

    /// Re-express coordinates given in `self` in the chart `target`.
    pub fn transfer(&self, target: &Chart, x: &DVector<f64>) -> Result<DVector<f64>> {
        target.to_chart(&self.from_chart(x)?)
    }
}
