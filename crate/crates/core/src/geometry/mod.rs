//! Closest-point oracles for the surfaces the solver can be posed on.
//!
//! Points always live in `R^3`; planar curves (the circle) use `z = 0`
//! and report `dim() == 2`.

mod bvh;
mod mesh;

pub use bvh::Bvh;
pub use mesh::{Feature, TriMesh};

use crate::error::{Error, Result};

pub type Point = [f64; 3];

/// Relative distance below which an analytic query is treated as sitting on
/// a singular point of the projection.
pub const MEDIAL_EPS: f64 = 1e-12;

#[inline]
pub(crate) fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub(crate) fn add(a: Point, b: Point) -> Point {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub(crate) fn scale(a: Point, s: f64) -> Point {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub(crate) fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub(crate) fn cross(a: Point, b: Point) -> Point {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub(crate) fn norm(a: Point) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub(crate) fn normalize(a: Point) -> Point {
    scale(a, 1.0 / norm(a))
}

/// Result of projecting a point onto a surface.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurfaceQuery {
    pub query_point: Point,
    pub closest_point: Point,
    pub distance: f64,
    /// Unit normal at `closest_point`.
    pub normal: Point,
}

#[derive(Clone, Debug)]
pub enum SurfaceKind {
    Circle { center: [f64; 2], radius: f64 },
    Sphere { center: Point, radius: f64 },
    /// Torus with its symmetry axis parallel to `z`.
    Torus { center: Point, major: f64, minor: f64 },
    Mesh(Box<TriMesh>),
}

#[derive(Clone, Debug)]
pub struct Surface {
    kind: SurfaceKind,
    curvature_bound: Option<f64>,
}

impl Surface {
    pub fn circle(center: [f64; 2], radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::InvalidSurface(format!("circle radius {radius} must be positive")));
        }
        Ok(Surface {
            kind: SurfaceKind::Circle { center, radius },
            curvature_bound: Some(1.0 / radius),
        })
    }

    pub fn sphere(center: Point, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::InvalidSurface(format!("sphere radius {radius} must be positive")));
        }
        Ok(Surface {
            kind: SurfaceKind::Sphere { center, radius },
            curvature_bound: Some(1.0 / radius),
        })
    }

    pub fn torus(center: Point, major: f64, minor: f64) -> Result<Self> {
        if !(minor > 0.0 && major > minor) {
            return Err(Error::InvalidSurface(format!(
                "torus radii must satisfy 0 < minor < major (got major {major}, minor {minor})"
            )));
        }
        // Principal curvatures are 1/r around the tube and at most 1/(R - r)
        // on the inner equator.
        let bound = (1.0 / minor).max(1.0 / (major - minor));
        Ok(Surface {
            kind: SurfaceKind::Torus { center, major, minor },
            curvature_bound: Some(bound),
        })
    }

    /// Wraps a triangle mesh. No curvature bound is attached; supply one with
    /// [`Surface::with_curvature_bound`] if it is known.
    pub fn mesh(mesh: TriMesh) -> Self {
        Surface {
            kind: SurfaceKind::Mesh(Box::new(mesh)),
            curvature_bound: None,
        }
    }

    pub fn with_curvature_bound(mut self, bound: Option<f64>) -> Self {
        self.curvature_bound = bound;
        self
    }

    pub fn kind(&self) -> &SurfaceKind {
        &self.kind
    }

    pub fn curvature_bound(&self) -> Option<f64> {
        self.curvature_bound
    }

    /// Dimension of the embedding space.
    pub fn dim(&self) -> usize {
        match self.kind {
            SurfaceKind::Circle { .. } => 2,
            _ => 3,
        }
    }

    /// Length scale used for on-surface tolerances.
    pub fn length_scale(&self) -> f64 {
        match &self.kind {
            SurfaceKind::Circle { center, radius } => radius.max(center[0].hypot(center[1])),
            SurfaceKind::Sphere { center, radius } => radius.max(norm(*center)),
            SurfaceKind::Torus { center, major, minor } => (major + minor).max(norm(*center)),
            SurfaceKind::Mesh(m) => m.bbox_diagonal(),
        }
    }

    /// A point on each connected component, usable as band seeds.
    pub fn default_seeds(&self) -> Vec<Point> {
        match &self.kind {
            SurfaceKind::Circle { center, radius } => vec![[center[0] + radius, center[1], 0.0]],
            SurfaceKind::Sphere { center, radius } => vec![add(*center, [*radius, 0.0, 0.0])],
            SurfaceKind::Torus { center, major, minor } => {
                vec![add(*center, [major + minor, 0.0, 0.0])]
            }
            SurfaceKind::Mesh(m) => m.component_seeds(),
        }
    }

    pub fn closest_point(&self, x: Point) -> Result<SurfaceQuery> {
        match &self.kind {
            SurfaceKind::Circle { center, radius } => {
                let c = [center[0], center[1], 0.0];
                let x = [x[0], x[1], 0.0];
                radial_projection(x, c, *radius)
            }
            SurfaceKind::Sphere { center, radius } => radial_projection(x, *center, *radius),
            SurfaceKind::Torus { center, major, minor } => {
                let rel = sub(x, *center);
                let rho = rel[0].hypot(rel[1]);
                if rho <= MEDIAL_EPS * major {
                    return Err(Error::MedialAxisPoint { point: x });
                }
                let ring = add(*center, [major * rel[0] / rho, major * rel[1] / rho, 0.0]);
                radial_projection(x, ring, *minor)
            }
            SurfaceKind::Mesh(m) => Ok(m.closest_point(x)),
        }
    }

    /// Unit normal at a point `y` that lies on the surface.
    pub fn surface_normal(&self, y: Point) -> Result<Point> {
        let tol = 10.0 * f64::EPSILON * self.length_scale();
        match &self.kind {
            SurfaceKind::Mesh(m) => {
                let hit = m.closest_point_feature(y);
                if hit.distance > tol {
                    return Err(Error::OffSurface {
                        point: y,
                        distance: hit.distance,
                    });
                }
                Ok(m.pseudo_normal(hit.triangle, hit.feature))
            }
            _ => {
                let q = self.closest_point(y).map_err(|_| Error::OffSurface {
                    point: y,
                    distance: f64::NAN,
                })?;
                if q.distance > tol {
                    return Err(Error::OffSurface {
                        point: y,
                        distance: q.distance,
                    });
                }
                Ok(q.normal)
            }
        }
    }

    /// Normal at a point assumed to be on the surface, without the
    /// on-surface check. Meshes return the angle-weighted pseudo-normal.
    pub fn normal_at(&self, y: Point) -> Point {
        match &self.kind {
            SurfaceKind::Mesh(m) => {
                let hit = m.closest_point_feature(y);
                m.pseudo_normal(hit.triangle, hit.feature)
            }
            SurfaceKind::Circle { center, .. } => {
                normalize([y[0] - center[0], y[1] - center[1], 0.0])
            }
            SurfaceKind::Sphere { center, .. } => normalize(sub(y, *center)),
            SurfaceKind::Torus { center, major, .. } => {
                let rel = sub(y, *center);
                let rho = rel[0].hypot(rel[1]);
                let ring = add(*center, [major * rel[0] / rho, major * rel[1] / rho, 0.0]);
                normalize(sub(y, ring))
            }
        }
    }
}

fn radial_projection(x: Point, center: Point, radius: f64) -> Result<SurfaceQuery> {
    let rel = sub(x, center);
    let r = norm(rel);
    if r <= MEDIAL_EPS * radius {
        return Err(Error::MedialAxisPoint { point: x });
    }
    let normal = scale(rel, 1.0 / r);
    let closest_point = add(center, scale(normal, radius));
    Ok(SurfaceQuery {
        query_point: x,
        closest_point,
        distance: (r - radius).abs(),
        normal,
    })
}
