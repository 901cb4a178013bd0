//! Closed-form geometric queries on spheres, capsules and oriented boxes.
//!
//! Everything here is in meters and works on `f64`. Ray queries use solid
//! semantics: a ray whose origin lies inside a shape hits it at `t = 0`.

use nalgebra::{Isometry3, Point3, Translation3, UnitQuaternion, UnitVector3, Vector3};
use serde::{Deserialize, Serialize};

/// Builds a rigid transform from a translation and fixed-axis roll/pitch/yaw.
pub fn isometry_from_xyz_rpy(xyz: [f64; 3], rpy: [f64; 3]) -> Isometry3<f64> {
    Isometry3::from_parts(
        Translation3::new(xyz[0], xyz[1], xyz[2]),
        UnitQuaternion::from_euler_angles(rpy[0], rpy[1], rpy[2]),
    )
}

/// A line segment between two points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub a: Point3<f64>,
    pub b: Point3<f64>,
}

impl Segment {
    pub fn new(a: Point3<f64>, b: Point3<f64>) -> Self {
        Self { a, b }
    }

    pub fn point_at(&self, s: f64) -> Point3<f64> {
        self.a + (self.b - self.a) * s
    }

    /// Closest point on the segment to `p`, with its parameter in `[0, 1]`.
    pub fn closest_point(&self, p: &Point3<f64>) -> (Point3<f64>, f64) {
        let ab = self.b - self.a;
        let len2 = ab.norm_squared();
        if len2 <= f64::EPSILON * f64::EPSILON {
            return (self.a, 0.0);
        }
        let s = ((p - self.a).dot(&ab) / len2).clamp(0.0, 1.0);
        (self.point_at(s), s)
    }

    pub fn distance_to_point(&self, p: &Point3<f64>) -> f64 {
        (self.closest_point(p).0 - p).norm()
    }

    /// Closest points between two segments.
    ///
    /// Returns `(point on self, point on other)`. Handles degenerate
    /// (zero-length) and parallel segments.
    pub fn closest_points(&self, other: &Segment) -> (Point3<f64>, Point3<f64>) {
        let d1 = self.b - self.a;
        let d2 = other.b - other.a;
        let r = self.a - other.a;
        let a = d1.norm_squared();
        let e = d2.norm_squared();
        let f = d2.dot(&r);
        let eps = 1e-18;

        let (s, t);
        if a <= eps && e <= eps {
            return (self.a, other.a);
        }
        if a <= eps {
            s = 0.0;
            t = (f / e).clamp(0.0, 1.0);
        } else {
            let c = d1.dot(&r);
            if e <= eps {
                t = 0.0;
                s = (-c / a).clamp(0.0, 1.0);
            } else {
                let b = d1.dot(&d2);
                let denom = a * e - b * b;
                let mut s0 = if denom > eps * a * e {
                    ((b * f - c * e) / denom).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                let mut t0 = (b * s0 + f) / e;
                if t0 < 0.0 {
                    t0 = 0.0;
                    s0 = (-c / a).clamp(0.0, 1.0);
                } else if t0 > 1.0 {
                    t0 = 1.0;
                    s0 = ((b - c) / a).clamp(0.0, 1.0);
                }
                s = s0;
                t = t0;
            }
        }
        (self.point_at(s), other.point_at(t))
    }
}

/// A capsule: the set of points within `radius` of a segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Capsule {
    pub p0: Point3<f64>,
    pub p1: Point3<f64>,
    pub radius: f64,
}

impl Capsule {
    pub fn new(p0: Point3<f64>, p1: Point3<f64>, radius: f64) -> Self {
        Self { p0, p1, radius }
    }

    pub fn segment(&self) -> Segment {
        Segment::new(self.p0, self.p1)
    }

    pub fn transformed(&self, pose: &Isometry3<f64>) -> Capsule {
        Capsule::new(pose * self.p0, pose * self.p1, self.radius)
    }

    pub fn translated(&self, offset: &Vector3<f64>) -> Capsule {
        Capsule::new(self.p0 + offset, self.p1 + offset, self.radius)
    }

    /// Signed distance from a point to the capsule surface (negative inside).
    pub fn signed_distance(&self, p: &Point3<f64>) -> f64 {
        self.segment().distance_to_point(p) - self.radius
    }
}

/// Surface-to-surface separation of two capsules.
///
/// Returns the clamped distance (0 when they overlap) and the closest surface
/// points `(on a, on b)`. When the axes intersect the returned points coincide
/// on the axis.
pub fn capsule_capsule_distance(a: &Capsule, b: &Capsule) -> (f64, Point3<f64>, Point3<f64>) {
    let (pa, pb) = a.segment().closest_points(&b.segment());
    let axis = pb - pa;
    let centre_dist = axis.norm();
    let gap = centre_dist - a.radius - b.radius;
    if gap <= 0.0 || centre_dist <= f64::EPSILON {
        let mid = pa + axis * 0.5;
        return (0.0, mid, mid);
    }
    let dir = axis / centre_dist;
    (gap, pa + dir * a.radius, pb - dir * b.radius)
}

/// Distance from a point to a capsule surface, clamped at zero, and the closest
/// surface point.
pub fn point_capsule_distance(p: &Point3<f64>, c: &Capsule) -> (f64, Point3<f64>) {
    let (on_axis, _) = c.segment().closest_point(p);
    let v = p - on_axis;
    let d = v.norm();
    if d <= c.radius {
        return (0.0, *p);
    }
    (d - c.radius, on_axis + v * (c.radius / d))
}

/// An oriented box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedBox {
    pub center: Point3<f64>,
    pub half_extents: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

/// A ray with a unit direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Point3<f64>,
    pub dir: UnitVector3<f64>,
}

impl Ray {
    pub fn new(origin: Point3<f64>, dir: UnitVector3<f64>) -> Self {
        Self { origin, dir }
    }

    pub fn at(&self, t: f64) -> Point3<f64> {
        self.origin + self.dir.into_inner() * t
    }
}

pub fn ray_sphere(ray: &Ray, center: &Point3<f64>, radius: f64) -> Option<f64> {
    let oc = ray.origin - center;
    let c = oc.norm_squared() - radius * radius;
    if c <= 0.0 {
        return Some(0.0);
    }
    let b = oc.dot(&ray.dir);
    if b >= 0.0 {
        return None;
    }
    let h = b * b - c;
    if h < 0.0 {
        return None;
    }
    Some(-b - h.sqrt())
}

fn ray_cylinder_body(ray: &Ray, cap: &Capsule) -> Option<f64> {
    let axis = cap.p1 - cap.p0;
    let len = axis.norm();
    if len <= f64::EPSILON {
        return None;
    }
    let u = axis / len;
    let d = ray.dir.into_inner();
    let oc = ray.origin - cap.p0;
    let d_perp = d - u * d.dot(&u);
    let oc_perp = oc - u * oc.dot(&u);
    let a = d_perp.norm_squared();
    if a <= 1e-18 {
        return None;
    }
    let b = oc_perp.dot(&d_perp);
    let c = oc_perp.norm_squared() - cap.radius * cap.radius;
    let h = b * b - a * c;
    if h < 0.0 {
        return None;
    }
    let t = (-b - h.sqrt()) / a;
    if t < 0.0 {
        return None;
    }
    let y = (oc + d * t).dot(&u);
    (0.0..=len).contains(&y).then_some(t)
}

pub fn ray_capsule(ray: &Ray, cap: &Capsule) -> Option<f64> {
    if cap.signed_distance(&ray.origin) <= 0.0 {
        return Some(0.0);
    }
    // Outside a convex union: first entry is the earliest component entry.
    [
        ray_cylinder_body(ray, cap),
        ray_sphere(ray, &cap.p0, cap.radius),
        ray_sphere(ray, &cap.p1, cap.radius),
    ]
    .into_iter()
    .flatten()
    .min_by(f64::total_cmp)
}

pub fn ray_box(ray: &Ray, b: &OrientedBox) -> Option<f64> {
    let inv = b.orientation.inverse();
    let o = inv * (ray.origin - b.center);
    let d = inv * ray.dir.into_inner();
    let mut t_min = f64::NEG_INFINITY;
    let mut t_max = f64::INFINITY;
    for k in 0..3 {
        let h = b.half_extents[k];
        if d[k].abs() < 1e-15 {
            if o[k].abs() > h {
                return None;
            }
            continue;
        }
        let t1 = (-h - o[k]) / d[k];
        let t2 = (h - o[k]) / d[k];
        t_min = t_min.max(t1.min(t2));
        t_max = t_max.min(t1.max(t2));
        if t_min > t_max {
            return None;
        }
    }
    if t_max < 0.0 {
        return None;
    }
    Some(t_min.max(0.0))
}
