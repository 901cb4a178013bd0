//! Floor-level planar scanning lidar at the robot base.

use std::f64::consts::TAU;

use nalgebra::{Isometry3, Point3, UnitVector3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Ray;
use crate::scene::{Scene, Tag};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LidarParams {
    /// Scan-plane origin in world coordinates.
    pub position: [f64; 3],
    pub angular_resolution_deg: f64,
    pub range_max: f64,
    /// Workspace radius subtracted from far returns.
    pub r_o: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lidar2D {
    /// Scan frame; beams lie in its xy-plane.
    pub pose: Isometry3<f64>,
    pub angular_resolution: f64,
    pub range_max: f64,
    pub r_o: f64,
    beams: usize,
}

impl Lidar2D {
    pub fn new(params: &LidarParams) -> Result<Self> {
        let res = params.angular_resolution_deg.to_radians();
        if !(res > 0.0) {
            return Err(Error::Contract("lidar angular resolution must be > 0".into()));
        }
        if !(params.r_o > 0.0) || !(params.range_max > 0.0) {
            return Err(Error::Contract("lidar r_o and range_max must be > 0".into()));
        }
        let [x, y, z] = params.position;
        Ok(Self {
            pose: Isometry3::translation(x, y, z),
            angular_resolution: res,
            range_max: params.range_max,
            r_o: params.r_o,
            beams: (TAU / res).round().max(1.0) as usize,
        })
    }

    pub fn beams(&self) -> usize {
        self.beams
    }

    pub fn origin(&self) -> Point3<f64> {
        Point3::from(self.pose.translation.vector)
    }

    fn beam_direction(&self, i: usize) -> Vector3<f64> {
        let a = i as f64 * self.angular_resolution;
        self.pose.rotation * Vector3::new(a.cos(), a.sin(), 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LidarReturn {
    pub angle: f64,
    pub range: f64,
    /// Whether the beam hit anything within range.
    pub hit: bool,
}

pub fn scan(lidar: &Lidar2D, scene: &Scene) -> Vec<LidarReturn> {
    let origin = lidar.origin();
    (0..lidar.beams)
        .map(|i| {
            let ray = Ray::new(origin, UnitVector3::new_unchecked(lidar.beam_direction(i)));
            let hit = scene.cast(&ray, lidar.range_max, |t| t == Tag::Dynamic);
            LidarReturn {
                angle: i as f64 * lidar.angular_resolution,
                range: hit.map_or(lidar.range_max, |h| h.distance),
                hit: hit.is_some(),
            }
        })
        .collect()
}

/// Workspace-offset rule: returns beyond `r_o` have it subtracted.
pub fn offset_distance(d_lidar: f64, r_o: f64) -> f64 {
    if d_lidar > r_o {
        d_lidar - r_o
    } else {
        d_lidar
    }
}

/// Nearest return of a scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LidarDistance {
    pub d_lidar: f64,
    pub distance: f64,
    /// World-frame unit vector from the lidar towards the return.
    pub direction: Vector3<f64>,
}

/// `None` when the scan has no returns. Ties go to the lowest beam angle.
pub fn lidar_min_distance(lidar: &Lidar2D, returns: &[LidarReturn]) -> Option<LidarDistance> {
    let mut best: Option<(usize, f64)> = None;
    for (i, r) in returns.iter().enumerate() {
        if r.hit && best.is_none_or(|(_, b)| r.range < b) {
            best = Some((i, r.range));
        }
    }
    best.map(|(i, d)| LidarDistance {
        d_lidar: d,
        distance: offset_distance(d, lidar.r_o),
        direction: lidar.pose.rotation * Vector3::new(returns[i].angle.cos(), returns[i].angle.sin(), 0.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Capsule;
    use approx::assert_abs_diff_eq;

    fn lidar() -> Lidar2D {
        Lidar2D::new(&LidarParams {
            position: [0.0, 0.0, 0.2],
            angular_resolution_deg: 0.5,
            range_max: 10.0,
            r_o: 0.82,
        })
        .unwrap()
    }

    fn leg_at(x: f64, y: f64, z0: f64, z1: f64) -> Scene {
        Scene::assemble(&[], &[], &[Capsule::new(Point3::new(x, y, z0), Point3::new(x, y, z1), 0.07)])
    }

    #[test]
    fn beam_count() {
        assert_eq!(lidar().beams(), 720);
    }

    #[test]
    fn empty_scene_reads_max() {
        let l = lidar();
        let s = scan(&l, &Scene::default());
        assert!(s.iter().all(|r| r.range == 10.0 && !r.hit));
        assert!(lidar_min_distance(&l, &s).is_none());
    }

    #[test]
    fn leg_straight_ahead() {
        let l = lidar();
        let s = scan(&l, &leg_at(2.0, 0.0, 0.0, 0.9));
        let d = lidar_min_distance(&l, &s).unwrap();
        assert_abs_diff_eq!(d.d_lidar, 1.93, epsilon = 1e-12);
        assert_abs_diff_eq!(d.direction, Vector3::x(), epsilon = 1e-12);
        assert_abs_diff_eq!(d.distance, 1.93 - 0.82, epsilon = 1e-12);
    }

    #[test]
    fn raised_human_is_invisible() {
        let l = lidar();
        let s = scan(&l, &leg_at(2.0, 0.0, 0.5, 1.5));
        assert!(lidar_min_distance(&l, &s).is_none());
    }

    #[test]
    fn robot_links_are_invisible() {
        let l = lidar();
        let robot = Capsule::new(Point3::new(0.5, 0.0, 0.0), Point3::new(0.5, 0.0, 1.0), 0.1);
        let s = scan(&l, &Scene::assemble(&[], &[robot], &[]));
        assert!(s.iter().all(|r| !r.hit));
    }

    #[test]
    fn offset_rule() {
        assert_abs_diff_eq!(offset_distance(1.50, 0.82), 0.68, epsilon = 1e-12);
        assert_eq!(offset_distance(0.70, 0.82), 0.70);
        assert_eq!(offset_distance(0.82, 0.82), 0.82);
    }
}
