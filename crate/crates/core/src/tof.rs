//! Simulated eight-sensor time-of-flight ring.
//!
//! Each sensor is a single-return ranger with a conical field of view. The
//! cone is sampled with one centre ray plus `cone_rays` rays on the cone
//! boundary; a reading is the nearest return over the cone. Readings that the
//! ray-cast model attributes to the robot itself or to the restricted
//! workspace are masked out before the ring minimum is taken.

use std::f64::consts::TAU;

use nalgebra::{Isometry3, Point3, UnitQuaternion, UnitVector3, Vector3};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Ray;
use crate::kinematics::RingId;
use crate::scene::{RayHit, Scene, Tag};

pub const SENSORS_PER_RING: usize = 8;

/// Ring hardware parameters shared by the three rings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToFParams {
    /// Full field-of-view angle, degrees.
    pub fov_deg: f64,
    pub range_min: f64,
    pub range_max: f64,
    /// Range noise standard deviation, meters.
    pub sigma: f64,
    /// Rays on the cone boundary per sensor (plus one centre ray).
    pub cone_rays: usize,
    /// Radius of the ring: distance from the link axis to each sensor.
    pub ring_radius: f64,
}

#[derive(Debug, Clone)]
pub struct ToFRing {
    pub link: RingId,
    /// Ring-centre frame to sensor frame, x-axis pointing outward.
    pub sensor_transforms: [Isometry3<f64>; SENSORS_PER_RING],
    pub fov_half_angle: f64,
    pub range_min: f64,
    pub range_max: f64,
    pub sigma: f64,
    pub ring_radius: f64,
    /// Per-sensor cone ray directions in the sensor frame; index 0 is the axis.
    cone: Vec<Vector3<f64>>,
}

impl ToFRing {
    pub fn new(link: RingId, params: &ToFParams) -> Result<Self> {
        if !(params.range_min > 0.0 && params.range_min < params.range_max) {
            return Err(Error::Contract("ToF range must satisfy 0 < range_min < range_max".into()));
        }
        if !(params.sigma >= 0.0) {
            return Err(Error::Contract("ToF sigma must be >= 0".into()));
        }
        if !(params.ring_radius > 0.0) {
            return Err(Error::Contract("ring radius must be > 0".into()));
        }
        let half = params.fov_deg.to_radians() / 2.0;
        let sensor_transforms = std::array::from_fn(|j| {
            let yaw = TAU * j as f64 / SENSORS_PER_RING as f64;
            let rot = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw);
            Isometry3::from_parts((rot * Vector3::new(params.ring_radius, 0.0, 0.0)).into(), rot)
        });
        let mut cone = vec![Vector3::x()];
        for k in 0..params.cone_rays {
            let phi = TAU * k as f64 / params.cone_rays as f64;
            cone.push(Vector3::new(half.cos(), half.sin() * phi.cos(), half.sin() * phi.sin()));
        }
        Ok(Self {
            link,
            sensor_transforms,
            fov_half_angle: half,
            range_min: params.range_min,
            range_max: params.range_max,
            sigma: params.sigma,
            ring_radius: params.ring_radius,
            cone,
        })
    }

    pub fn rays_per_sensor(&self) -> usize {
        self.cone.len()
    }

    /// World-frame rays of sensor `j` for a ring-centre pose.
    fn sensor_rays<'a>(&'a self, ring_pose: &Isometry3<f64>, j: usize) -> impl Iterator<Item = Ray> + 'a {
        let frame = ring_pose * self.sensor_transforms[j];
        let origin = Point3::from(frame.translation.vector);
        self.cone
            .iter()
            .map(move |d| Ray::new(origin, UnitVector3::new_unchecked(frame.rotation * d)))
    }

    /// Nearest return over the cone of sensor `j` among tags passing `filter`.
    fn cone_cast(&self, scene: &Scene, ring_pose: &Isometry3<f64>, j: usize, filter: impl Fn(Tag) -> bool + Copy) -> Option<RayHit> {
        let mut best: Option<RayHit> = None;
        for ray in self.sensor_rays(ring_pose, j) {
            if let Some(hit) = scene.cast(&ray, self.range_max, filter) {
                if best.is_none_or(|b| hit.distance < b.distance) {
                    best = Some(hit);
                }
            }
        }
        best
    }

    pub fn clamp_range(&self, d: f64) -> f64 {
        d.clamp(self.range_min, self.range_max)
    }

    /// Outward axis of sensor `j` in world coordinates.
    pub fn sensor_axis(&self, ring_pose: &Isometry3<f64>, j: usize) -> Vector3<f64> {
        (ring_pose.rotation * self.sensor_transforms[j].rotation) * Vector3::x()
    }
}

/// Raw ranges of one ring sample plus what each sensor actually saw.
#[derive(Debug, Clone, PartialEq)]
pub struct RawReadings {
    pub distances: [f64; SENSORS_PER_RING],
    pub hits: [Option<RayHit>; SENSORS_PER_RING],
}

/// Zero-mean Gaussian truncated to +-3 sigma by rejection.
fn truncated_noise<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    loop {
        let z: f64 = StandardNormal.sample(rng);
        if z.abs() <= 3.0 {
            return z * sigma;
        }
    }
}

pub fn sample_ring<R: Rng + ?Sized>(ring: &ToFRing, scene: &Scene, ring_pose: &Isometry3<f64>, rng: &mut R) -> RawReadings {
    let mut distances = [ring.range_max; SENSORS_PER_RING];
    let mut hits = [None; SENSORS_PER_RING];
    for j in 0..SENSORS_PER_RING {
        if let Some(hit) = ring.cone_cast(scene, ring_pose, j, |_| true) {
            distances[j] = ring.clamp_range(hit.distance + truncated_noise(rng, ring.sigma));
            hits[j] = Some(hit);
        }
    }
    RawReadings { distances, hits }
}

/// Self-occlusion mask (`true` keeps the reading) and the masked ranges.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskedReadings {
    pub mask: [bool; SENSORS_PER_RING],
    /// `raw * mask`, elementwise.
    pub masked: [f64; SENSORS_PER_RING],
}

/// Ray-casts every sensor cone against the robot and restricted workspace
/// only and drops readings that agree with that prediction within 3 sigma.
pub fn self_occlusion_mask(ring: &ToFRing, raw: &RawReadings, scene: &Scene, ring_pose: &Isometry3<f64>) -> MaskedReadings {
    let window = (3.0 * ring.sigma).max(1e-6);
    let mut mask = [true; SENSORS_PER_RING];
    let mut masked = raw.distances;
    for j in 0..SENSORS_PER_RING {
        if let Some(hit) = ring.cone_cast(scene, ring_pose, j, Tag::is_self) {
            let predicted = ring.clamp_range(hit.distance);
            if (raw.distances[j] - predicted).abs() <= window {
                mask[j] = false;
                masked[j] = 0.0;
            }
        }
    }
    MaskedReadings { mask, masked }
}

/// Ring minimum distance: either nothing in range, or the nearest unmasked
/// return.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RingDistance {
    Clear,
    Detected {
        d_min: f64,
        sensor: usize,
        /// Ring centre to the detected point, world frame.
        vector: Vector3<f64>,
        /// `ring_radius + d_min`.
        norm: f64,
    },
}

impl RingDistance {
    pub fn d_min(&self) -> Option<f64> {
        match self {
            RingDistance::Clear => None,
            RingDistance::Detected { d_min, .. } => Some(*d_min),
        }
    }

    pub fn norm(&self) -> Option<f64> {
        match self {
            RingDistance::Clear => None,
            RingDistance::Detected { norm, .. } => Some(*norm),
        }
    }
}

pub fn ring_min_distance(ring: &ToFRing, readings: &MaskedReadings, raw: &RawReadings, ring_pose: &Isometry3<f64>) -> RingDistance {
    let mut best: Option<(usize, f64)> = None;
    for j in 0..SENSORS_PER_RING {
        let d = raw.distances[j];
        if !readings.mask[j] || d >= ring.range_max {
            continue;
        }
        if best.is_none_or(|(_, b)| d < b) {
            best = Some((j, d));
        }
    }
    match best {
        None => RingDistance::Clear,
        Some((sensor, d_min)) => {
            let norm = ring.ring_radius + d_min;
            RingDistance::Detected {
                d_min,
                sensor,
                vector: ring.sensor_axis(ring_pose, sensor) * norm,
                norm,
            }
        }
    }
}

/// Directed speed from consecutive ring minima, positive when approaching.
pub fn directed_speed_from_ring(now: Option<f64>, prev: Option<f64>, dt: f64, k_max: f64) -> Result<f64> {
    if !(dt > 0.0) {
        return Err(Error::Contract(format!("finite-difference step must be positive, got {dt}")));
    }
    Ok(match (now, prev) {
        (Some(n), Some(p)) => (-(n - p) / dt).clamp(-k_max, k_max),
        _ => 0.0,
    })
}

/// One complete ring measurement for a tick.
#[derive(Debug, Clone, PartialEq)]
pub struct RingReading {
    pub t: f64,
    pub raw: RawReadings,
    pub masked: MaskedReadings,
    pub distance: RingDistance,
}

impl RingReading {
    /// Readings that hit the robot or restricted workspace but were kept.
    pub fn unmasked_self_hits(&self) -> usize {
        (0..SENSORS_PER_RING)
            .filter(|&j| self.masked.mask[j] && self.raw.hits[j].is_some_and(|h| h.tag.is_self()))
            .count()
    }

    pub fn self_hits(&self) -> usize {
        self.raw.hits.iter().filter(|h| h.is_some_and(|h| h.tag.is_self())).count()
    }

    pub fn mask_bits(&self) -> u8 {
        (0..SENSORS_PER_RING).fold(0u8, |acc, j| acc | (u8::from(self.masked.mask[j]) << j))
    }
}

pub fn measure_ring<R: Rng + ?Sized>(ring: &ToFRing, scene: &Scene, ring_pose: &Isometry3<f64>, t: f64, rng: &mut R) -> RingReading {
    let raw = sample_ring(ring, scene, ring_pose, rng);
    let masked = self_occlusion_mask(ring, &raw, scene, ring_pose);
    let distance = ring_min_distance(ring, &masked, &raw, ring_pose);
    RingReading { t, raw, masked, distance }
}
