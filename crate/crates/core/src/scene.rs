//! World model: tagged primitives, analytic ray casting, the ground-truth and
//! link-centre distance queries, and the walking human avatar.

use std::f64::consts::TAU;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{Point3, Rotation2, UnitVector3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, Capsule, OrientedBox, Ray};
use crate::kinematics::RingId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tag {
    /// Robot links and anything attached to them.
    Robot,
    /// Stationary objects of the restricted workspace (tables, floor, stand).
    Restricted,
    /// Humans and other moving obstacles.
    Dynamic,
}

impl Tag {
    /// Objects the self-occlusion mask is allowed to filter out.
    pub fn is_self(self) -> bool {
        matches!(self, Tag::Robot | Tag::Restricted)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Sphere { center: Point3<f64>, radius: f64 },
    Capsule(Capsule),
    Box(OrientedBox),
}

impl Shape {
    fn is_valid(&self) -> bool {
        match self {
            Shape::Sphere { radius, .. } => *radius > 0.0,
            Shape::Capsule(c) => c.radius > 0.0,
            Shape::Box(b) => b.half_extents.iter().all(|h| *h > 0.0),
        }
    }

    pub fn ray_cast(&self, ray: &Ray) -> Option<f64> {
        match self {
            Shape::Sphere { center, radius } => geometry::ray_sphere(ray, center, *radius),
            Shape::Capsule(c) => geometry::ray_capsule(ray, c),
            Shape::Box(b) => geometry::ray_box(ray, b),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenePrimitive {
    pub shape: Shape,
    pub tag: Tag,
    pub id: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    pub distance: f64,
    pub id: u32,
    pub tag: Tag,
}

/// Immutable snapshot of the world at one tick.
#[derive(Debug, Clone, Default)]
pub struct Scene {
    primitives: Vec<ScenePrimitive>,
}

impl Scene {
    pub fn new(primitives: Vec<ScenePrimitive>) -> Result<Self> {
        let mut ids: Vec<u32> = primitives.iter().map(|p| p.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Contract("primitive ids must be unique".into()));
        }
        if let Some(p) = primitives.iter().find(|p| !p.shape.is_valid()) {
            return Err(Error::Contract(format!("primitive {} has a non-positive radius or extent", p.id)));
        }
        Ok(Self { primitives })
    }

    /// Builds a snapshot from the three tagged groups, assigning ids in order.
    pub fn assemble(restricted: &[Shape], robot: &[Capsule], dynamic: &[Capsule]) -> Self {
        let mut primitives = Vec::with_capacity(restricted.len() + robot.len() + dynamic.len());
        let mut id = 0u32;
        let mut push = |shape: Shape, tag: Tag| {
            primitives.push(ScenePrimitive { shape, tag, id });
            id += 1;
        };
        for s in restricted {
            push(*s, Tag::Restricted);
        }
        for c in robot {
            push(Shape::Capsule(*c), Tag::Robot);
        }
        for c in dynamic {
            push(Shape::Capsule(*c), Tag::Dynamic);
        }
        Self { primitives }
    }

    pub fn primitives(&self) -> &[ScenePrimitive] {
        &self.primitives
    }

    pub fn tag_of(&self, id: u32) -> Option<Tag> {
        self.primitives.iter().find(|p| p.id == id).map(|p| p.tag)
    }

    /// Nearest hit within `[0, max_range]`, checking the direction contract.
    pub fn ray_cast(&self, origin: Point3<f64>, direction: Vector3<f64>, max_range: f64) -> Result<Option<RayHit>> {
        if ((direction.norm() - 1.0).abs()) > 1e-9 {
            return Err(Error::Contract(format!(
                "ray direction must be a unit vector (norm {})",
                direction.norm()
            )));
        }
        if !(max_range > 0.0) {
            return Err(Error::Contract("max_range must be positive".into()));
        }
        let ray = Ray::new(origin, UnitVector3::new_unchecked(direction));
        Ok(self.cast(&ray, max_range, |_| true))
    }

    /// Nearest hit among primitives whose tag passes `filter`. Ties go to
    /// the lowest id.
    pub fn cast(&self, ray: &Ray, max_range: f64, filter: impl Fn(Tag) -> bool) -> Option<RayHit> {
        let mut best: Option<RayHit> = None;
        for p in &self.primitives {
            if !filter(p.tag) {
                continue;
            }
            if let Some(t) = p.shape.ray_cast(ray) {
                if t <= max_range && best.is_none_or(|b| t < b.distance) {
                    best = Some(RayHit {
                        distance: t,
                        id: p.id,
                        tag: p.tag,
                    });
                }
            }
        }
        best
    }
}

/// Minimum separation between two capsule sets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinDistance {
    pub distance: f64,
    /// From the robot closest point to the human closest point.
    pub vector: Vector3<f64>,
    pub robot_point: Point3<f64>,
    pub human_point: Point3<f64>,
}

/// Surface-to-surface minimum distance between robot and human capsules.
pub fn ground_truth_min_distance(robot: &[Capsule], human: &[Capsule]) -> Result<MinDistance> {
    if robot.is_empty() || human.is_empty() {
        return Err(Error::Contract("ground truth needs non-empty capsule sets".into()));
    }
    let mut best: Option<MinDistance> = None;
    for r in robot {
        for h in human {
            let (d, pr, ph) = geometry::capsule_capsule_distance(r, h);
            if best.is_none_or(|b| d < b.distance) {
                best = Some(MinDistance {
                    distance: d,
                    vector: ph - pr,
                    robot_point: pr,
                    human_point: ph,
                });
            }
        }
    }
    Ok(best.expect("non-empty sets"))
}

/// Link-centre distance: per ring, the vector from its centre to the nearest
/// human surface point; the overall minimum and which ring owns it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdealDistance {
    pub per_ring: [Vector3<f64>; 3],
    pub owner: RingId,
}

impl IdealDistance {
    pub fn vector(&self) -> Vector3<f64> {
        self.per_ring[self.owner.index()]
    }

    pub fn distance(&self) -> f64 {
        self.vector().norm()
    }
}

pub fn ideal_min_distance(ring_centers: &[Point3<f64>; 3], human: &[Capsule]) -> Result<IdealDistance> {
    if human.is_empty() {
        return Err(Error::Contract("ideal distance needs at least one human capsule".into()));
    }
    let per_ring = ring_centers.map(|c| {
        let mut best = (f64::INFINITY, Vector3::zeros());
        for h in human {
            let (d, surface) = geometry::point_capsule_distance(&c, h);
            if d < best.0 {
                best = (d, surface - c);
            }
        }
        best.1
    });
    // Strict comparison keeps the lowest ring index on ties.
    let mut owner = RingId::Base;
    for ring in RingId::ALL {
        if per_ring[ring.index()].norm() < per_ring[owner.index()].norm() {
            owner = ring;
        }
    }
    Ok(IdealDistance { per_ring, owner })
}

/// Planar figure-eight (lemniscate of Bernoulli) walked at constant parameter
/// rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lemniscate {
    /// Path centre on the floor (x, y), meters.
    pub center: [f64; 2],
    /// Half-width of the figure-eight along its long axis, meters.
    pub scale: f64,
    /// Seconds per full loop.
    pub period: f64,
    /// Orientation of the long axis about world z, radians.
    pub heading: f64,
    /// Time offset into the loop, seconds.
    #[serde(default)]
    pub phase: f64,
}

impl Lemniscate {
    pub fn evaluate(&self, t: f64) -> (Point3<f64>, Vector3<f64>) {
        let omega = TAU / self.period;
        let th = omega * (t + self.phase);
        let (s, c) = th.sin_cos();
        let d = 1.0 + s * s;
        let k = self.scale;
        let local = Vector2::new(k * c / d, k * s * c / d);
        let dx = -k * s * (3.0 - s * s) / (d * d);
        let (s2, c2) = (2.0 * th).sin_cos();
        let dy = k * (c2 * d - 0.5 * s2 * s2) / (d * d);
        let rot = Rotation2::new(self.heading);
        let p = rot * local;
        let v = rot * Vector2::new(dx, dy) * omega;
        (
            Point3::new(self.center[0] + p.x, self.center[1] + p.y, 0.0),
            Vector3::new(v.x, v.y, 0.0),
        )
    }

    /// Peak speed over one loop, sampled.
    pub fn peak_speed(&self) -> f64 {
        (0..4000)
            .map(|i| self.evaluate(self.period * i as f64 / 4000.0).1.norm())
            .fold(0.0, f64::max)
    }
}

/// A recorded root trajectory, linearly interpolated.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    samples: Vec<(f64, Point3<f64>)>,
}

impl Trajectory {
    pub fn new(samples: Vec<(f64, Point3<f64>)>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Contract("trajectory needs at least one sample".into()));
        }
        if samples.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::Contract("trajectory times must be strictly increasing".into()));
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[(f64, Point3<f64>)] {
        &self.samples
    }

    pub fn duration(&self) -> f64 {
        self.samples.last().unwrap().0
    }

    /// Position and velocity at `t`. Outside the recording the endpoint is
    /// held with zero velocity.
    pub fn evaluate(&self, t: f64) -> (Point3<f64>, Vector3<f64>) {
        let first = self.samples[0];
        let last = *self.samples.last().unwrap();
        if t <= first.0 {
            return (first.1, Vector3::zeros());
        }
        if t >= last.0 {
            return (last.1, Vector3::zeros());
        }
        let k = self.samples.partition_point(|s| s.0 <= t) - 1;
        let (t0, p0) = self.samples[k];
        let (t1, p1) = self.samples[k + 1];
        let v = (p1 - p0) / (t1 - t0);
        (p0 + (p1 - p0) * ((t - t0) / (t1 - t0)), v)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t", "x", "y", "z"])?;
        for (t, p) in &self.samples {
            out.write_record([t.to_string(), p.x.to_string(), p.y.to_string(), p.z.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(r);
        let header = rdr.headers()?.clone();
        if header.iter().map(str::trim).collect::<Vec<_>>() != ["t", "x", "y", "z"] {
            return Err(Error::Trajectory {
                line: 1,
                message: "expected header t,x,y,z".into(),
            });
        }
        let mut samples = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| Error::Trajectory {
                line,
                message: e.to_string(),
            })?;
            if rec.len() != 4 {
                return Err(Error::Trajectory {
                    line,
                    message: format!("expected 4 fields, found {}", rec.len()),
                });
            }
            let mut v = [0.0f64; 4];
            for (k, field) in rec.iter().enumerate() {
                v[k] = field.trim().parse().map_err(|_| Error::Trajectory {
                    line,
                    message: format!("field {} is not a number: {field:?}", k + 1),
                })?;
                if !v[k].is_finite() {
                    return Err(Error::Trajectory {
                        line,
                        message: format!("field {} is not finite", k + 1),
                    });
                }
            }
            if let Some((prev, _)) = samples.last() {
                if !(v[0] > *prev) {
                    return Err(Error::Trajectory {
                        line,
                        message: "time is not strictly increasing".into(),
                    });
                }
            }
            samples.push((v[0], Point3::new(v[1], v[2], v[3])));
        }
        if samples.len() < 2 {
            return Err(Error::Trajectory {
                line: samples.len() + 1,
                message: "trajectory needs at least two samples".into(),
            });
        }
        Ok(Self { samples })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AvatarMotion {
    Parametric(Lemniscate),
    Replay(Trajectory),
}

/// A rigid capsule body whose root follows a path on the floor.
#[derive(Debug, Clone, PartialEq)]
pub struct HumanAvatar {
    /// Body capsules relative to the root.
    pub capsules: Vec<Capsule>,
    pub motion: AvatarMotion,
}

impl HumanAvatar {
    pub fn new(capsules: Vec<Capsule>, motion: AvatarMotion) -> Result<Self> {
        if capsules.is_empty() {
            return Err(Error::Contract("avatar needs at least one capsule".into()));
        }
        Ok(Self { capsules, motion })
    }

    pub fn world_capsules(&self, root: &Point3<f64>) -> Vec<Capsule> {
        self.capsules.iter().map(|c| c.translated(&root.coords)).collect()
    }
}

/// Root position and velocity of the avatar at time `t`.
pub fn advance_avatar(avatar: &HumanAvatar, t: f64) -> (Point3<f64>, Vector3<f64>) {
    match &avatar.motion {
        AvatarMotion::Parametric(path) => path.evaluate(t),
        AvatarMotion::Replay(traj) => traj.evaluate(t),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn sphere(id: u32, x: f64, r: f64, tag: Tag) -> ScenePrimitive {
        ScenePrimitive {
            shape: Shape::Sphere {
                center: Point3::new(x, 0.0, 0.0),
                radius: r,
            },
            tag,
            id,
        }
    }

    #[test]
    fn axial_sphere_and_miss() {
        let scene = Scene::new(vec![sphere(1, 1.0, 0.2, Tag::Dynamic)]).unwrap();
        let hit = scene.ray_cast(Point3::origin(), Vector3::x(), 5.0).unwrap().unwrap();
        assert_abs_diff_eq!(hit.distance, 0.8, epsilon = 1e-12);
        assert_eq!(hit.id, 1);
        assert!(scene.ray_cast(Point3::origin(), -Vector3::x(), 5.0).unwrap().is_none());
        // beyond range
        assert!(scene.ray_cast(Point3::origin(), Vector3::x(), 0.5).unwrap().is_none());
    }

    #[test]
    fn ray_contract() {
        let scene = Scene::default();
        assert!(scene.ray_cast(Point3::origin(), Vector3::new(1.0, 1.0, 0.0), 1.0).is_err());
        assert!(scene.ray_cast(Point3::origin(), Vector3::x(), 0.0).is_err());
    }

    #[test]
    fn duplicate_ids_rejected() {
        assert!(Scene::new(vec![sphere(1, 1.0, 0.2, Tag::Dynamic), sphere(1, 2.0, 0.2, Tag::Robot)]).is_err());
        assert!(Scene::new(vec![sphere(1, 1.0, 0.0, Tag::Dynamic)]).is_err());
    }

    #[test]
    fn nearest_primitive_wins() {
        let scene = Scene::new(vec![sphere(1, 2.0, 0.2, Tag::Dynamic), sphere(2, 1.0, 0.2, Tag::Robot)]).unwrap();
        let hit = scene.ray_cast(Point3::origin(), Vector3::x(), 5.0).unwrap().unwrap();
        assert_eq!((hit.id, hit.tag), (2, Tag::Robot));
        let ray = Ray::new(Point3::origin(), Vector3::x_axis());
        let dyn_only = scene.cast(&ray, 5.0, |t| t == Tag::Dynamic).unwrap();
        assert_eq!(dyn_only.id, 1);
    }

    #[test]
    fn ground_truth_parallel_and_overlap() {
        let a = Capsule::new(Point3::new(0.0, 0.0, 0.0), Point3::new(0.0, 0.0, 1.0), 0.1);
        let b = Capsule::new(Point3::new(1.0, 0.0, 0.0), Point3::new(1.0, 0.0, 1.0), 0.2);
        let gt = ground_truth_min_distance(&[a], &[b]).unwrap();
        assert_abs_diff_eq!(gt.distance, 0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(gt.vector.norm(), 0.7, epsilon = 1e-12);
        assert!(gt.vector.x > 0.0);
        let c = b.translated(&Vector3::new(-0.8, 0.0, 0.0));
        assert_eq!(ground_truth_min_distance(&[a], &[c]).unwrap().distance, 0.0);
        assert!(ground_truth_min_distance(&[], &[c]).is_err());
    }

    #[test]
    fn ideal_owner_and_ties() {
        let centers = [Point3::new(0.0, 0.0, 0.0), Point3::new(0.0, 0.0, 1.0), Point3::new(2.0, 0.0, 0.0)];
        // sphere on the tool centre
        let on_tool = Capsule::new(centers[2], centers[2], 0.1);
        let ideal = ideal_min_distance(&centers, &[on_tool]).unwrap();
        assert_eq!(ideal.owner, RingId::Tool);
        assert_eq!(ideal.distance(), 0.0);
        // equidistant from base and tool
        let mid = Point3::new(1.0, 0.0, 0.0);
        let tie = Capsule::new(mid, mid, 0.2);
        let ideal = ideal_min_distance(&centers, &[tie]).unwrap();
        assert_eq!(ideal.owner, RingId::Base);
        assert_abs_diff_eq!(ideal.distance(), 0.8, epsilon = 1e-12);
    }

    #[test]
    fn lemniscate_anchor() {
        let path = Lemniscate {
            center: [0.5, 2.0],
            scale: 1.5,
            period: 10.0,
            heading: 0.0,
            phase: 0.0,
        };
        let (p, _) = path.evaluate(0.0);
        assert_abs_diff_eq!(p, Point3::new(2.0, 2.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn lemniscate_velocity_matches_finite_difference() {
        let path = Lemniscate {
            center: [0.0, 1.2],
            scale: 1.4,
            period: 9.0,
            heading: 0.7,
            phase: 1.3,
        };
        let h = 1e-6;
        for i in 0..50 {
            let t = 0.37 * i as f64;
            let (_, v) = path.evaluate(t);
            let fd = (path.evaluate(t + h).0 - path.evaluate(t - h).0) / (2.0 * h);
            assert!((v - fd).norm() < 1e-4, "t={t}: {v} vs {fd}");
        }
    }

    #[test]
    fn replay_interpolates_and_clamps() {
        let traj = Trajectory::new(vec![
            (0.0, Point3::new(0.0, 0.0, 0.0)),
            (1.0, Point3::new(1.0, 0.0, 0.0)),
            (2.0, Point3::new(1.0, 2.0, 0.0)),
        ])
        .unwrap();
        let (p, v) = traj.evaluate(0.5);
        assert_abs_diff_eq!(p, Point3::new(0.5, 0.0, 0.0), epsilon = 1e-12);
        assert_abs_diff_eq!(v, Vector3::new(1.0, 0.0, 0.0), epsilon = 1e-12);
        assert_eq!(traj.evaluate(1.0).0, Point3::new(1.0, 0.0, 0.0));
        assert_eq!(traj.evaluate(5.0), (Point3::new(1.0, 2.0, 0.0), Vector3::zeros()));
        assert_eq!(traj.evaluate(-1.0), (Point3::origin(), Vector3::zeros()));
    }

    #[test]
    fn constant_replay_has_zero_velocity() {
        let p = Point3::new(1.0, 1.0, 0.0);
        let traj = Trajectory::new(vec![(0.0, p), (1.0, p), (2.0, p)]).unwrap();
        for t in [0.0, 0.3, 1.5, 2.0] {
            assert_eq!(traj.evaluate(t).1, Vector3::zeros());
        }
    }

    #[test]
    fn trajectory_csv_errors_name_the_line() {
        let ok = "t,x,y,z\n0,0,0,0\n0.5,1,0,0\n";
        assert_eq!(Trajectory::read_csv(ok.as_bytes()).unwrap().samples().len(), 2);
        let truncated = "t,x,y,z\n0,0,0,0\n0.5,1,0,0\n1.0,2";
        match Trajectory::read_csv(truncated.as_bytes()) {
            Err(Error::Trajectory { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
        let backwards = "t,x,y,z\n0,0,0,0\n0,1,0,0\n";
        assert!(matches!(
            Trajectory::read_csv(backwards.as_bytes()),
            Err(Error::Trajectory { line: 3, .. })
        ));
        let junk = "t,x,y,z\n0,0,zz,0\n1,0,0,0\n";
        assert!(matches!(
            Trajectory::read_csv(junk.as_bytes()),
            Err(Error::Trajectory { line: 2, .. })
        ));
    }
}
