//! Serial-chain forward kinematics and point velocities.
//!
//! A chain is a list of revolute joints. Joint `i` sits at a fixed transform
//! from the frame of link `i - 1` (the world for the first joint) and rotates
//! about its own axis; link `i`'s frame is the frame after that rotation.
//! Link velocities come from the geometric Jacobian: every preceding joint
//! contributes `qdot_j * axis_j x (p - o_j)`.

use std::fmt;

use nalgebra::{Isometry3, Point3, UnitQuaternion, UnitVector3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Capsule;

/// Ring owner. Ordering (base < elbow < tool) is the tie-break order used
/// everywhere a ring has to be picked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RingId {
    Base,
    Elbow,
    Tool,
}

impl RingId {
    pub const ALL: [RingId; 3] = [RingId::Base, RingId::Elbow, RingId::Tool];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            RingId::Base => "base",
            RingId::Elbow => "elbow",
            RingId::Tool => "tool",
        }
    }
}

impl fmt::Display for RingId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    /// Transform from the parent link frame to the joint frame.
    pub origin: Isometry3<f64>,
    /// Rotation axis in the joint frame.
    pub axis: UnitVector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RingMount {
    pub link: usize,
    /// Link frame to ring-centre frame. The ring axis is the frame's z.
    pub transform: Isometry3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KinematicChain {
    joints: Vec<Joint>,
    links: Vec<Capsule>,
    ring_mounts: [RingMount; 3],
    tcp_offset: Isometry3<f64>,
}

/// Joint state at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub t: f64,
    pub q: Vec<f64>,
    pub qdot: Vec<f64>,
    pub qddot: Vec<f64>,
    pub tcp_velocity: Vector3<f64>,
}

/// Cached world-frame quantities for one configuration `q`.
#[derive(Debug, Clone)]
pub struct ChainPose {
    /// World pose of each link frame.
    pub links: Vec<Isometry3<f64>>,
    joint_origins: Vec<Point3<f64>>,
    joint_axes: Vec<Vector3<f64>>,
    pub tcp: Isometry3<f64>,
}

/// Position and velocity of one ring centre.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RingKinematics {
    pub ring: RingId,
    /// World pose of the ring-centre frame.
    pub pose: Isometry3<f64>,
    pub position: Point3<f64>,
    pub velocity: Vector3<f64>,
}

impl KinematicChain {
    pub fn new(joints: Vec<Joint>, links: Vec<Capsule>, ring_mounts: [RingMount; 3], tcp_offset: Isometry3<f64>) -> Result<Self> {
        if joints.is_empty() {
            return Err(Error::Contract("chain needs at least one joint".into()));
        }
        if links.len() != joints.len() {
            return Err(Error::Dimension {
                expected: joints.len(),
                got: links.len(),
            });
        }
        for (i, j) in joints.iter().enumerate() {
            if (j.axis.norm() - 1.0).abs() > 1e-9 {
                return Err(Error::Contract(format!("joint {i} axis is not a unit vector")));
            }
        }
        if let Some(i) = links.iter().position(|c| !(c.radius > 0.0)) {
            return Err(Error::Contract(format!("link {i} capsule radius must be > 0")));
        }
        if let Some(m) = ring_mounts.iter().find(|m| m.link >= joints.len()) {
            return Err(Error::Contract(format!(
                "ring mount refers to link {} but the chain has {} links",
                m.link,
                joints.len()
            )));
        }
        Ok(Self {
            joints,
            links,
            ring_mounts,
            tcp_offset,
        })
    }

    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn link_geometry(&self) -> &[Capsule] {
        &self.links
    }

    pub fn ring_mount(&self, ring: RingId) -> &RingMount {
        &self.ring_mounts[ring.index()]
    }

    pub fn tcp_offset(&self) -> &Isometry3<f64> {
        &self.tcp_offset
    }

    fn check_len(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.dof() {
            return Err(Error::Dimension {
                expected: self.dof(),
                got: v.len(),
            });
        }
        Ok(())
    }

    pub fn pose(&self, q: &[f64]) -> Result<ChainPose> {
        self.check_len(q)?;
        let n = self.dof();
        let mut links = Vec::with_capacity(n);
        let mut joint_origins = Vec::with_capacity(n);
        let mut joint_axes = Vec::with_capacity(n);
        let mut parent = Isometry3::identity();
        for (joint, &angle) in self.joints.iter().zip(q) {
            let joint_frame = parent * joint.origin;
            joint_origins.push(Point3::from(joint_frame.translation.vector));
            joint_axes.push(joint_frame.rotation * joint.axis.into_inner());
            let link = joint_frame * UnitQuaternion::from_axis_angle(&joint.axis, angle);
            links.push(link);
            parent = link;
        }
        let tcp = parent * self.tcp_offset;
        Ok(ChainPose {
            links,
            joint_origins,
            joint_axes,
            tcp,
        })
    }

    /// World pose of every link frame.
    pub fn forward_kinematics(&self, q: &[f64]) -> Result<Vec<Isometry3<f64>>> {
        Ok(self.pose(q)?.links)
    }

    /// Ring-centre positions and velocities for base, elbow and tool.
    pub fn link_centers_and_velocities(&self, state: &RobotState) -> Result<[RingKinematics; 3]> {
        self.check_len(&state.qdot)?;
        let pose = self.pose(&state.q)?;
        Ok(self.ring_kinematics(&pose, &state.qdot))
    }

    pub fn ring_kinematics(&self, pose: &ChainPose, qdot: &[f64]) -> [RingKinematics; 3] {
        RingId::ALL.map(|ring| {
            let mount = self.ring_mount(ring);
            let ring_pose = pose.links[mount.link] * mount.transform;
            let position = Point3::from(ring_pose.translation.vector);
            RingKinematics {
                ring,
                pose: ring_pose,
                position,
                velocity: pose.point_velocity(mount.link, &position, qdot),
            }
        })
    }

    /// Linear velocity of the tool control point, `J_e * qdot`.
    pub fn tcp_velocity(&self, q: &[f64], qdot: &[f64]) -> Result<Vector3<f64>> {
        self.check_len(qdot)?;
        let pose = self.pose(q)?;
        Ok(pose.tcp_velocity(qdot))
    }

    /// Link capsules in world coordinates.
    pub fn world_capsules(&self, pose: &ChainPose) -> Vec<Capsule> {
        self.links.iter().zip(&pose.links).map(|(c, p)| c.transformed(p)).collect()
    }

    /// Full robot state for a configuration and its derivatives.
    pub fn state(&self, t: f64, q: Vec<f64>, qdot: Vec<f64>, qddot: Vec<f64>) -> Result<RobotState> {
        self.check_len(&qddot)?;
        let tcp_velocity = self.tcp_velocity(&q, &qdot)?;
        Ok(RobotState {
            t,
            q,
            qdot,
            qddot,
            tcp_velocity,
        })
    }
}

impl ChainPose {
    /// Velocity of a world point rigidly attached to `link`.
    pub fn point_velocity(&self, link: usize, point: &Point3<f64>, qdot: &[f64]) -> Vector3<f64> {
        (0..=link).fold(Vector3::zeros(), |acc, j| {
            acc + self.joint_axes[j].cross(&(point - self.joint_origins[j])) * qdot[j]
        })
    }

    pub fn tcp_position(&self) -> Point3<f64> {
        Point3::from(self.tcp.translation.vector)
    }

    pub fn tcp_velocity(&self, qdot: &[f64]) -> Vector3<f64> {
        self.point_velocity(self.links.len() - 1, &self.tcp_position(), qdot)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_2;

    fn planar_one_link() -> KinematicChain {
        let joint = Joint {
            origin: Isometry3::identity(),
            axis: Vector3::z_axis(),
        };
        let link = Capsule::new(Point3::origin(), Point3::new(1.0, 0.0, 0.0), 0.05);
        let mount = RingMount {
            link: 0,
            transform: Isometry3::translation(0.5, 0.0, 0.0),
        };
        KinematicChain::new(vec![joint], vec![link], [mount; 3], Isometry3::translation(1.0, 0.0, 0.0)).unwrap()
    }

    #[test]
    fn single_joint_tip() {
        let chain = planar_one_link();
        let tip = chain.pose(&[0.0]).unwrap().tcp_position();
        assert_abs_diff_eq!(tip, Point3::new(1.0, 0.0, 0.0), epsilon = 1e-12);
        let tip = chain.pose(&[FRAC_PI_2]).unwrap().tcp_position();
        assert_abs_diff_eq!(tip, Point3::new(0.0, 1.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn dimension_mismatch() {
        let chain = planar_one_link();
        assert!(matches!(
            chain.forward_kinematics(&[0.0, 1.0]),
            Err(Error::Dimension { expected: 1, got: 2 })
        ));
        assert!(chain.tcp_velocity(&[0.0], &[]).is_err());
    }

    #[test]
    fn static_robot_has_zero_ring_velocity() {
        let chain = planar_one_link();
        let state = chain.state(0.0, vec![0.3], vec![0.0], vec![0.0]).unwrap();
        for rk in chain.link_centers_and_velocities(&state).unwrap() {
            assert_eq!(rk.velocity, Vector3::zeros());
        }
    }

    #[test]
    fn spinning_ring_is_tangential() {
        let chain = planar_one_link();
        let state = chain.state(0.0, vec![0.0], vec![1.0], vec![0.0]).unwrap();
        let rk = chain.link_centers_and_velocities(&state).unwrap()[0];
        assert_abs_diff_eq!(rk.velocity.norm(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(rk.velocity, Vector3::new(0.0, 0.5, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn rejects_bad_chains() {
        let joint = Joint {
            origin: Isometry3::identity(),
            axis: Vector3::z_axis(),
        };
        let bad_link = Capsule::new(Point3::origin(), Point3::new(1.0, 0.0, 0.0), 0.0);
        let mount = RingMount {
            link: 0,
            transform: Isometry3::identity(),
        };
        assert!(KinematicChain::new(vec![joint.clone()], vec![bad_link], [mount; 3], Isometry3::identity()).is_err());
        let link = Capsule::new(Point3::origin(), Point3::new(1.0, 0.0, 0.0), 0.1);
        let far = RingMount { link: 3, ..mount };
        assert!(KinematicChain::new(vec![joint], vec![link], [far; 3], Isometry3::identity()).is_err());
    }
}
