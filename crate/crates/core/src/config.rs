//! TOML configuration and conversion to runtime types.

use std::path::Path;

use nalgebra::{Isometry3, Point3, UnitQuaternion, UnitVector3, Vector3};
use serde::{Deserialize, Serialize};

use crate::controller::{SpeedProfile, TaskParams, TaskProgram};
use crate::error::{Diagnostic, Error, Result};
use crate::geometry::{isometry_from_xyz_rpy, Capsule, OrientedBox};
use crate::kinematics::{Joint, KinematicChain, RingId, RingMount};
use crate::lidar::{Lidar2D, LidarParams};
use crate::scene::{HumanAvatar, Lemniscate, Shape};
use crate::ssm::{Mode, SsmParams};
use crate::tof::{ToFParams, ToFRing};

pub const DEFAULT_CONFIG: &str = include_str!("../config/default.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub rates: Rates,
    pub chain: ChainConfig,
    pub tof: ToFParams,
    pub lidar: LidarParams,
    pub ssm: SsmConfig,
    pub controller: ControllerConfig,
    pub task: TaskParams,
    pub scene: SceneConfig,
    pub human: HumanConfig,
    pub sim: SimSettings,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rates {
    pub robot_hz: f64,
    pub ring_hz: f64,
    pub lidar_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pose {
    pub xyz: [f64; 3],
    #[serde(default)]
    pub rpy: [f64; 3],
}

impl Pose {
    pub fn isometry(&self) -> Isometry3<f64> {
        isometry_from_xyz_rpy(self.xyz, self.rpy)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointConfig {
    pub xyz: [f64; 3],
    #[serde(default)]
    pub rpy: [f64; 3],
    pub axis: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapsuleConfig {
    pub p0: [f64; 3],
    pub p1: [f64; 3],
    pub radius: f64,
}

impl CapsuleConfig {
    pub fn capsule(&self) -> Capsule {
        Capsule::new(self.p0.into(), self.p1.into(), self.radius)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RingMountConfig {
    pub link: usize,
    pub xyz: [f64; 3],
    #[serde(default)]
    pub rpy: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RingMounts {
    pub base: RingMountConfig,
    pub elbow: RingMountConfig,
    pub tool: RingMountConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    pub joints: Vec<JointConfig>,
    pub links: Vec<CapsuleConfig>,
    pub rings: RingMounts,
    pub tcp: Pose,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LidarSsmOverride {
    #[serde(rename = "C_dC")]
    pub c_dc: f64,
    #[serde(rename = "fixed_dC")]
    pub fixed_dc: f64,
    #[serde(rename = "fixed_dR")]
    pub fixed_dr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SsmConfig {
    #[serde(rename = "T_R")]
    pub t_r: f64,
    #[serde(rename = "T_stop")]
    pub t_stop: f64,
    #[serde(rename = "T_red")]
    pub t_red: f64,
    #[serde(rename = "V_lmax")]
    pub v_lmax: f64,
    #[serde(rename = "V_hmax")]
    pub v_hmax: f64,
    #[serde(rename = "C_dC")]
    pub c_dc: f64,
    #[serde(rename = "B_min")]
    pub b_min: f64,
    #[serde(rename = "fixed_dC")]
    pub fixed_dc: f64,
    #[serde(rename = "fixed_dR")]
    pub fixed_dr: f64,
    #[serde(rename = "alpha_I")]
    pub alpha_i: f64,
    #[serde(rename = "alpha_D")]
    pub alpha_d: f64,
    pub lidar: LidarSsmOverride,
}

impl SsmConfig {
    pub fn params(&self, mode: Mode) -> SsmParams {
        SsmParams {
            mode,
            t_r: self.t_r,
            t_stop: self.t_stop,
            t_red: self.t_red,
            v_lmax: self.v_lmax,
            v_hmax: self.v_hmax,
            c_dc: self.c_dc,
            b_min: self.b_min,
            fixed_dc: self.fixed_dc,
            fixed_dr: self.fixed_dr,
            alpha_i: self.alpha_i,
            alpha_d: self.alpha_d,
        }
    }

    /// Parameters of the lidar's virtual channel.
    pub fn lidar_params(&self, mode: Mode) -> SsmParams {
        SsmParams {
            c_dc: self.lidar.c_dc,
            fixed_dc: self.lidar.fixed_dc,
            fixed_dr: self.lidar.fixed_dr,
            ..self.params(mode)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    pub max_rate: f64,
    pub max_accel_rate: f64,
}

impl ControllerConfig {
    pub fn profile(&self) -> SpeedProfile {
        SpeedProfile::new(self.max_rate, self.max_accel_rate)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase", deny_unknown_fields)]
pub enum ShapeConfig {
    Sphere {
        center: [f64; 3],
        radius: f64,
    },
    Capsule {
        p0: [f64; 3],
        p1: [f64; 3],
        radius: f64,
    },
    Box {
        center: [f64; 3],
        half_extents: [f64; 3],
        #[serde(default)]
        rpy: [f64; 3],
    },
}

impl ShapeConfig {
    pub fn shape(&self) -> Shape {
        match *self {
            ShapeConfig::Sphere { center, radius } => Shape::Sphere {
                center: center.into(),
                radius,
            },
            ShapeConfig::Capsule { p0, p1, radius } => Shape::Capsule(Capsule::new(p0.into(), p1.into(), radius)),
            ShapeConfig::Box { center, half_extents, rpy } => Shape::Box(OrientedBox {
                center: center.into(),
                half_extents: half_extents.into(),
                orientation: UnitQuaternion::from_euler_angles(rpy[0], rpy[1], rpy[2]),
            }),
        }
    }

    fn min_dimension(&self) -> f64 {
        match self {
            ShapeConfig::Sphere { radius, .. } | ShapeConfig::Capsule { radius, .. } => *radius,
            ShapeConfig::Box { half_extents, .. } => half_extents.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    /// Fixed objects in the restricted workspace (tables, floor, pedestal).
    pub restricted: Vec<ShapeConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HumanConfig {
    /// Capsules relative to the avatar root, which sits on the floor.
    pub capsules: Vec<CapsuleConfig>,
    pub path: Lemniscate,
    /// Draw the starting phase of the path from the trial seed.
    pub random_phase: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSettings {
    pub seed: u64,
    pub trials: usize,
    /// Trial timeout as a multiple of the human-free completion time.
    pub timeout_factor: f64,
    /// A channel older than this many of its sample periods reports stop.
    pub stale_periods: f64,
}

fn ticks_per(robot_hz: f64, hz: f64) -> Option<usize> {
    let r = robot_hz / hz;
    let n = r.round();
    ((r - n).abs() <= 1e-3 && n >= 1.0).then_some(n as usize)
}

impl Config {
    pub fn default_config() -> Self {
        Self::from_toml_str(DEFAULT_CONFIG).expect("shipped default config parses")
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::ConfigParse(e.to_string()))
    }

    /// Parses and validates a config file.
    pub fn load(path: &Path) -> Result<Self> {
        let cfg = Self::from_toml_str(&std::fs::read_to_string(path)?)?;
        cfg.validated()
    }

    pub fn validated(self) -> Result<Self> {
        let diags = self.validate();
        if diags.is_empty() {
            Ok(self)
        } else {
            Err(Error::Config(diags))
        }
    }

    /// Robot ticks per ring sample.
    pub fn ring_ticks(&self) -> usize {
        ticks_per(self.rates.robot_hz, self.rates.ring_hz).unwrap_or(1)
    }

    pub fn lidar_ticks(&self) -> usize {
        ticks_per(self.rates.robot_hz, self.rates.lidar_hz).unwrap_or(1)
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.rates.robot_hz
    }

    /// Every static invariant, as field-level diagnostics.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut d = Vec::new();
        let r = &self.rates;
        if !(r.robot_hz > 0.0) {
            d.push(Diagnostic::new("rates.robot_hz", "must be > 0"));
        } else {
            for (name, hz) in [("ring_hz", r.ring_hz), ("lidar_hz", r.lidar_hz)] {
                if !(hz > 0.0 && hz <= r.robot_hz) {
                    d.push(Diagnostic::new(
                        format!("rates.{name}"),
                        format!("must lie in (0, robot_hz = {}], got {hz}", r.robot_hz),
                    ));
                } else if ticks_per(r.robot_hz, hz).is_none() {
                    d.push(Diagnostic::new(
                        format!("rates.{name}"),
                        format!(
                            "period 1/{hz} s is not an integer multiple of the base step 1/{} s (ratio {:.4})",
                            r.robot_hz,
                            r.robot_hz / hz
                        ),
                    ));
                }
            }
            if !(30.0..=50.0).contains(&r.ring_hz) {
                d.push(Diagnostic::new(
                    "rates.ring_hz",
                    format!("ring rate must lie in [30, 50] Hz, got {}", r.ring_hz),
                ));
            }
        }

        let t = &self.tof;
        if !(t.range_min > 0.0 && t.range_min < t.range_max) {
            d.push(Diagnostic::new("tof.range_min", "must satisfy 0 < range_min < range_max"));
        }
        if !(t.sigma >= 0.0) {
            d.push(Diagnostic::new("tof.sigma", "must be >= 0"));
        }
        if !(t.fov_deg > 0.0 && t.fov_deg < 180.0) {
            d.push(Diagnostic::new("tof.fov_deg", "must lie in (0, 180)"));
        }
        if !(t.ring_radius > 0.0) {
            d.push(Diagnostic::new("tof.ring_radius", "must be > 0"));
        }
        for (i, l) in self.chain.links.iter().enumerate() {
            if !(l.radius > 0.0) {
                d.push(Diagnostic::new(format!("chain.links[{i}].radius"), "must be > 0"));
            }
        }
        let n = self.chain.joints.len();
        if n == 0 {
            d.push(Diagnostic::new("chain.joints", "at least one joint required"));
        }
        if self.chain.links.len() != n {
            d.push(Diagnostic::new(
                "chain.links",
                format!("expected {n} links, got {}", self.chain.links.len()),
            ));
        }
        for (i, j) in self.chain.joints.iter().enumerate() {
            let norm = Vector3::from(j.axis).norm();
            if (norm - 1.0).abs() > 1e-9 {
                d.push(Diagnostic::new(
                    format!("chain.joints[{i}].axis"),
                    format!("must be a unit vector, norm is {norm}"),
                ));
            }
        }
        for (name, m) in [
            ("base", &self.chain.rings.base),
            ("elbow", &self.chain.rings.elbow),
            ("tool", &self.chain.rings.tool),
        ] {
            if m.link >= n {
                d.push(Diagnostic::new(
                    format!("chain.rings.{name}.link"),
                    format!("link {} does not exist", m.link),
                ));
            } else if let Some(l) = self.chain.links.get(m.link) {
                if l.radius >= t.ring_radius {
                    d.push(Diagnostic::new(
                        format!("chain.rings.{name}"),
                        format!("link radius {} must be below the ring radius {}", l.radius, t.ring_radius),
                    ));
                }
            }
        }

        let l = &self.lidar;
        if !(l.angular_resolution_deg > 0.0) {
            d.push(Diagnostic::new("lidar.angular_resolution_deg", "must be > 0"));
        }
        if !(l.r_o > 0.0) {
            d.push(Diagnostic::new("lidar.r_o", "must be > 0"));
        }
        if !(l.range_max > 0.0) {
            d.push(Diagnostic::new("lidar.range_max", "must be > 0"));
        }

        d.extend(self.ssm.params(Mode::Vo).diagnostics("ssm"));
        d.extend(
            self.ssm
                .lidar_params(Mode::Vo)
                .diagnostics("ssm.lidar")
                .into_iter()
                .filter(|x| ["C_dC", "fixed_dC", "fixed_dR"].iter().any(|f| x.field.ends_with(f))),
        );

        let c = &self.controller;
        if !(c.max_rate > 0.0) {
            d.push(Diagnostic::new("controller.max_rate", "must be > 0"));
        }
        if !(c.max_accel_rate > 0.0) {
            d.push(Diagnostic::new("controller.max_accel_rate", "must be > 0"));
        }
        d.extend(self.task.diagnostics(n));

        for (i, s) in self.scene.restricted.iter().enumerate() {
            if !(s.min_dimension() > 0.0) {
                d.push(Diagnostic::new(format!("scene.restricted[{i}]"), "dimensions must be > 0"));
            }
        }
        if self.human.capsules.is_empty() {
            d.push(Diagnostic::new("human.capsules", "at least one capsule required"));
        }
        for (i, c) in self.human.capsules.iter().enumerate() {
            if !(c.radius > 0.0) {
                d.push(Diagnostic::new(format!("human.capsules[{i}].radius"), "must be > 0"));
            }
        }
        let p = &self.human.path;
        if !(p.period > 0.0) {
            d.push(Diagnostic::new("human.path.period", "must be > 0"));
        } else {
            let peak = p.peak_speed();
            if peak > self.ssm.v_hmax + 1e-9 {
                d.push(Diagnostic::new(
                    "human.path",
                    format!("peak path speed {peak:.3} m/s exceeds V_hmax = {}", self.ssm.v_hmax),
                ));
            }
        }
        if self.sim.trials == 0 {
            d.push(Diagnostic::new("sim.trials", "must be >= 1"));
        }
        if !(self.sim.timeout_factor >= 1.0) {
            d.push(Diagnostic::new("sim.timeout_factor", "must be >= 1"));
        }
        if !(self.sim.stale_periods >= 1.0) {
            d.push(Diagnostic::new("sim.stale_periods", "must be >= 1"));
        }
        d
    }

    pub fn chain(&self) -> Result<KinematicChain> {
        let joints = self
            .chain
            .joints
            .iter()
            .map(|j| Joint {
                origin: isometry_from_xyz_rpy(j.xyz, j.rpy),
                axis: UnitVector3::new_normalize(Vector3::from(j.axis)),
            })
            .collect();
        let links = self.chain.links.iter().map(CapsuleConfig::capsule).collect();
        let r = &self.chain.rings;
        let mount = |m: &RingMountConfig| RingMount {
            link: m.link,
            transform: isometry_from_xyz_rpy(m.xyz, m.rpy),
        };
        KinematicChain::new(
            joints,
            links,
            [mount(&r.base), mount(&r.elbow), mount(&r.tool)],
            self.chain.tcp.isometry(),
        )
    }

    pub fn rings(&self) -> Result<[ToFRing; 3]> {
        let [a, b, c] = RingId::ALL.map(|id| ToFRing::new(id, &self.tof));
        Ok([a?, b?, c?])
    }

    pub fn lidar(&self) -> Result<Lidar2D> {
        Lidar2D::new(&self.lidar)
    }

    pub fn task_program(&self) -> Result<TaskProgram> {
        TaskProgram::new(&self.task)
    }

    pub fn restricted_shapes(&self) -> Vec<Shape> {
        self.scene.restricted.iter().map(ShapeConfig::shape).collect()
    }

    pub fn human_capsules(&self) -> Vec<Capsule> {
        self.human.capsules.iter().map(CapsuleConfig::capsule).collect()
    }

    /// Parametric avatar starting at `phase` seconds into its path.
    pub fn avatar(&self, phase: f64) -> Result<HumanAvatar> {
        HumanAvatar::new(
            self.human_capsules(),
            crate::scene::AvatarMotion::Parametric(Lemniscate { phase, ..self.human.path }),
        )
    }

    pub fn tcp_position_at(&self, q: &[f64]) -> Result<Point3<f64>> {
        Ok(self.chain()?.pose(q)?.tcp_position())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid() {
        let cfg = Config::default_config();
        assert_eq!(cfg.validate(), vec![]);
        assert_eq!(cfg.ring_ticks(), 3);
        assert_eq!(cfg.lidar_ticks(), 4);
        cfg.chain().unwrap();
        cfg.task_program().unwrap();
    }

    #[test]
    fn table_constants() {
        let s = Config::default_config().ssm;
        assert_eq!((s.t_r, s.t_stop, s.t_red), (0.1, 0.4, 0.4));
        assert_eq!((s.v_lmax, s.v_hmax, s.c_dc, s.b_min), (1.7, 1.6, 0.3, 0.2));
        assert_eq!((s.fixed_dc, s.fixed_dr), (0.5, 1.1));
        assert_eq!((s.lidar.c_dc, s.lidar.fixed_dc, s.lidar.fixed_dr), (1.12, 1.32, 1.92));
        assert_eq!(Config::default_config().lidar.r_o, 0.82);
    }

    #[test]
    fn missing_field_is_named() {
        let text = DEFAULT_CONFIG.replace("C_dC = 0.3\n", "");
        let err = Config::from_toml_str(&text).unwrap_err().to_string();
        assert!(err.contains("C_dC"), "{err}");
    }

    #[test]
    fn unknown_field_rejected() {
        let text = DEFAULT_CONFIG.replace("[ssm]\n", "[ssm]\nbogus = 1\n");
        assert!(Config::from_toml_str(&text).is_err());
    }

    #[test]
    fn threshold_order_diagnostic() {
        let mut cfg = Config::default_config();
        cfg.ssm.fixed_dr = 0.4;
        let d = cfg.validate();
        assert!(d.iter().any(|x| x.field == "ssm.fixed_dR"), "{d:?}");
    }

    #[test]
    fn indivisible_ring_rate() {
        let mut cfg = Config::default_config();
        cfg.rates.ring_hz = 33.0;
        let d = cfg.validate();
        assert!(d.iter().any(|x| x.field == "rates.ring_hz"), "{d:?}");
    }
}
