#![allow(dead_code)]

use nalgebra::{Matrix4, Point3, Vector3};
use tofssm::controller::ramp_fraction;
use tofssm::geometry::Capsule;
use tofssm::scene::{AvatarMotion, HumanAvatar, Trajectory};
use tofssm::sim::{run_trial, Approach, SimConfig, TrialResult};
use tofssm::{Config, Mode, RingId};

pub fn cfg() -> Config {
    Config::default_config()
}

fn dh(theta: f64, d: f64, a: f64, alpha: f64) -> Matrix4<f64> {
    let (st, ct) = theta.sin_cos();
    let (sa, ca) = alpha.sin_cos();
    Matrix4::new(
        ct,
        -st * ca,
        st * sa,
        a * ct, //
        st,
        ct * ca,
        -ct * sa,
        a * st, //
        0.0,
        sa,
        ca,
        d, //
        0.0,
        0.0,
        0.0,
        1.0,
    )
}

/// TCP position from the textbook UR10 table on a 0.8 m pedestal with a
/// 12 cm tool.
pub fn dh_tcp(q: &[f64]) -> Point3<f64> {
    use std::f64::consts::FRAC_PI_2;
    let d = [0.1273, 0.0, 0.0, 0.163941, 0.1157, 0.0922 + 0.12];
    let a = [0.0, -0.612, -0.5723, 0.0, 0.0, 0.0];
    let alpha = [FRAC_PI_2, 0.0, 0.0, FRAC_PI_2, -FRAC_PI_2, 0.0];
    let mut t = Matrix4::identity();
    t[(2, 3)] = 0.8;
    for i in 0..6 {
        t *= dh(q[i], d[i], a[i], alpha[i]);
    }
    Point3::new(t[(0, 3)], t[(1, 3)], t[(2, 3)])
}

/// Ticks of the configured ramp to bring the speed fraction from full speed
/// at rest to zero, as seconds.
pub fn ramp_stop_time(config: &Config) -> f64 {
    let dt = config.dt();
    let mut p = config.controller.profile();
    p.rho = 1.0;
    p.rate = 0.0;
    p.rho_target = 0.0;
    let mut n = 0;
    while p.rho > 0.0 {
        ramp_fraction(&mut p, dt).unwrap();
        n += 1;
        assert!(n < 100_000);
    }
    n as f64 * dt
}

/// Period at which the approach's distance source updates.
pub fn sensing_period(config: &Config, approach: Approach) -> f64 {
    match approach {
        Approach::Real => config.ring_ticks() as f64 * config.dt(),
        Approach::Ideal => config.dt(),
        Approach::Lidar => config.lidar_ticks() as f64 * config.dt(),
    }
}

pub const POST_RADIUS: f64 = 0.3;

/// A 2 m post that appears at `t_in` with its surface `gap` meters from the
/// tool ring centre, beside the arm's plane on the side the tool is moving
/// towards, and stays there.
pub fn teleported_post(config: &Config, t_in: f64, gap: f64) -> HumanAvatar {
    let free = run_trial(&SimConfig {
        config: config.clone(),
        approach: Approach::Ideal,
        mode: Mode::Vo,
        seed: 0,
        human: None,
        timeout: t_in,
    })
    .unwrap();
    let row = free
        .rows
        .iter()
        .min_by(|a, b| (a.t - t_in).abs().total_cmp(&(b.t - t_in).abs()))
        .unwrap();
    let chain = config.chain().unwrap();
    let pose = chain.pose(&row.q).unwrap();
    let ring = chain.ring_kinematics(&pose, &row.qdot)[RingId::Tool.index()];
    let radial = Vector3::new(ring.position.x, ring.position.y, 0.0).normalize();
    let mut side = Vector3::z().cross(&radial);
    if side.dot(&ring.velocity) < 0.0 {
        side = -side;
    }
    let c = ring.position + side * (gap + POST_RADIUS);
    let near = Point3::new(c.x, c.y, 0.0);
    let far = Point3::new(0.0, -20.0, 0.0);
    let path = Trajectory::new(vec![(0.0, far), (t_in - 1e-6, far), (t_in, near), (1e6, near)]).unwrap();
    HumanAvatar::new(
        vec![Capsule::new(Point3::new(0.0, 0.0, 0.0), Point3::new(0.0, 0.0, 2.0), POST_RADIUS)],
        AvatarMotion::Replay(path),
    )
    .unwrap()
}

pub struct Liveness {
    pub result: TrialResult,
    pub t_in: f64,
    /// First instant with the speed fraction at zero.
    pub t_zero: Option<f64>,
    pub bound: f64,
    /// Speed fraction stays at zero from `t_zero` to the end.
    pub held: bool,
}

pub fn liveness(config: &Config, approach: Approach, mode: Mode) -> Liveness {
    let t_in = 1.0;
    let post = teleported_post(config, t_in, 0.1);
    let result = run_trial(&SimConfig {
        config: config.clone(),
        approach,
        mode,
        seed: config.sim.seed,
        human: Some(post),
        timeout: t_in + 3.0,
    })
    .unwrap();
    let first = result.rows.iter().position(|r| r.t >= t_in - 1e-9 && r.rho == 0.0);
    let t_zero = first.map(|i| result.rows[i].t);
    let held = first.is_some_and(|i| result.rows[i..].iter().all(|r| r.rho == 0.0));
    let bound = t_in + sensing_period(config, approach) + config.dt() + ramp_stop_time(config);
    Liveness {
        result,
        t_in,
        t_zero,
        bound,
        held,
    }
}

/// Largest TCP distance between each traced pose and the nominal pose at
/// the traced path parameter.
pub fn path_deviation(config: &Config, result: &TrialResult) -> f64 {
    let chain = config.chain().unwrap();
    let program = config.task_program().unwrap();
    result
        .rows
        .iter()
        .map(|r| {
            let a = chain.pose(&r.q).unwrap().tcp_position();
            let b = chain.pose(&program.nominal(r.tau).q).unwrap().tcp_position();
            (a - b).norm()
        })
        .fold(0.0, f64::max)
}
