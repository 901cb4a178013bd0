//! Speed-fraction ramp and the pick-and-place task.
//!
//! The task is a fixed joint-space path `q_nom(tau)` parameterised by nominal
//! time `tau`. Scaling by `rho` only changes how fast `tau` advances, so the
//! path geometry is identical for any speed history.

use serde::{Deserialize, Serialize};

use crate::error::{Diagnostic, Error, Result};
use crate::ssm::Psi;

pub fn target_fraction(psi: Psi) -> f64 {
    match psi {
        Psi::Stop => 0.0,
        Psi::Reduced => 0.5,
        Psi::Normal => 1.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedProfile {
    pub rho: f64,
    pub rho_target: f64,
    /// Current rate of change of `rho`, 1/s.
    pub rate: f64,
    pub max_rate: f64,
    pub max_accel_rate: f64,
}

impl SpeedProfile {
    pub fn new(max_rate: f64, max_accel_rate: f64) -> Self {
        Self {
            rho: 1.0,
            rho_target: 1.0,
            rate: 0.0,
            max_rate,
            max_accel_rate,
        }
    }
}

/// Moves `rho` toward its target under rate and rate-of-rate limits
/// without overshooting.
pub fn ramp_fraction(p: &mut SpeedProfile, dt: f64) -> Result<f64> {
    if !(dt > 0.0) {
        return Err(Error::Contract(format!("ramp step must be positive, got {dt}")));
    }
    let e = p.rho_target - p.rho;
    if e == 0.0 {
        p.rate = 0.0;
        return Ok(p.rho);
    }
    let a = p.max_accel_rate;
    let v_des = e.signum() * p.max_rate.min((2.0 * a * e.abs()).sqrt());
    let dv = a * dt;
    let rate = p.rate + (v_des - p.rate).clamp(-dv, dv);
    let step = rate * dt;
    if step.signum() == e.signum() && step.abs() >= e.abs() {
        p.rho = p.rho_target;
        p.rate = 0.0;
    } else {
        p.rho = (p.rho + step).clamp(0.0, 1.0);
        p.rate = rate;
    }
    Ok(p.rho)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskParams {
    pub pick: Vec<f64>,
    pub place: Vec<f64>,
    /// Per-joint nominal speed limits, rad/s.
    pub joint_vmax: Vec<f64>,
    /// Per-joint nominal acceleration limits, rad/s^2.
    pub joint_amax: Vec<f64>,
    pub dwell: f64,
    pub items: usize,
}

impl TaskParams {
    pub fn diagnostics(&self, dof: usize) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        for (name, v) in [
            ("pick", &self.pick),
            ("place", &self.place),
            ("joint_vmax", &self.joint_vmax),
            ("joint_amax", &self.joint_amax),
        ] {
            if v.len() != dof {
                out.push(Diagnostic::new(
                    format!("task.{name}"),
                    format!("expected {dof} values, got {}", v.len()),
                ));
            }
        }
        for (name, v) in [("joint_vmax", &self.joint_vmax), ("joint_amax", &self.joint_amax)] {
            if v.iter().any(|x| !(*x > 0.0)) {
                out.push(Diagnostic::new(format!("task.{name}"), "all limits must be > 0"));
            }
        }
        if !(self.dwell >= 0.0) {
            out.push(Diagnostic::new("task.dwell", "must be >= 0"));
        }
        if self.items == 0 {
            out.push(Diagnostic::new("task.items", "must be >= 1"));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskEvent {
    Pick,
    Place,
    Done,
}

#[derive(Debug, Clone, PartialEq)]
enum Segment {
    Dwell { q: Vec<f64>, event: TaskEvent },
    Move(Move),
}

/// Synchronised trapezoid: `q = from + delta * s(t)` with one normalised
/// profile `s` shared by all joints.
#[derive(Debug, Clone, PartialEq)]
struct Move {
    from: Vec<f64>,
    delta: Vec<f64>,
    /// Normalised peak speed and acceleration of `s`.
    sv: f64,
    sa: f64,
    t_acc: f64,
    duration: f64,
}

impl Move {
    fn new(from: &[f64], to: &[f64], vmax: &[f64], amax: &[f64]) -> Self {
        let delta: Vec<f64> = to.iter().zip(from).map(|(b, a)| b - a).collect();
        let mut sv = f64::INFINITY;
        let mut sa = f64::INFINITY;
        for j in 0..delta.len() {
            let d = delta[j].abs();
            if d > 0.0 {
                sv = sv.min(vmax[j] / d);
                sa = sa.min(amax[j] / d);
            }
        }
        if !sv.is_finite() {
            return Self {
                from: from.to_vec(),
                delta,
                sv: 0.0,
                sa: 0.0,
                t_acc: 0.0,
                duration: 0.0,
            };
        }
        // triangle profile when the peak speed is never reached
        let (sv, t_acc, duration) = if sv * sv / sa >= 1.0 {
            let t = (1.0 / sa).sqrt();
            (sa * t, t, 2.0 * t)
        } else {
            (sv, sv / sa, 1.0 / sv + sv / sa)
        };
        Self {
            from: from.to_vec(),
            delta,
            sv,
            sa,
            t_acc,
            duration,
        }
    }

    /// `(s, ds/dt, d2s/dt2)` at local time `t`.
    fn profile(&self, t: f64) -> (f64, f64, f64) {
        let t = t.clamp(0.0, self.duration);
        let (ta, tt, a, v) = (self.t_acc, self.duration, self.sa, self.sv);
        if t < ta {
            (0.5 * a * t * t, a * t, a)
        } else if t <= tt - ta {
            (0.5 * a * ta * ta + v * (t - ta), v, 0.0)
        } else {
            let r = tt - t;
            (1.0 - 0.5 * a * r * r, a * r, -a)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskProgram {
    segments: Vec<Segment>,
    /// Nominal start time of each segment, plus the total at the end.
    starts: Vec<f64>,
    pub items_total: usize,
}

/// Nominal joint state at a path parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct NominalState {
    pub q: Vec<f64>,
    pub qdot: Vec<f64>,
    pub qddot: Vec<f64>,
}

impl TaskProgram {
    pub fn new(params: &TaskParams) -> Result<Self> {
        let diags = params.diagnostics(params.pick.len());
        if !diags.is_empty() {
            return Err(Error::Config(diags));
        }
        let go = Move::new(&params.pick, &params.place, &params.joint_vmax, &params.joint_amax);
        let back = Move::new(&params.place, &params.pick, &params.joint_vmax, &params.joint_amax);
        let mut segments = Vec::new();
        for item in 0..params.items {
            segments.push(Segment::Dwell {
                q: params.pick.clone(),
                event: TaskEvent::Pick,
            });
            segments.push(Segment::Move(go.clone()));
            segments.push(Segment::Dwell {
                q: params.place.clone(),
                event: TaskEvent::Place,
            });
            if item + 1 < params.items {
                segments.push(Segment::Move(back.clone()));
            }
        }
        let mut starts = vec![0.0];
        for seg in &segments {
            let d = match seg {
                Segment::Dwell { .. } => params.dwell,
                Segment::Move(m) => m.duration,
            };
            starts.push(starts.last().unwrap() + d);
        }
        Ok(Self {
            segments,
            starts,
            items_total: params.items,
        })
    }

    /// Task duration at full speed.
    pub fn nominal_duration(&self) -> f64 {
        *self.starts.last().unwrap()
    }

    fn segment_at(&self, tau: f64) -> usize {
        let i = self.starts.partition_point(|&s| s <= tau);
        i.saturating_sub(1).min(self.segments.len() - 1)
    }

    pub fn nominal(&self, tau: f64) -> NominalState {
        let tau = tau.clamp(0.0, self.nominal_duration());
        let i = self.segment_at(tau);
        match &self.segments[i] {
            Segment::Dwell { q, .. } => NominalState {
                q: q.clone(),
                qdot: vec![0.0; q.len()],
                qddot: vec![0.0; q.len()],
            },
            Segment::Move(m) => {
                let (s, sd, sdd) = m.profile(tau - self.starts[i]);
                NominalState {
                    q: m.from.iter().zip(&m.delta).map(|(a, d)| a + d * s).collect(),
                    qdot: m.delta.iter().map(|d| d * sd).collect(),
                    qddot: m.delta.iter().map(|d| d * sdd).collect(),
                }
            }
        }
    }

    /// Events whose segment ends in `(tau0, tau1]`.
    fn events_between(&self, tau0: f64, tau1: f64) -> Vec<TaskEvent> {
        let mut out = Vec::new();
        for (i, seg) in self.segments.iter().enumerate() {
            let end = self.starts[i + 1];
            if let Segment::Dwell { event, .. } = seg {
                if end > tau0 && end <= tau1 {
                    out.push(*event);
                }
            }
        }
        let total = self.nominal_duration();
        if total > tau0 && total <= tau1 {
            out.push(TaskEvent::Done);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TaskState {
    /// Path parameter: elapsed nominal time.
    pub tau: f64,
    pub items_done: usize,
    pub done: bool,
}

/// Joint state scaled by the speed fraction.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledState {
    pub q: Vec<f64>,
    pub qdot: Vec<f64>,
    pub qddot: Vec<f64>,
}

pub fn scaled_state(program: &TaskProgram, tau: f64, rho: f64, rho_dot: f64) -> ScaledState {
    let n = program.nominal(tau);
    ScaledState {
        qdot: n.qdot.iter().map(|v| rho * v).collect(),
        qddot: n.qddot.iter().zip(&n.qdot).map(|(a, v)| rho * rho * a + rho_dot * v).collect(),
        q: n.q,
    }
}

/// Advances the path parameter by `rho * dt` and returns the joint state at
/// the new parameter together with any task events crossed.
pub fn step_task(program: &TaskProgram, task: &mut TaskState, rho: f64, rho_dot: f64, dt: f64) -> Result<(ScaledState, Vec<TaskEvent>)> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::Contract(format!("speed fraction {rho} outside [0, 1]")));
    }
    let tau0 = task.tau;
    let tau1 = (tau0 + rho * dt).min(program.nominal_duration());
    task.tau = tau1;
    let events = program.events_between(tau0, tau1);
    for e in &events {
        match e {
            TaskEvent::Place => task.items_done += 1,
            TaskEvent::Done => task.done = true,
            TaskEvent::Pick => {}
        }
    }
    Ok((scaled_state(program, tau1, rho, rho_dot), events))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn params() -> TaskParams {
        TaskParams {
            pick: vec![0.0, -1.0, 1.0],
            place: vec![PI, -1.0, 1.0],
            joint_vmax: vec![2.0; 3],
            joint_amax: vec![4.0; 3],
            dwell: 0.5,
            items: 2,
        }
    }

    #[test]
    fn targets() {
        assert_eq!(target_fraction(Psi::Normal), 1.0);
        assert_eq!(target_fraction(Psi::Reduced), 0.5);
        assert_eq!(target_fraction(Psi::Stop), 0.0);
    }

    #[test]
    fn unlimited_accel_ramp() {
        let mut p = SpeedProfile::new(5.0, f64::INFINITY);
        p.rho_target = 0.0;
        assert_abs_diff_eq!(ramp_fraction(&mut p, 0.1).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn ramp_fixed_point() {
        let mut p = SpeedProfile::new(5.0, 100.0);
        assert_eq!(ramp_fraction(&mut p, 0.008).unwrap(), 1.0);
        assert!(ramp_fraction(&mut p, 0.0).is_err());
    }

    #[test]
    fn stop_time_within_budget() {
        let mut p = SpeedProfile::new(5.0, 100.0);
        p.rho_target = 0.0;
        let dt = 0.008;
        let mut t = 0.0;
        let mut prev = p.rho;
        while p.rho > 0.0 {
            ramp_fraction(&mut p, dt).unwrap();
            assert!((p.rho - prev).abs() <= 5.0 * dt + 1e-9);
            assert!(p.rho >= 0.0);
            prev = p.rho;
            t += dt;
        }
        assert!((0.2..=0.4).contains(&t), "stop took {t}");
    }

    #[test]
    fn move_profile_is_consistent() {
        let m = Move::new(&[0.0], &[PI], &[2.0], &[4.0]);
        assert_abs_diff_eq!(m.duration, PI / 2.0 + 0.5, epsilon = 1e-12);
        let (s, sd, _) = m.profile(m.duration);
        assert_abs_diff_eq!(s, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sd, 0.0, epsilon = 1e-12);
        // short move never reaches cruise
        let m = Move::new(&[0.0], &[0.5], &[2.0], &[4.0]);
        assert_abs_diff_eq!(m.profile(m.duration).0, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.profile(m.duration / 2.0).1 * 0.5, (4.0f64 * 0.5).sqrt(), epsilon = 1e-9);
    }

    #[test]
    fn zero_rho_freezes() {
        let prog = TaskProgram::new(&params()).unwrap();
        let mut task = TaskState {
            tau: 1.2,
            ..Default::default()
        };
        let before = prog.nominal(1.2).q;
        for _ in 0..100 {
            let (s, ev) = step_task(&prog, &mut task, 0.0, 0.0, 0.008).unwrap();
            assert_eq!(s.q, before);
            assert!(ev.is_empty());
        }
    }

    #[test]
    fn events_and_completion() {
        let prog = TaskProgram::new(&params()).unwrap();
        let mut task = TaskState::default();
        let mut events = Vec::new();
        while !task.done {
            events.extend(step_task(&prog, &mut task, 1.0, 0.0, 0.008).unwrap().1);
        }
        use TaskEvent::*;
        assert_eq!(events, vec![Pick, Place, Pick, Place, Done]);
        assert_eq!(task.items_done, 2);
    }
}
