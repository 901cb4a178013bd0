//! Fixed-step multi-rate trial loop.
//!
//! One base tick per robot period. Rings and lidar fire on integer multiples
//! of the base tick; every source is computed on every trial so traces are
//! tick-aligned across approaches, and the approach only selects which
//! source feeds the safety state machine.

use std::fmt;
use std::str::FromStr;

use nalgebra::Point3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::controller::{ramp_fraction, scaled_state, step_task, target_fraction, TaskEvent, TaskProgram, TaskState};
use crate::error::{Error, Result};
use crate::geometry::Capsule;
use crate::kinematics::KinematicChain;
use crate::lidar::{lidar_min_distance, scan, Lidar2D};
use crate::scene::{advance_avatar, ground_truth_min_distance, ideal_min_distance, AvatarMotion, HumanAvatar, Scene, Shape, Trajectory};
use crate::ssm::{directed_speeds, ssm_step, ChannelDiagnostics, ChannelInput, ChannelSample, Mode, Psi, SafetyState, SsmParams};
use crate::tof::{directed_speed_from_ring, measure_ring, RingDistance, RingReading, ToFRing};
use crate::trace::{ChannelColumns, TraceRecord};

/// Which minimum-distance source drives the safety state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Approach {
    Real,
    Ideal,
    Lidar,
}

impl Approach {
    pub const ALL: [Approach; 3] = [Approach::Real, Approach::Ideal, Approach::Lidar];

    pub fn name(self) -> &'static str {
        match self {
            Approach::Real => "real",
            Approach::Ideal => "ideal",
            Approach::Lidar => "lidar",
        }
    }
}

impl fmt::Display for Approach {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Approach {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "real" | "tof" => Ok(Approach::Real),
            "ideal" => Ok(Approach::Ideal),
            "lidar" => Ok(Approach::Lidar),
            _ => Err(Error::Contract(format!("unknown approach {s:?}; expected real, ideal or lidar"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub config: Config,
    pub approach: Approach,
    pub mode: Mode,
    /// Seeds the sensor noise.
    pub seed: u64,
    /// `None` runs the human-free baseline.
    pub human: Option<HumanAvatar>,
    /// Simulated-time limit, seconds.
    pub timeout: f64,
}

/// Start phase of the parametric path for a trial seed, drawn from a stream
/// independent of the sensor noise.
pub fn trial_phase(seed: u64, period: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng.random::<f64>() * period
}

/// Avatar for a trial: the configured path, with a seeded start phase when
/// the config asks for one.
pub fn trial_avatar(config: &Config, seed: u64) -> Result<HumanAvatar> {
    let phase = if config.human.random_phase {
        trial_phase(seed, config.human.path.period)
    } else {
        config.human.path.phase
    };
    config.avatar(phase)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub approach: Approach,
    pub mode: Mode,
    pub seed: u64,
    pub completed: bool,
    /// Task completion time, seconds.
    pub completion_time: Option<f64>,
    /// Last simulated instant.
    pub end_time: f64,
    pub timeout: f64,
    pub ticks: usize,
    pub items_done: usize,
    pub ring_samples: usize,
    /// Sensor readings that hit the robot or restricted workspace.
    pub self_hits: usize,
    /// Of those, readings the mask failed to remove.
    pub unmasked_self_hits: usize,
}

#[derive(Debug, Clone)]
pub struct TrialResult {
    pub rows: Vec<TraceRecord>,
    pub summary: TrialSummary,
}

/// Everything that is fixed for a trial.
struct Rig {
    chain: KinematicChain,
    rings: [ToFRing; 3],
    lidar: Lidar2D,
    program: TaskProgram,
    restricted: Vec<Shape>,
    ring_ticks: usize,
    lidar_ticks: usize,
    dt: f64,
}

impl Rig {
    fn new(config: &Config) -> Result<Self> {
        let diags = config.validate();
        if !diags.is_empty() {
            return Err(Error::Config(diags));
        }
        Ok(Self {
            chain: config.chain()?,
            rings: config.rings()?,
            lidar: config.lidar()?,
            program: config.task_program()?,
            restricted: config.restricted_shapes(),
            ring_ticks: config.ring_ticks(),
            lidar_ticks: config.lidar_ticks(),
            dt: config.dt(),
        })
    }
}

/// Sensing state carried between ticks.
#[derive(Default)]
struct Sensors {
    ring_readings: [Option<RingReading>; 3],
    ring_prev: [Option<f64>; 3],
    lidar_raw: Option<f64>,
    lidar_prev: Option<f64>,
}

fn psi_event(prev: Psi, now: Psi) -> Option<&'static str> {
    match (prev, now) {
        (a, b) if a == b => None,
        (_, Psi::Stop) => Some("stop"),
        (_, Psi::Reduced) => Some("reduce"),
        (_, Psi::Normal) => Some("resume"),
    }
}

fn event_name(e: TaskEvent) -> &'static str {
    match e {
        TaskEvent::Pick => "pick",
        TaskEvent::Place => "place",
        TaskEvent::Done => "done",
    }
}

pub fn run_trial(sim: &SimConfig) -> Result<TrialResult> {
    let rig = Rig::new(&sim.config)?;
    let cfg = &sim.config;
    let params = cfg.ssm.params(sim.mode);
    let lidar_params = cfg.ssm.lidar_params(sim.mode);
    let dt = rig.dt;
    let ring_dt = rig.ring_ticks as f64 * dt;
    let lidar_dt = rig.lidar_ticks as f64 * dt;
    let stale = cfg.sim.stale_periods;

    let (channel_params, max_age): (Vec<SsmParams>, Vec<f64>) = match sim.approach {
        Approach::Real => (vec![params; 3], vec![stale * ring_dt; 3]),
        Approach::Ideal => (vec![params; 3], vec![stale * dt; 3]),
        Approach::Lidar => (vec![lidar_params], vec![stale * lidar_dt]),
    };
    let mut safety = SafetyState::new(channel_params.len());
    let mut last_diag = vec![ChannelDiagnostics::default(); channel_params.len()];
    let mut last_input: Vec<Option<ChannelInput>> = vec![None; channel_params.len()];

    let mut noise = ChaCha8Rng::seed_from_u64(sim.seed);
    let mut sensors = Sensors::default();
    let mut profile = cfg.controller.profile();
    let mut task = TaskState::default();
    let mut joint = scaled_state(&rig.program, 0.0, profile.rho, 0.0);

    let mut rows = Vec::new();
    let mut summary = TrialSummary {
        approach: sim.approach,
        mode: sim.mode,
        seed: sim.seed,
        completed: false,
        completion_time: None,
        end_time: 0.0,
        timeout: sim.timeout,
        ticks: 0,
        items_done: 0,
        ring_samples: 0,
        self_hits: 0,
        unmasked_self_hits: 0,
    };

    let mut k: usize = 0;
    loop {
        let t = k as f64 * dt;
        let pose = rig.chain.pose(&joint.q)?;
        let rings_kin = rig.chain.ring_kinematics(&pose, &joint.qdot);
        let tcp_velocity = pose.tcp_velocity(&joint.qdot);
        let robot: Vec<Capsule> = rig.chain.world_capsules(&pose);

        let human = sim.human.as_ref().map(|h| {
            let (root, v) = advance_avatar(h, t);
            (h.world_capsules(&root), v)
        });
        let human_caps: &[Capsule] = human.as_ref().map_or(&[], |(c, _)| c.as_slice());
        let scene = Scene::assemble(&rig.restricted, &robot, human_caps);

        let d_gt = match &human {
            Some((caps, _)) => Some(ground_truth_min_distance(&robot, caps)?.distance),
            None => None,
        };
        let ring_centers: [Point3<f64>; 3] = rings_kin.map(|r| r.position);
        let ideal = match &human {
            Some((caps, _)) => Some(ideal_min_distance(&ring_centers, caps)?),
            None => None,
        };

        let mut samples: Vec<Option<ChannelSample>> = vec![None; channel_params.len()];

        if k.is_multiple_of(rig.ring_ticks) {
            for (i, ring) in rig.rings.iter().enumerate() {
                let rk = &rings_kin[i];
                let reading = measure_ring(ring, &scene, &rk.pose, t, &mut noise);
                summary.ring_samples += 1;
                summary.self_hits += reading.self_hits();
                summary.unmasked_self_hits += reading.unmasked_self_hits();
                let now = reading.distance.d_min();
                let input = match reading.distance {
                    RingDistance::Clear => ChannelInput::Clear,
                    RingDistance::Detected { vector, norm, .. } => ChannelInput::Detected {
                        distance: norm,
                        k_o: directed_speed_from_ring(now, sensors.ring_prev[i], ring_dt, params.k_omax())?,
                        k_l: rk.velocity.dot(&(vector / norm)),
                        v_l_norm: rk.velocity.norm(),
                    },
                };
                sensors.ring_prev[i] = now;
                sensors.ring_readings[i] = Some(reading);
                if sim.approach == Approach::Real {
                    samples[i] = Some(ChannelSample { t, input });
                }
            }
        }

        if sim.approach == Approach::Ideal {
            for (i, rk) in rings_kin.iter().enumerate() {
                let input = match (&ideal, &human) {
                    (Some(id), Some((_, v_o))) => {
                        let p_lo = id.per_ring[i];
                        let (k_o, k_l) = directed_speeds(&rk.velocity, v_o, &p_lo, &params);
                        ChannelInput::Detected {
                            distance: p_lo.norm(),
                            k_o,
                            k_l,
                            v_l_norm: rk.velocity.norm(),
                        }
                    }
                    _ => ChannelInput::Clear,
                };
                samples[i] = Some(ChannelSample { t, input });
            }
        }

        if k.is_multiple_of(rig.lidar_ticks) {
            let returns = scan(&rig.lidar, &scene);
            let ld = lidar_min_distance(&rig.lidar, &returns);
            let raw = ld.map(|l| l.d_lidar);
            let input = match ld {
                None => ChannelInput::Clear,
                Some(l) => ChannelInput::Detected {
                    distance: l.distance,
                    k_o: directed_speed_from_ring(raw, sensors.lidar_prev, lidar_dt, params.k_omax())?,
                    k_l: tcp_velocity.dot(&l.direction),
                    v_l_norm: tcp_velocity.norm(),
                },
            };
            sensors.lidar_prev = raw;
            sensors.lidar_raw = raw;
            if sim.approach == Approach::Lidar {
                samples[0] = Some(ChannelSample { t, input });
            }
        }

        for (i, s) in samples.iter().enumerate() {
            if let Some(s) = s {
                last_input[i] = Some(s.input);
            }
        }

        let prev_psi = safety.psi;
        let out = ssm_step(&mut safety, t, &samples, &channel_params, &max_age)?;
        for (i, d) in out.channels.iter().enumerate() {
            if d.fresh {
                last_diag[i] = *d;
            } else {
                last_diag[i].psi = d.psi;
            }
        }

        let mut events: Vec<String> = psi_event(prev_psi, out.psi).map(|e| vec![e.to_string()]).unwrap_or_default();

        // trace row for this tick
        let mut channels = [ChannelColumns::default(); 4];
        for (c, r) in channels.iter_mut().zip(&sensors.ring_readings) {
            if let Some(r) = r {
                c.dmin = r.distance.d_min();
                c.mask = Some(r.mask_bits());
            }
        }
        channels[3].dmin = sensors.lidar_raw;
        let active: Vec<usize> = match sim.approach {
            Approach::Real | Approach::Ideal => vec![0, 1, 2],
            Approach::Lidar => vec![3],
        };
        for (slot, &col) in active.iter().enumerate() {
            let d = &last_diag[slot];
            let c = &mut channels[col];
            c.psi = d.psi;
            if let Some(ChannelInput::Detected { distance, k_o, k_l, .. }) = last_input[slot] {
                c.dist = Some(distance);
                c.ko = Some(k_o);
                c.kl = Some(k_l);
                c.dc = Some(d.d_c);
                c.dr = Some(d.d_r);
                c.dsi = Some(d.dsi);
            }
        }
        let d_real = sensors
            .ring_readings
            .iter()
            .flatten()
            .filter_map(|r| r.distance.norm())
            .reduce(f64::min);
        let d_lidar = sensors.lidar_raw.map(|d| crate::lidar::offset_distance(d, rig.lidar.r_o));

        let rho_now = profile.rho;
        let tau_now = task.tau;
        profile.rho_target = target_fraction(out.psi);
        ramp_fraction(&mut profile, dt)?;

        let (next, task_events) = step_task(&rig.program, &mut task, profile.rho, profile.rate, dt)?;
        events.extend(task_events.iter().map(|e| event_name(*e).to_string()));

        rows.push(TraceRecord {
            t,
            q: joint.q.clone(),
            qdot: joint.qdot.clone(),
            rho: rho_now,
            tau: tau_now,
            psi: out.psi,
            tcp_speed: tcp_velocity.norm(),
            d_gt,
            d_ideal: ideal.map(|i| i.distance()),
            d_real,
            d_lidar,
            channels,
            events,
        });

        joint = next;
        k += 1;
        let t_next = k as f64 * dt;
        if task.done {
            summary.completed = true;
            summary.completion_time = Some(t_next);
            break;
        }
        if t_next > sim.timeout {
            break;
        }
    }
    summary.ticks = rows.len();
    summary.end_time = k as f64 * dt;
    summary.items_done = task.items_done;
    Ok(TrialResult { rows, summary })
}

/// Human-free completion time of the task.
pub fn baseline_time(config: &Config) -> Result<f64> {
    let program = config.task_program()?;
    let sim = SimConfig {
        config: config.clone(),
        approach: Approach::Ideal,
        mode: Mode::Vo,
        seed: config.sim.seed,
        human: None,
        timeout: program.nominal_duration() * config.sim.timeout_factor,
    };
    run_trial(&sim)?
        .summary
        .completion_time
        .ok_or_else(|| Error::Contract("human-free baseline did not complete".into()))
}

/// Samples an avatar's root path at `hz` over `[0, duration]`.
pub fn record_trajectory(avatar: &HumanAvatar, duration: f64, hz: f64) -> Result<Trajectory> {
    if !(hz > 0.0 && duration > 0.0) {
        return Err(Error::Contract("recording needs positive rate and duration".into()));
    }
    let n = (duration * hz).ceil() as usize;
    Trajectory::new(
        (0..=n)
            .map(|i| {
                let t = i as f64 / hz;
                (t, advance_avatar(avatar, t).0)
            })
            .collect(),
    )
}

/// The same body following a recorded path.
pub fn replay_avatar(avatar: &HumanAvatar, trajectory: Trajectory) -> HumanAvatar {
    HumanAvatar {
        capsules: avatar.capsules.clone(),
        motion: AvatarMotion::Replay(trajectory),
    }
}
