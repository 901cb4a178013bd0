//! Tri-modal speed and separation monitoring.
//!
//! Each sensing channel (a ToF ring, an ideal link-centre oracle, or the
//! lidar's single virtual channel) turns a distance and directed speeds into
//! critical/reduced distances, normalises them into distance safety indices,
//! filters the index and picks stop/reduced/normal. The robot runs at the
//! most dangerous channel's state.

use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Diagnostic, Error, Result};

/// Operating state. Ordered by danger: `Stop < Reduced < Normal`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Psi {
    Stop = 0,
    Reduced = 1,
    Normal = 2,
}

impl Psi {
    pub fn level(self) -> u8 {
        self as u8
    }

    pub fn from_level(level: u8) -> Option<Psi> {
        match level {
            0 => Some(Psi::Stop),
            1 => Some(Psi::Reduced),
            2 => Some(Psi::Normal),
            _ => None,
        }
    }
}

impl fmt::Display for Psi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Psi::Stop => "stop",
            Psi::Reduced => "reduced",
            Psi::Normal => "normal",
        })
    }
}

/// SSM configuration: directed obstacle speed, directed link speed, or
/// fixed separation thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
pub enum Mode {
    #[default]
    Vo,
    Vr,
    SM,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Vo, Mode::Vr, Mode::SM];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Vo => "Vo",
            Mode::Vr => "Vr",
            Mode::SM => "SM",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "vo" => Ok(Mode::Vo),
            "vr" => Ok(Mode::Vr),
            "sm" => Ok(Mode::SM),
            _ => Err(Error::Contract(format!("unknown mode {s:?}; expected Vo, Vr or SM"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsmParams {
    pub mode: Mode,
    pub t_r: f64,
    pub t_stop: f64,
    pub t_red: f64,
    pub v_lmax: f64,
    pub v_hmax: f64,
    pub c_dc: f64,
    pub b_min: f64,
    pub fixed_dc: f64,
    pub fixed_dr: f64,
    pub alpha_i: f64,
    pub alpha_d: f64,
}

impl SsmParams {
    pub fn k_omax(&self) -> f64 {
        self.v_lmax + self.v_hmax
    }

    pub fn k_lmax(&self) -> f64 {
        self.v_lmax
    }

    /// Directed-speed ceiling of the active mode.
    pub fn k_max(&self) -> f64 {
        match self.mode {
            Mode::Vr => self.k_lmax(),
            Mode::Vo | Mode::SM => self.k_omax(),
        }
    }

    pub fn with_mode(self, mode: Mode) -> Self {
        Self { mode, ..self }
    }

    /// Field-level invariant violations; empty when valid. `prefix` names
    /// the config section.
    pub fn diagnostics(&self, prefix: &str) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        let mut positive = |name: &str, v: f64| {
            if !(v > 0.0 && v.is_finite()) {
                out.push(Diagnostic::new(format!("{prefix}.{name}"), format!("must be > 0, got {v}")));
            }
        };
        positive("T_R", self.t_r);
        positive("T_stop", self.t_stop);
        positive("T_red", self.t_red);
        positive("V_lmax", self.v_lmax);
        positive("V_hmax", self.v_hmax);
        positive("C_dC", self.c_dc);
        positive("fixed_dC", self.fixed_dc);
        if !(self.b_min >= 0.0) {
            out.push(Diagnostic::new(
                format!("{prefix}.B_min"),
                format!("must be >= 0, got {}", self.b_min),
            ));
        }
        if !(self.fixed_dr > self.fixed_dc) {
            out.push(Diagnostic::new(
                format!("{prefix}.fixed_dR"),
                format!("fixed_dR ({}) must exceed fixed_dC ({})", self.fixed_dr, self.fixed_dc),
            ));
        }
        for (name, a) in [("alpha_I", self.alpha_i), ("alpha_D", self.alpha_d)] {
            if !(a > 0.0 && a <= 1.0) {
                out.push(Diagnostic::new(format!("{prefix}.{name}"), format!("must lie in (0, 1], got {a}")));
            }
        }
        out
    }
}

/// Closing speeds of obstacle-relative-to-link and of the link alone along
/// the link-to-obstacle direction. Positive means closing.
pub fn directed_speeds(v_l: &Vector3<f64>, v_o: &Vector3<f64>, p_lo: &Vector3<f64>, params: &SsmParams) -> (f64, f64) {
    let n = p_lo.norm();
    if n == 0.0 {
        return (params.k_omax(), params.k_lmax());
    }
    let u = p_lo / n;
    ((v_l - v_o).dot(&u), v_l.dot(&u))
}

pub fn critical_distance(k: f64, v_l_norm: f64, params: &SsmParams) -> f64 {
    let k_max = params.k_max();
    let k = k.clamp(0.0, k_max);
    k_max * params.t_r / 2.0 + k * params.t_stop / 2.0 + params.b_min.max(v_l_norm * params.t_stop / 2.0) + params.c_dc
}

/// Extra margin that keeps a stopped or slowed robot from flickering back
/// to a faster state.
pub fn recovery_buffer(psi_prev: Psi, params: &SsmParams) -> f64 {
    f64::from(Psi::Normal.level() - psi_prev.level()) * params.v_lmax * params.t_red / 4.0
}

pub fn reduced_distance(k: f64, psi_prev: Psi, d_c: f64, params: &SsmParams) -> f64 {
    let k_max = params.k_max();
    let k = k.clamp(0.0, k_max);
    k_max * params.t_r + k * 0.75 * params.t_red + recovery_buffer(psi_prev, params) + d_c
}

/// Normalised inverse-square distance index, capped at 1.
pub fn dsi(distance: f64, c_dc: f64) -> f64 {
    if distance <= 0.0 {
        return 1.0;
    }
    ((c_dc / distance).powi(2)).min(1.0)
}

/// `(DSI, DSI_C, DSI_R)`.
pub fn dsi_and_thresholds(distance: f64, d_c: f64, d_r: f64, c_dc: f64) -> (f64, f64, f64) {
    (dsi(distance, c_dc), (c_dc / d_c).powi(2), (c_dc / d_r).powi(2))
}

/// One step of the asymmetric index filter. Returns the state and the
/// filtered index, which becomes the next `dsi_last`.
pub fn update_ring_state(dsi: f64, dsi_c: f64, dsi_r: f64, dsi_last: f64, alpha_i: f64, alpha_d: f64) -> (Psi, f64) {
    let alpha = if dsi < dsi_last {
        alpha_i
    } else if dsi >= dsi_c {
        1.0
    } else {
        alpha_d
    };
    let hat = alpha * dsi + (1.0 - alpha) * dsi_last;
    let psi = if hat <= dsi_r {
        Psi::Normal
    } else if hat < dsi_c {
        Psi::Reduced
    } else {
        Psi::Stop
    };
    (psi, hat)
}

pub fn fuse_states(states: &[Psi]) -> Psi {
    states.iter().copied().min().unwrap_or(Psi::Normal)
}

/// Classic protective separation for audit: human and robot speeds over
/// reaction and stopping time plus the fixed margins.
pub fn protective_distance_reference(v_h: f64, v_r: f64, params: &SsmParams) -> f64 {
    v_h * (params.t_r + params.t_stop) + v_r * params.t_r + params.b_min + params.c_dc
}

/// What a channel saw on the tick it was sampled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChannelInput {
    /// Nothing within sensing range.
    Clear,
    Detected {
        /// Link-to-obstacle distance.
        distance: f64,
        k_o: f64,
        k_l: f64,
        /// Speed of the link the channel is attached to.
        v_l_norm: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelSample {
    pub t: f64,
    pub input: ChannelInput,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelState {
    pub psi: Psi,
    pub dsi_last: f64,
    pub last_sample: Option<f64>,
}

impl Default for ChannelState {
    fn default() -> Self {
        Self {
            psi: Psi::Normal,
            dsi_last: 0.0,
            last_sample: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SafetyState {
    pub channels: Vec<ChannelState>,
    pub psi: Psi,
    pub psi_prev: Psi,
}

impl SafetyState {
    pub fn new(channels: usize) -> Self {
        Self {
            channels: vec![ChannelState::default(); channels],
            psi: Psi::Normal,
            psi_prev: Psi::Normal,
        }
    }
}

/// Per-channel quantities from the most recent evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ChannelDiagnostics {
    pub distance: Option<f64>,
    pub k: f64,
    pub d_c: f64,
    pub d_r: f64,
    pub dsi: f64,
    pub dsi_c: f64,
    pub dsi_r: f64,
    pub dsi_hat: f64,
    pub psi: Option<Psi>,
    pub stale: bool,
    /// A new sample was consumed this tick.
    pub fresh: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub psi: Psi,
    pub channels: Vec<ChannelDiagnostics>,
}

/// Thresholds and filter update for one fresh channel sample.
pub fn evaluate_channel(
    input: &ChannelInput,
    state: &ChannelState,
    psi_prev: Psi,
    params: &SsmParams,
) -> (ChannelState, ChannelDiagnostics) {
    match *input {
        ChannelInput::Clear => (
            ChannelState {
                psi: Psi::Normal,
                dsi_last: 0.0,
                last_sample: state.last_sample,
            },
            ChannelDiagnostics {
                psi: Some(Psi::Normal),
                fresh: true,
                ..Default::default()
            },
        ),
        ChannelInput::Detected {
            distance,
            k_o,
            k_l,
            v_l_norm,
        } => {
            let (k, d_c, d_r) = match params.mode {
                Mode::SM => (0.0, params.fixed_dc, params.fixed_dr),
                Mode::Vo | Mode::Vr => {
                    let k = if params.mode == Mode::Vo { k_o } else { k_l }.clamp(0.0, params.k_max());
                    let d_c = critical_distance(k, v_l_norm, params);
                    (k, d_c, reduced_distance(k, psi_prev, d_c, params))
                }
            };
            let (dsi, dsi_c, dsi_r) = dsi_and_thresholds(distance, d_c, d_r, params.c_dc);
            let (psi, hat) = update_ring_state(dsi, dsi_c, dsi_r, state.dsi_last, params.alpha_i, params.alpha_d);
            (
                ChannelState {
                    psi,
                    dsi_last: hat,
                    last_sample: state.last_sample,
                },
                ChannelDiagnostics {
                    distance: Some(distance),
                    k,
                    d_c,
                    d_r,
                    dsi,
                    dsi_c,
                    dsi_r,
                    dsi_hat: hat,
                    psi: Some(psi),
                    stale: false,
                    fresh: true,
                },
            )
        }
    }
}

/// Advances the safety state by one control tick.
///
/// `samples[i]` is channel `i`'s new sample, if one arrived this tick, and
/// `params[i]` its parameters (the lidar channel uses its own cushion).
/// A channel whose newest sample is older than `max_age[i]` reports stop.
pub fn ssm_step(
    state: &mut SafetyState,
    now: f64,
    samples: &[Option<ChannelSample>],
    params: &[SsmParams],
    max_age: &[f64],
) -> Result<StepOutput> {
    let n = state.channels.len();
    for len in [samples.len(), params.len(), max_age.len()] {
        if len != n {
            return Err(Error::Dimension { expected: n, got: len });
        }
    }
    let psi_prev = state.psi;
    let mut diags = Vec::with_capacity(n);
    for i in 0..n {
        let ch = &mut state.channels[i];
        let mut diag = match &samples[i] {
            Some(sample) => {
                if sample.t > now {
                    return Err(Error::Contract(format!(
                        "channel {i} sample at {} is newer than tick {now}",
                        sample.t
                    )));
                }
                let (mut next, diag) = evaluate_channel(&sample.input, ch, psi_prev, &params[i]);
                next.last_sample = Some(sample.t);
                *ch = next;
                diag
            }
            None => ChannelDiagnostics {
                psi: Some(ch.psi),
                dsi_hat: ch.dsi_last,
                ..Default::default()
            },
        };
        let stale = ch.last_sample.is_none_or(|t| now - t > max_age[i] + 1e-9);
        if stale {
            ch.psi = Psi::Stop;
            diag.psi = Some(Psi::Stop);
            diag.stale = true;
        }
        diags.push(diag);
    }
    let fused = fuse_states(&state.channels.iter().map(|c| c.psi).collect::<Vec<_>>());
    state.psi_prev = psi_prev;
    state.psi = fused;
    Ok(StepOutput {
        psi: fused,
        channels: diags,
    })
}
