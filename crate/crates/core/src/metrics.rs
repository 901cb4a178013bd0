//! Evaluation metrics over traces and their aggregation across trials.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::Approach;
use crate::ssm::{Mode, Psi};
use crate::trace::TraceRecord;

/// Speed floor for the safety metric, m/s.
pub const SPEED_FLOOR: f64 = 1e-3;

/// `t_NoHRI / t_HRI`; `None` for an incomplete trial.
pub fn productivity(t_nohri: f64, t_hri: Option<f64>) -> Result<Option<f64>> {
    if !(t_nohri > 0.0) {
        return Err(Error::Contract(format!("baseline time must be > 0, got {t_nohri}")));
    }
    match t_hri {
        None => Ok(None),
        Some(t) if t > 0.0 => Ok(Some(t_nohri / t)),
        Some(t) => Err(Error::Contract(format!("completion time must be > 0, got {t}"))),
    }
}

/// Squared separation over tool speed, with the speed floored. The flag
/// reports whether the floor was applied.
pub fn safety_value(d_gt: f64, tool_speed: f64) -> (f64, bool) {
    let floored = tool_speed < SPEED_FLOOR;
    (d_gt * d_gt / tool_speed.max(SPEED_FLOOR), floored)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetySummary {
    pub mean: Option<f64>,
    pub min: Option<f64>,
    pub samples: usize,
    pub floored: usize,
}

pub fn safety_metric(rows: &[TraceRecord]) -> (Vec<(f64, f64, bool)>, SafetySummary) {
    let series: Vec<(f64, f64, bool)> = rows
        .iter()
        .filter_map(|r| {
            let (v, f) = safety_value(r.d_gt?, r.tcp_speed);
            Some((r.t, v, f))
        })
        .collect();
    let n = series.len();
    let summary = SafetySummary {
        mean: (n > 0).then(|| series.iter().map(|s| s.1).sum::<f64>() / n as f64),
        min: series.iter().map(|s| s.1).reduce(f64::min),
        samples: n,
        floored: series.iter().filter(|s| s.2).count(),
    };
    (series, summary)
}

fn approach_column(r: &TraceRecord, approach: Approach) -> Option<f64> {
    match approach {
        Approach::Ideal => r.d_ideal,
        Approach::Real => r.d_real,
        Approach::Lidar => r.d_lidar,
    }
}

/// RMS difference between an approach's distance and ground truth over the
/// ticks where the approach reports a detection.
pub fn rmse_vs_ground_truth(rows: &[TraceRecord], approach: Approach) -> Option<f64> {
    let errs: Vec<f64> = rows.iter().filter_map(|r| Some(approach_column(r, approach)? - r.d_gt?)).collect();
    (!errs.is_empty()).then(|| (errs.iter().map(|e| e * e).sum::<f64>() / errs.len() as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EventMetrics {
    /// Signed, seconds; negative means the stop preceded the crossing.
    pub reaction_times: Vec<f64>,
    pub stop_durations: Vec<f64>,
    pub reduce_durations: Vec<f64>,
    /// Tool speed at the stop command minus speed once `rho` reached 0.
    pub delta_v_at_stop: Vec<f64>,
    pub separation_at_stop: Vec<f64>,
    pub separation_at_reduce: Vec<f64>,
}

/// Maximal runs of ticks in state `psi`, as `[start, end)` row indices.
fn episodes(rows: &[TraceRecord], psi: Psi) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, r) in rows.iter().enumerate() {
        match (r.psi == psi, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push((s, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, rows.len()));
    }
    out
}

fn episode_duration(rows: &[TraceRecord], (s, e): (usize, usize)) -> f64 {
    let end = if e < rows.len() { rows[e].t } else { rows[rows.len() - 1].t };
    end - rows[s].t
}

pub fn event_metrics(rows: &[TraceRecord]) -> EventMetrics {
    let mut m = EventMetrics::default();
    let stops = episodes(rows, Psi::Stop);
    let mut window_start = 0;
    for &(s, e) in &stops {
        // first channel reporting stop is taken as the cause
        let cause = rows[s].channels.iter().position(|c| c.psi == Some(Psi::Stop));
        if let Some(c) = cause {
            let inside = |j: usize| {
                let r = &rows[j];
                matches!((r.d_gt, r.channels[c].dc), (Some(g), Some(dc)) if g < dc)
            };
            // start of the sub-threshold run holding the stop tick, else the
            // first crossing during the stop
            let crossing = if inside(s) {
                let mut j = s;
                while j > window_start && inside(j - 1) {
                    j -= 1;
                }
                Some(j)
            } else {
                (s..e).find(|&j| inside(j))
            };
            if let Some(j) = crossing {
                m.reaction_times.push(rows[s].t - rows[j].t);
            }
        }
        if let Some(z) = (s..e).find(|&j| rows[j].rho == 0.0) {
            m.delta_v_at_stop.push(rows[s].tcp_speed - rows[z].tcp_speed);
        }
        m.stop_durations.push(episode_duration(rows, (s, e)));
        window_start = e;
    }
    for ep in episodes(rows, Psi::Reduced) {
        m.reduce_durations.push(episode_duration(rows, ep));
    }
    for r in rows {
        if let Some(g) = r.d_gt {
            if r.events.iter().any(|e| e == "stop") {
                m.separation_at_stop.push(g);
            }
            if r.events.iter().any(|e| e == "reduce") {
                m.separation_at_reduce.push(g);
            }
        }
    }
    m
}

/// Order-independent mean.
fn mean(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    Some(s.iter().sum::<f64>() / s.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub approach: Approach,
    pub mode: Mode,
    pub trial: usize,
    pub seed: u64,
    pub completed: bool,
    pub completion_time: Option<f64>,
    pub productivity: Option<f64>,
    pub safety: SafetySummary,
    pub rmse: Option<f64>,
    pub reaction_time: Option<f64>,
    pub stop_duration: Option<f64>,
    pub reduce_duration: Option<f64>,
    pub delta_v_at_stop: Option<f64>,
    pub separation_at_stop: Option<f64>,
    pub separation_at_reduce: Option<f64>,
    pub stops: usize,
    pub reduces: usize,
}

pub fn trial_metrics(
    rows: &[TraceRecord],
    approach: Approach,
    mode: Mode,
    trial: usize,
    seed: u64,
    t_nohri: f64,
    completion_time: Option<f64>,
) -> Result<TrialMetrics> {
    let ev = event_metrics(rows);
    Ok(TrialMetrics {
        approach,
        mode,
        trial,
        seed,
        completed: completion_time.is_some(),
        completion_time,
        productivity: productivity(t_nohri, completion_time)?,
        safety: safety_metric(rows).1,
        rmse: rmse_vs_ground_truth(rows, approach),
        reaction_time: mean(&ev.reaction_times),
        stop_duration: mean(&ev.stop_durations),
        reduce_duration: mean(&ev.reduce_durations),
        delta_v_at_stop: mean(&ev.delta_v_at_stop),
        separation_at_stop: mean(&ev.separation_at_stop),
        separation_at_reduce: mean(&ev.separation_at_reduce),
        stops: ev.stop_durations.len(),
        reduces: ev.reduce_durations.len(),
    })
}

/// Completion time recovered from a trace: the first `done` event ends the
/// task one tick after it is logged.
pub fn completion_from_trace(rows: &[TraceRecord]) -> Option<f64> {
    let i = rows.iter().position(|r| r.events.iter().any(|e| e == "done"))?;
    let dt = if rows.len() > 1 { rows[1].t - rows[0].t } else { 0.0 };
    Some(rows[i].t + dt)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub n: usize,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        let m = mean(values);
        let std = m.filter(|_| n >= 2).map(|m| {
            let sq: Vec<f64> = values.iter().map(|v| (v - m).powi(2)).collect();
            (mean(&sq).unwrap() * n as f64 / (n - 1) as f64).sqrt()
        });
        Self { mean: m, std, n }
    }

    fn over(trials: &[&TrialMetrics], f: impl Fn(&TrialMetrics) -> Option<f64>) -> Self {
        Self::of(&trials.iter().filter_map(|t| f(t)).collect::<Vec<_>>())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub approach: Approach,
    pub mode: Mode,
    pub trials: usize,
    pub completed: usize,
    pub productivity: Stat,
    pub safety_mean: Stat,
    pub safety_min: Stat,
    pub rmse: Stat,
    pub reaction_time: Stat,
    pub stop_duration: Stat,
    pub reduce_duration: Stat,
    pub delta_v_at_stop: Stat,
    pub separation_at_stop: Stat,
    pub separation_at_reduce: Stat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub t_nohri: f64,
    pub cells: Vec<CellReport>,
    pub trials: Vec<TrialMetrics>,
}

impl MetricsReport {
    /// Groups trials by (approach, mode) in first-seen order.
    pub fn aggregate(t_nohri: f64, trials: Vec<TrialMetrics>) -> Self {
        let mut keys: Vec<(Approach, Mode)> = Vec::new();
        for t in &trials {
            if !keys.contains(&(t.approach, t.mode)) {
                keys.push((t.approach, t.mode));
            }
        }
        let cells = keys
            .into_iter()
            .map(|(approach, mode)| {
                let ts: Vec<&TrialMetrics> = trials.iter().filter(|t| t.approach == approach && t.mode == mode).collect();
                CellReport {
                    approach,
                    mode,
                    trials: ts.len(),
                    completed: ts.iter().filter(|t| t.completed).count(),
                    productivity: Stat::over(&ts, |t| t.productivity),
                    safety_mean: Stat::over(&ts, |t| t.safety.mean),
                    safety_min: Stat::over(&ts, |t| t.safety.min),
                    rmse: Stat::over(&ts, |t| t.rmse),
                    reaction_time: Stat::over(&ts, |t| t.reaction_time),
                    stop_duration: Stat::over(&ts, |t| t.stop_duration),
                    reduce_duration: Stat::over(&ts, |t| t.reduce_duration),
                    delta_v_at_stop: Stat::over(&ts, |t| t.delta_v_at_stop),
                    separation_at_stop: Stat::over(&ts, |t| t.separation_at_stop),
                    separation_at_reduce: Stat::over(&ts, |t| t.separation_at_reduce),
                }
            })
            .collect();
        Self { t_nohri, cells, trials }
    }

    pub fn cell(&self, approach: Approach, mode: Mode) -> Option<&CellReport> {
        self.cells.iter().find(|c| c.approach == approach && c.mode == mode)
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    /// One row per cell, mean and std of each metric.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let names = [
            "productivity",
            "safety_mean",
            "safety_min",
            "rmse",
            "reaction_time",
            "stop_duration",
            "reduce_duration",
            "delta_v_at_stop",
            "separation_at_stop",
            "separation_at_reduce",
        ];
        let mut header = vec!["approach".to_string(), "mode".into(), "trials".into(), "completed".into()];
        for n in names {
            header.push(format!("{n}_mean"));
            header.push(format!("{n}_std"));
        }
        wtr.write_record(&header)?;
        let cell_str = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for c in &self.cells {
            let mut rec = vec![
                c.approach.to_string(),
                c.mode.to_string(),
                c.trials.to_string(),
                c.completed.to_string(),
            ];
            for s in [
                c.productivity,
                c.safety_mean,
                c.safety_min,
                c.rmse,
                c.reaction_time,
                c.stop_duration,
                c.reduce_duration,
                c.delta_v_at_stop,
                c.separation_at_stop,
                c.separation_at_reduce,
            ] {
                rec.push(cell_str(s.mean));
                rec.push(cell_str(s.std));
            }
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.write_json(std::io::BufWriter::new(std::fs::File::create(dir.join("report.json"))?))?;
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(dir.join("report.csv"))?))
    }
}
