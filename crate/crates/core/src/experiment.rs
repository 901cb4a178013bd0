//! Approach x mode x trial matrix runner.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::metrics::{trial_metrics, MetricsReport};
use crate::scene::Trajectory;
use crate::sim::{
    baseline_time, record_trajectory, replay_avatar, run_trial, trial_avatar, Approach, SimConfig, TrialResult, TrialSummary,
};
use crate::ssm::Mode;
use crate::trace::write_trace_file;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SeedPolicy {
    /// Every trial uses the base seed.
    Fixed,
    /// Trial `i` uses `seed + i`.
    #[default]
    PerTrial,
}

#[derive(Debug, Clone)]
pub struct RunMatrix {
    pub approaches: Vec<Approach>,
    pub modes: Vec<Mode>,
    pub trials: usize,
    pub seed: u64,
    pub seed_policy: SeedPolicy,
    /// Recorded human path used for every trial instead of the parametric one.
    pub replay: Option<Trajectory>,
    pub out: Option<PathBuf>,
}

impl RunMatrix {
    /// Full matrix with the config's trial count and seed.
    pub fn full(config: &Config) -> Self {
        Self {
            approaches: Approach::ALL.to_vec(),
            modes: Mode::ALL.to_vec(),
            trials: config.sim.trials,
            seed: config.sim.seed,
            seed_policy: SeedPolicy::PerTrial,
            replay: None,
            out: None,
        }
    }

    pub fn trial_seed(&self, trial: usize) -> u64 {
        match self.seed_policy {
            SeedPolicy::Fixed => self.seed,
            SeedPolicy::PerTrial => self.seed.wrapping_add(trial as u64),
        }
    }

    fn check(&self) -> Result<()> {
        if self.approaches.is_empty() || self.modes.is_empty() || self.trials == 0 {
            return Err(Error::Contract(
                "run matrix needs at least one approach, one mode and one trial".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct CellTrial {
    pub approach: Approach,
    pub mode: Mode,
    pub trial: usize,
    pub result: TrialResult,
}

#[derive(Debug, Clone)]
pub struct MatrixOutput {
    pub t_nohri: f64,
    pub runs: Vec<CellTrial>,
    pub report: MetricsReport,
}

pub fn trace_name(approach: Approach, mode: Mode, trial: usize) -> String {
    format!("{approach}_{mode}_trial{trial}")
}

/// Runs every cell and trial. Within a trial all cells see the same
/// recorded human motion. Results are in (approach, mode, trial) order
/// regardless of scheduling.
pub fn run_matrix(config: &Config, matrix: &RunMatrix) -> Result<MatrixOutput> {
    matrix.check()?;
    let diags = config.validate();
    if !diags.is_empty() {
        return Err(Error::Config(diags));
    }
    let t_nohri = baseline_time(config)?;
    let timeout = t_nohri * config.sim.timeout_factor;

    let humans = (0..matrix.trials)
        .into_par_iter()
        .map(|i| {
            let avatar = trial_avatar(config, matrix.trial_seed(i))?;
            let path = match &matrix.replay {
                Some(traj) => traj.clone(),
                None => record_trajectory(&avatar, timeout, config.rates.robot_hz)?,
            };
            Ok(replay_avatar(&avatar, path))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut jobs = Vec::new();
    for &approach in &matrix.approaches {
        for &mode in &matrix.modes {
            for trial in 0..matrix.trials {
                jobs.push((approach, mode, trial));
            }
        }
    }
    let runs = jobs
        .par_iter()
        .map(|&(approach, mode, trial)| {
            let sim = SimConfig {
                config: config.clone(),
                approach,
                mode,
                seed: matrix.trial_seed(trial),
                human: Some(humans[trial].clone()),
                timeout,
            };
            Ok(CellTrial {
                approach,
                mode,
                trial,
                result: run_trial(&sim)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let metrics = runs
        .iter()
        .map(|r| {
            let s = &r.result.summary;
            trial_metrics(&r.result.rows, r.approach, r.mode, r.trial, s.seed, t_nohri, s.completion_time)
        })
        .collect::<Result<Vec<_>>>()?;
    let report = MetricsReport::aggregate(t_nohri, metrics);
    let out = MatrixOutput { t_nohri, runs, report };
    if let Some(dir) = &matrix.out {
        write_outputs(dir, &out)?;
    }
    Ok(out)
}

/// `traces/<name>.csv` and `traces/<name>.json` per trial, plus the report.
pub fn write_outputs(dir: &Path, out: &MatrixOutput) -> Result<()> {
    let traces = dir.join("traces");
    std::fs::create_dir_all(&traces)?;
    out.runs.par_iter().try_for_each(|r| -> Result<()> {
        let name = trace_name(r.approach, r.mode, r.trial);
        write_trace_file(&traces.join(format!("{name}.csv")), &r.result.rows)?;
        write_summary(&traces.join(format!("{name}.json")), &r.result.summary)
    })?;
    out.report.save(dir)
}

fn write_summary(path: &Path, s: &TrialSummary) -> Result<()> {
    serde_json::to_writer_pretty(std::io::BufWriter::new(std::fs::File::create(path)?), s)?;
    Ok(())
}
