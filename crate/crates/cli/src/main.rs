use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use tofssm::experiment::{trace_name, SeedPolicy};
use tofssm::latency::measure_ray_latency;
use tofssm::metrics::{trial_metrics, CellReport, MetricsReport, Stat};
use tofssm::sim::{baseline_time, record_trajectory, trial_avatar};
use tofssm::trace::read_trace_file;
use tofssm::{run_matrix, Approach, Config, Error, Mode, RunMatrix, Trajectory, TrialSummary};

#[derive(Parser)]
#[command(
    name = "tofssm",
    version,
    about = "Speed-and-separation monitoring simulator with on-link ToF rings"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Config file; the built-in default when omitted.
    #[arg(long, env = "TOFSSM_CONFIG")]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Policy {
    Fixed,
    PerTrial,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Comma-separated subset of real, ideal, lidar.
    #[arg(long, env = "TOFSSM_APPROACHES", value_delimiter = ',', default_value = "real,ideal,lidar")]
    approaches: Vec<Approach>,
    /// Comma-separated subset of Vo, Vr, SM.
    #[arg(long, env = "TOFSSM_MODES", value_delimiter = ',', default_value = "Vo,Vr,SM")]
    modes: Vec<Mode>,
    /// Trials per cell; the config's count when omitted.
    #[arg(long, env = "TOFSSM_TRIALS")]
    trials: Option<usize>,
    /// Base seed; the config's seed when omitted.
    #[arg(long, env = "TOFSSM_SEED")]
    seed: Option<u64>,
    #[arg(long, env = "TOFSSM_SEED_POLICY", value_enum, default_value = "per-trial")]
    seed_policy: Policy,
    #[arg(long, env = "TOFSSM_OUT", default_value = "out")]
    out: PathBuf,
    /// Recorded human trajectory (t,x,y,z CSV) replayed in every trial.
    #[arg(long, env = "TOFSSM_REPLAY")]
    replay: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the approach x mode x trial matrix and write traces and a report.
    Run(RunArgs),
    /// Check a config file without running anything.
    Validate {
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Record the configured human path to a trajectory file.
    Record {
        #[command(flatten)]
        config: ConfigArg,
        /// Seed that picks the start phase.
        #[arg(long, env = "TOFSSM_SEED")]
        seed: Option<u64>,
        /// Seconds to record.
        #[arg(long, default_value_t = 60.0)]
        duration: f64,
        /// Sample rate; the robot rate when omitted.
        #[arg(long)]
        hz: Option<f64>,
        #[arg(long, env = "TOFSSM_OUT", default_value = "human.csv")]
        out: PathBuf,
    },
    /// Recompute the report from the traces in a run directory.
    Report {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, env = "TOFSSM_OUT", default_value = "out")]
        out: PathBuf,
    },
    /// Time one tick of ring sensing and masking (600 rays).
    Bench {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, default_value_t = 2000)]
        iterations: usize,
    },
}

fn load_config(arg: &ConfigArg) -> Result<Config, Error> {
    match &arg.config {
        Some(p) => Config::load(p),
        None => Ok(Config::default_config()),
    }
}

fn fmt_stat(s: &Stat, digits: usize) -> String {
    match (s.mean, s.std) {
        (Some(m), Some(sd)) => format!("{m:.digits$} ± {sd:.digits$}"),
        (Some(m), None) => format!("{m:.digits$}"),
        _ => "-".into(),
    }
}

fn print_table(report: &MetricsReport) {
    println!("t_NoHRI = {:.3} s", report.t_nohri);
    println!(
        "{:<8} {:<4} {:>9} {:>18} {:>20} {:>18}",
        "approach", "mode", "completed", "productivity", "safety avg [m s]", "rmse [m]"
    );
    for c in &report.cells {
        print_row(c);
    }
}

fn print_row(c: &CellReport) {
    println!(
        "{:<8} {:<4} {:>5}/{:<3} {:>18} {:>20} {:>18}",
        c.approach.name(),
        c.mode.name(),
        c.completed,
        c.trials,
        fmt_stat(&c.productivity, 3),
        fmt_stat(&c.safety_mean, 1),
        fmt_stat(&c.rmse, 3)
    );
}

fn run(args: RunArgs) -> anyhow::Result<()> {
    let RunArgs {
        config,
        approaches,
        modes,
        trials,
        seed,
        seed_policy,
        out,
        replay,
    } = args;
    let config = load_config(&config)?;
    let replay = replay
        .map(|p| Trajectory::load(&p).with_context(|| format!("reading {}", p.display())))
        .transpose()?;
    let matrix = RunMatrix {
        approaches,
        modes,
        trials: trials.unwrap_or(config.sim.trials),
        seed: seed.unwrap_or(config.sim.seed),
        seed_policy: match seed_policy {
            Policy::Fixed => SeedPolicy::Fixed,
            Policy::PerTrial => SeedPolicy::PerTrial,
        },
        replay,
        out: Some(out.clone()),
    };
    let output = run_matrix(&config, &matrix)?;
    print_table(&output.report);
    let incomplete = output.runs.iter().filter(|r| !r.result.summary.completed).count();
    if incomplete > 0 {
        println!("{incomplete} trial(s) timed out before finishing the task");
    }
    println!("{} traces and report written to {}", output.runs.len(), out.display());
    Ok(())
}

fn parse_trace_name(stem: &str) -> Option<(Approach, Mode, usize)> {
    let mut it = stem.splitn(3, '_');
    let a = it.next()?.parse().ok()?;
    let m = it.next()?.parse().ok()?;
    let n = it.next()?.strip_prefix("trial")?.parse().ok()?;
    Some((a, m, n))
}

fn report(config: &ConfigArg, out: &Path) -> anyhow::Result<()> {
    let config = load_config(config)?;
    let dir = out.join("traces");
    let mut entries: Vec<(Approach, Mode, usize, PathBuf)> = Vec::new();
    for e in std::fs::read_dir(&dir).with_context(|| format!("reading {}", dir.display()))? {
        let p = e?.path();
        if p.extension().is_some_and(|x| x == "csv") {
            let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
            match parse_trace_name(stem) {
                Some((a, m, n)) if trace_name(a, m, n) == stem => entries.push((a, m, n, p)),
                _ => bail!("unexpected trace file name {}", p.display()),
            }
        }
    }
    if entries.is_empty() {
        bail!("no traces in {}", dir.display());
    }
    entries.sort_by_key(|e| (e.0, Mode::ALL.iter().position(|m| *m == e.1), e.2));
    let t_nohri = baseline_time(&config)?;
    let mut trials = Vec::new();
    for (a, m, n, p) in &entries {
        let rows = read_trace_file(p).with_context(|| format!("reading {}", p.display()))?;
        let summary_path = p.with_extension("json");
        let summary: TrialSummary =
            serde_json::from_reader(std::fs::File::open(&summary_path).with_context(|| format!("reading {}", summary_path.display()))?)?;
        trials.push(trial_metrics(&rows, *a, *m, *n, summary.seed, t_nohri, summary.completion_time)?);
    }
    let report = MetricsReport::aggregate(t_nohri, trials);
    report.save(out)?;
    print_table(&report);
    println!("report rebuilt from {} traces in {}", entries.len(), out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Validate { config } => match &config.config {
            None => {
                println!("built-in default config: ok");
                Ok(())
            }
            Some(p) => Config::load(p).map(|_| println!("{}: ok", p.display())).map_err(Into::into),
        },
        Command::Record {
            config,
            seed,
            duration,
            hz,
            out,
        } => (|| {
            let config = load_config(&config)?;
            let avatar = trial_avatar(&config, seed.unwrap_or(config.sim.seed))?;
            let traj = record_trajectory(&avatar, duration, hz.unwrap_or(config.rates.robot_hz))?;
            traj.save(&out)?;
            println!("{} samples written to {}", traj.samples().len(), out.display());
            Ok(())
        })(),
        Command::Report { config, out } => report(&config, &out),
        Command::Bench { config, iterations } => (|| {
            let config = load_config(&config)?;
            let r = measure_ray_latency(&config, iterations)?;
            println!(
                "{} rays, {} primitives, {} iterations: mean {:.3} ms, max {:.3} ms (budget {} ms, {})",
                r.rays,
                r.primitives,
                r.iterations,
                r.mean_ms,
                r.max_ms,
                r.budget_ms,
                if r.within_budget { "within" } else { "over" }
            );
            Ok(())
        })(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
