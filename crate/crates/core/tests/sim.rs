mod common;

use common::*;
use tofssm::scene::Trajectory;
use tofssm::sim::{baseline_time, record_trajectory, replay_avatar, run_trial, trial_avatar};
use tofssm::trace::{read_trace, write_trace};
use tofssm::{Approach, Mode, Psi, SimConfig};

fn sim(approach: Approach, mode: Mode, seed: u64, timeout: f64) -> SimConfig {
    let config = cfg();
    let human = Some(trial_avatar(&config, seed).unwrap());
    SimConfig {
        config,
        approach,
        mode,
        seed,
        human,
        timeout,
    }
}

#[test]
fn human_free_run_stays_normal_and_completes() {
    let config = cfg();
    for approach in Approach::ALL {
        let r = run_trial(&SimConfig {
            config: config.clone(),
            approach,
            mode: Mode::SM,
            seed: 3,
            human: None,
            timeout: 200.0,
        })
        .unwrap();
        assert!(r.summary.completed, "{approach}");
        assert!(r.rows.iter().all(|row| row.psi == Psi::Normal), "{approach}");
        assert_eq!(r.summary.items_done, config.task.items);
        assert_eq!(r.summary.unmasked_self_hits, 0);
        assert!(r.summary.self_hits > 0);
    }
    let program = config.task_program().unwrap();
    let t = baseline_time(&config).unwrap();
    assert!(t >= program.nominal_duration() && t < program.nominal_duration() + 0.1, "{t}");
}

#[test]
fn post_beside_tool_ring_stops_the_arm_in_time() {
    let config = cfg();
    for approach in Approach::ALL {
        for mode in Mode::ALL {
            let l = liveness(&config, approach, mode);
            let t_zero = l.t_zero.unwrap_or_else(|| panic!("{approach} {mode} never stopped"));
            assert!(t_zero <= l.bound + 1e-9, "{approach} {mode}: {t_zero} > {}", l.bound);
            assert!(l.held, "{approach} {mode}");
            assert!(l.result.rows.iter().any(|r| r.events.iter().any(|e| e == "stop")));
        }
    }
}

#[test]
fn stop_time_oracle_matches_ramp_limits() {
    // continuous trapezoid in rate: 0.05 s up, 0.15 s cruise, 0.05 s down;
    // the discrete ramp lands within a few ticks of it
    let t = ramp_stop_time(&cfg());
    let slack = 3.0 * cfg().dt();
    assert!((0.25 - slack..=0.25 + slack).contains(&t), "{t}");
}

#[test]
fn same_seed_same_trace() {
    let s = sim(Approach::Real, Mode::Vo, 77, 12.0);
    let a = run_trial(&s).unwrap();
    let b = run_trial(&s).unwrap();
    let (mut ba, mut bb) = (Vec::new(), Vec::new());
    write_trace(&mut ba, &a.rows).unwrap();
    write_trace(&mut bb, &b.rows).unwrap();
    assert_eq!(ba, bb);
    assert_eq!(a.summary, b.summary);
    let c = run_trial(&sim(Approach::Real, Mode::Vo, 78, 12.0)).unwrap();
    assert_ne!(a.rows, c.rows);
}

#[test]
fn trace_survives_csv() {
    let r = run_trial(&sim(Approach::Lidar, Mode::SM, 5, 4.0)).unwrap();
    let mut buf = Vec::new();
    write_trace(&mut buf, &r.rows).unwrap();
    assert_eq!(read_trace(&buf[..]).unwrap(), r.rows);
}

#[test]
fn replayed_recording_reproduces_the_trial() {
    let config = cfg();
    let avatar = trial_avatar(&config, 9).unwrap();
    let rec = record_trajectory(&avatar, 8.0, config.rates.robot_hz).unwrap();
    let mut buf = Vec::new();
    rec.write_csv(&mut buf).unwrap();
    let back = Trajectory::read_csv(&buf[..]).unwrap();
    assert_eq!(back, rec);

    let run = |human| {
        run_trial(&SimConfig {
            config: config.clone(),
            approach: Approach::Ideal,
            mode: Mode::Vr,
            seed: 9,
            human: Some(human),
            timeout: 6.0,
        })
        .unwrap()
    };
    let a = run(replay_avatar(&avatar, rec));
    let b = run(replay_avatar(&avatar, back));
    assert_eq!(a.rows, b.rows);
    // samples land on ticks, so replayed positions equal the parametric ones
    let p = run(avatar);
    for (x, y) in a.rows.iter().zip(&p.rows).take(300) {
        assert!((x.d_gt.unwrap() - y.d_gt.unwrap()).abs() < 1e-9);
    }
}

#[test]
fn truncated_recording_is_rejected_with_line() {
    let text = "t,x,y,z\n0,0,0,0\n0.008,0.1,0";
    match Trajectory::read_csv(text.as_bytes()) {
        Err(tofssm::Error::Trajectory { line, .. }) => assert_eq!(line, 3),
        other => panic!("{other:?}"),
    }
    assert!(Trajectory::read_csv("t,x,y,z\n0,0,0,0\n0,1,1,1\n".as_bytes()).is_err());
}

#[test]
fn speed_scaling_keeps_the_path() {
    let config = cfg();
    let r = run_trial(&sim(Approach::Real, Mode::Vo, config.sim.seed, 500.0)).unwrap();
    assert!(r.rows.iter().any(|x| x.rho > 0.0 && x.rho < 1.0));
    assert!(path_deviation(&config, &r) < 1e-9);
}
