mod common;

use common::*;
use proptest::prelude::*;
use tofssm::RingId;

#[test]
fn tcp_matches_dh_table() {
    let config = cfg();
    let chain = config.chain().unwrap();
    let poses = [
        config.task.pick.clone(),
        config.task.place.clone(),
        vec![0.3, -0.2, 0.9, 1.1, -0.4, 2.0],
        vec![0.0; 6],
    ];
    for q in poses {
        let fk = chain.pose(&q).unwrap().tcp_position();
        assert!((fk - dh_tcp(&q)).norm() < 1e-9, "{q:?}");
    }
}

#[test]
fn task_poses_sit_over_the_tables() {
    let config = cfg();
    let pick = config.tcp_position_at(&config.task.pick).unwrap();
    let place = config.tcp_position_at(&config.task.place).unwrap();
    assert!((pick.x + 0.8197).abs() < 1e-3 && (pick.z - 0.848).abs() < 1e-3, "{pick}");
    assert!((place.x - 0.8197).abs() < 1e-3 && (place.z - 0.848).abs() < 1e-3, "{place}");
}

#[test]
fn ring_velocity_matches_finite_difference() {
    let config = cfg();
    let chain = config.chain().unwrap();
    let q = [0.4, -1.0, 1.5, -2.0, -1.2, 0.3];
    let qdot = [0.7, -0.5, 1.1, 0.2, -0.9, 1.4];
    let h = 1e-5;
    let at = |s: f64| {
        let qs: Vec<f64> = q.iter().zip(&qdot).map(|(a, v)| a + v * s).collect();
        chain.ring_kinematics(&chain.pose(&qs).unwrap(), &qdot)
    };
    let now = at(0.0);
    let (fwd, back) = (at(h), at(-h));
    for ring in RingId::ALL {
        let i = ring.index();
        let fd = (fwd[i].position - back[i].position) / (2.0 * h);
        assert!((now[i].velocity - fd).norm() < 1e-5, "{ring}");
    }
    let tcp = |s: f64| {
        let qs: Vec<f64> = q.iter().zip(&qdot).map(|(a, v)| a + v * s).collect();
        chain.pose(&qs).unwrap().tcp_position()
    };
    let fd = (tcp(h) - tcp(-h)) / (2.0 * h);
    assert!((chain.tcp_velocity(&q, &qdot).unwrap() - fd).norm() < 1e-5);
}

#[test]
fn base_rotation_alone_moves_tcp_on_a_circle() {
    let config = cfg();
    let chain = config.chain().unwrap();
    let q = config.task.pick.clone();
    let p = chain.pose(&q).unwrap().tcp_position();
    let w = 1.3;
    let v = chain.tcp_velocity(&q, &[w, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
    let r = (p.x * p.x + p.y * p.y).sqrt();
    assert!((v.norm() - w * r).abs() < 1e-9);
    assert!(v.z.abs() < 1e-12);
}

#[test]
fn wrong_length_is_an_error() {
    let chain = cfg().chain().unwrap();
    assert!(chain.pose(&[0.0; 5]).is_err());
    assert!(chain.tcp_velocity(&[0.0; 6], &[0.0; 7]).is_err());
}

proptest! {
    #[test]
    fn tcp_velocity_is_linear_in_qdot(
        q in proptest::collection::vec(-3.0f64..3.0, 6),
        a in proptest::collection::vec(-2.0f64..2.0, 6),
        b in proptest::collection::vec(-2.0f64..2.0, 6),
        s in -3.0f64..3.0,
    ) {
        let chain = cfg().chain().unwrap();
        let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + s * y).collect();
        let lhs = chain.tcp_velocity(&q, &mix).unwrap();
        let rhs = chain.tcp_velocity(&q, &a).unwrap() + chain.tcp_velocity(&q, &b).unwrap() * s;
        prop_assert!((lhs - rhs).norm() < 1e-9);
    }

    #[test]
    fn fk_matches_dh_everywhere(q in proptest::collection::vec(-6.3f64..6.3, 6)) {
        let chain = cfg().chain().unwrap();
        prop_assert!((chain.pose(&q).unwrap().tcp_position() - dh_tcp(&q)).norm() < 1e-9);
    }
}
