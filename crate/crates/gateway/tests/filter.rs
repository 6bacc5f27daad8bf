mod common;

use common::*;
use greensim_core::engine::RoverView;
use greensim_core::rover::{ArmConfig, SonarRing, JOINT_COUNT};
use greensim_core::{CommandKind, MissionCommand, Scenario};
use greensim_gateway::{SafetyPolicy, ESTOP_TOPIC, STATUS_TOPIC};
use greensim_messaging::{AckStatus, Kind};
use proptest::prelude::*;
use serde_json::json;

#[test]
fn elbow_plus_thirty_from_zero_is_approved_and_executed() {
    let mut sys = system(config(0, 0), Scenario::default_greenhouse());
    assert_eq!(sys.engine().world().rover.arm.q, [0.0; JOINT_COUNT]);
    let c = login(&mut sys, LAB_TOKEN);
    let ack = command(&mut sys, c, "/rover/arm/cmd", elbow_delta(30f64.to_radians()), 5_000);
    assert_eq!(ack.status, AckStatus::Success, "{ack:?}");
    // The ack confirms the plan; execution at 30 deg/s takes a second.
    sys.advance(1_500);
    let q = sys.engine().world().rover.arm.q;
    assert!((q[2] - 30f64.to_radians()).abs() < 1e-6, "{q:?}");
}

#[test]
fn wheel_speed_over_limit_is_rejected() {
    let mut sys = system(config(0, 0), Scenario::default_greenhouse());
    let c = login(&mut sys, LAB_TOKEN);
    let ack = command(&mut sys, c, "/rover/cmd_vel", base(2.0, 2.0), 1_000);
    assert_eq!(ack.status, AckStatus::Rejected);
    assert_eq!(ack.code(), Some("WHEEL_SPEED"));
}

#[test]
fn forward_motion_toward_close_obstacle_is_rejected() {
    let mut sys = system(config(0, 0), facing_wall(0.2));
    let c = login(&mut sys, LAB_TOKEN);
    sys.advance(40);
    let front = sys.engine().view().sonar.ranges[0];
    assert!((front - 0.2).abs() < 1e-9, "front sonar {front}");
    let ack = command(&mut sys, c, "/rover/cmd_vel", base(0.3, 0.3), 1_000);
    assert_eq!(ack.code(), Some("PROXIMITY"));
    // Backing away is allowed.
    let ack = command(&mut sys, c, "/rover/cmd_vel", base(-0.3, -0.3), 1_000);
    assert_eq!(ack.status, AckStatus::Success, "{ack:?}");
}

#[test]
fn authentication_errors() {
    let mut sys = system(config(0, 0), Scenario::default_greenhouse());
    let c = sys.connect();
    let id = sys.auth(c, "wrong");
    assert_eq!(sys.await_ack(c, id, 100).unwrap().1.code(), Some("BAD_TOKEN"));

    let first = login(&mut sys, NET_TOKEN);
    let other = sys.connect();
    let id = sys.auth(other, NET2_TOKEN);
    assert_eq!(sys.await_ack(other, id, 5_000).unwrap().1.code(), Some("SESSION_LIMIT"));
    // The same client twice is also refused.
    let dup = sys.connect();
    let id = sys.auth(dup, NET_TOKEN);
    assert_eq!(sys.await_ack(dup, id, 5_000).unwrap().1.code(), Some("SESSION_LIMIT"));
    // Intranet clients are not capped.
    login(&mut sys, LAB_TOKEN);

    sys.disconnect(first);
    let id = sys.auth(other, NET2_TOKEN);
    assert_eq!(sys.await_ack(other, id, 5_000).unwrap().1.status, AckStatus::Success);
}

#[test]
fn auth_ack_carries_role_and_slot() {
    let mut sys = system(config(0, 0), Scenario::default_greenhouse());
    let c = sys.connect();
    let id = sys.auth(c, NET_TOKEN);
    let (_, ack) = sys.await_ack(c, id, 100).unwrap();
    assert_eq!(ack.extra["role"], json!("internet"));
    assert_eq!(ack.extra["slot"], json!({"start_ms": T0, "end_ms": T0 + SLOT_MS}));
    assert_eq!(ack.extra["client_id"], json!("team-a"));
}

#[test]
fn unauthenticated_commands_are_refused() {
    let mut sys = system(config(0, 0), Scenario::default_greenhouse());
    let c = sys.connect();
    let id = sys.command(c, "/rover/cmd_vel", base(0.1, 0.1));
    sys.advance(40);
    let err = sys.inbox(c).iter().find(|d| d.env.correlation_id == id).expect("reply");
    assert!(err.env.kind == Kind::Err || err.env.kind == Kind::Ack);
    let code = err
        .env
        .as_error()
        .map(|e| e.code)
        .or_else(|| err.env.as_ack().and_then(|a| a.code().map(str::to_string)));
    assert_eq!(code.as_deref(), Some("UNAUTHORIZED"));
    assert_eq!(sys.engine().world().rover.base.v_left, 0.0);
}

#[test]
fn commands_outside_the_slot_are_rejected() {
    let mut sys = system(config(0, 0), Scenario::default_greenhouse());
    let late = login(&mut sys, LATE_TOKEN);
    let ack = command(&mut sys, late, "/rover/cmd_vel", base(0.1, 0.1), 1_000);
    assert_eq!(ack.code(), Some("SLOT"));
    sys.disconnect(late);

    // A session that outlives its slot loses command rights.
    let c = login(&mut sys, NET_TOKEN);
    let ack = command(&mut sys, c, "/rover/gripper/cmd", json!({"kind": "gripper_set", "aperture_m": 0.05}), 5_000);
    assert_eq!(ack.status, AckStatus::Success, "{ack:?}");
    let remaining = T0 + SLOT_MS + 1 - sys.now_ms();
    sys.advance(remaining);
    let ack = command(&mut sys, c, "/rover/gripper/cmd", json!({"kind": "gripper_set", "aperture_m": 0.02}), 5_000);
    assert_eq!(ack.code(), Some("SLOT"));
}

#[test]
fn estop_semantics() {
    let mut sys = system(config(0, 0), Scenario::default_greenhouse());
    let net = login(&mut sys, NET_TOKEN);
    let lab = login(&mut sys, LAB_TOKEN);
    let ack = command(&mut sys, lab, "/rover/cmd_vel", base(0.3, 0.3), 1_000);
    assert_eq!(ack.status, AckStatus::Success);
    sys.advance(100);
    assert!(sys.engine().world().rover.base.is_moving());

    for _ in 0..2 {
        let ack = command(&mut sys, net, ESTOP_TOPIC, json!({"engage": true}), 1_000);
        assert_eq!(ack.status, AckStatus::Success);
    }
    assert!(sys.core().estop().latched);
    assert_eq!(sys.core().estop().engaged_by.as_deref(), Some("team-a"));
    sys.advance(40);
    let view = sys.engine().view();
    assert_eq!((view.v_left, view.v_right), (0.0, 0.0));

    let ack = command(&mut sys, lab, "/rover/cmd_vel", base(0.3, 0.3), 1_000);
    assert_eq!(ack.code(), Some("ESTOPPED"));
    // Stop is not motion and still goes through.
    let ack = command(&mut sys, lab, "/rover/cmd_vel", json!({"kind": "stop"}), 1_000);
    assert_eq!(ack.status, AckStatus::Success);

    let ack = command(&mut sys, net, ESTOP_TOPIC, json!({"engage": false}), 1_000);
    assert_eq!(ack.code(), Some("FORBIDDEN"));
    assert!(sys.core().estop().latched);
    let ack = command(&mut sys, lab, ESTOP_TOPIC, json!({"engage": false}), 1_000);
    assert_eq!(ack.status, AckStatus::Success);
    let ack = command(&mut sys, lab, "/rover/cmd_vel", base(0.3, 0.3), 1_000);
    assert_eq!(ack.status, AckStatus::Success);
}

#[test]
fn status_topic_reports_latch_and_sessions() {
    let mut sys = system(config(0, 0), Scenario::default_greenhouse());
    let lab = login(&mut sys, LAB_TOKEN);
    let id = sys.subscribe(lab, STATUS_TOPIC);
    sys.await_ack(lab, id, 100).unwrap();
    command(&mut sys, lab, ESTOP_TOPIC, json!({"engage": true}), 1_000);
    sys.advance(40);
    let last = sys
        .inbox(lab)
        .iter()
        .rev()
        .find(|d| d.env.kind == Kind::Pub && d.env.topic == STATUS_TOPIC)
        .expect("status published");
    assert_eq!(last.env.payload["estop"]["latched"], json!(true));
    assert_eq!(last.env.payload["sessions"][0]["client_id"], json!("lab"));
    // Periodic republish.
    let before = sys.inbox(lab).len();
    sys.advance(2_100);
    let periodic = sys.inbox(lab)[before..]
        .iter()
        .filter(|d| d.env.topic == STATUS_TOPIC)
        .count();
    assert!(periodic >= 2, "{periodic}");
}

#[test]
fn misaddressed_and_malformed_commands() {
    let mut sys = system(config(0, 0), Scenario::default_greenhouse());
    let c = login(&mut sys, LAB_TOKEN);
    let ack = command(&mut sys, c, "/rover/gripper/cmd", base(0.1, 0.1), 1_000);
    assert_eq!(ack.code(), Some("MISADDRESSED"));
    let ack = command(&mut sys, c, "/rover/cmd_vel", json!({"kind": "warp"}), 1_000);
    assert_eq!(ack.code(), Some("BAD_COMMAND"));
    let ack = command(&mut sys, c, "/rover/pluck/cmd", json!({"kind": "pluck", "force_n": 25.0}), 1_000);
    assert_eq!(ack.code(), Some("PLUCK_FORCE"));
    let ack = command(&mut sys, c, "/rover/arm/cmd", elbow_delta(7.0), 1_000);
    assert_eq!(ack.code(), Some("JOINT_LIMIT"));
}

fn view_with(q: [f64; JOINT_COUNT], sonar: [f64; 8]) -> RoverView {
    RoverView {
        tick: 0,
        q,
        sonar: SonarRing { ranges: sonar },
        v_left: 0.0,
        v_right: 0.0,
        estopped: false,
    }
}

fn any_kind() -> impl Strategy<Value = CommandKind> {
    let v = -2.5f64..2.5;
    let q = proptest::array::uniform6(-3.0f64..3.0);
    prop_oneof![
        (v.clone(), v).prop_map(|(v_left, v_right)| CommandKind::BaseVelocity { v_left, v_right }),
        (0usize..7, -4.0f64..4.0, proptest::option::of(-1.0f64..5.0)).prop_map(|(joint, delta_rad, speed_rad_s)| {
            CommandKind::JointDelta { joint, delta_rad, speed_rad_s }
        }),
        (proptest::collection::vec(q, 1..3), proptest::option::of(0.0f64..4.0))
            .prop_map(|(waypoints, speed_rad_s)| CommandKind::JointTrajectory { waypoints, speed_rad_s }),
        (-0.05f64..0.12).prop_map(|aperture_m| CommandKind::GripperSet { aperture_m }),
        (-5.0f64..30.0).prop_map(|force_n| CommandKind::Pluck { force_n }),
        Just(CommandKind::Mission(MissionCommand::Start { markers: vec![101] })),
        Just(CommandKind::Mission(MissionCommand::Resume)),
        Just(CommandKind::Stop),
    ]
}

/// A policy whose every limit is at least as tight as `base`.
fn tighten(base: &SafetyPolicy, f: [f64; 8]) -> SafetyPolicy {
    let mut p = base.clone();
    for i in 0..JOINT_COUNT {
        p.joint_limits_rad[i][0] *= f[0];
        p.joint_limits_rad[i][1] *= f[0];
        p.velocity_limits_rad_s[i] *= f[1];
    }
    p.wheel_speed_limit_m_s *= f[2];
    for k in 0..3 {
        let mid = (p.workspace.min[k] + p.workspace.max[k]) / 2.0;
        p.workspace.min[k] = mid + (p.workspace.min[k] - mid) * f[3];
        p.workspace.max[k] = mid + (p.workspace.max[k] - mid) * f[3];
    }
    p.floor_clearance_m /= f[4];
    p.proximity_guard_m /= f[5];
    p.max_pluck_force_n *= f[6];
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2_000))]

    #[test]
    fn stricter_policy_rejects_a_superset(
        kind in any_kind(),
        q in proptest::array::uniform6(-2.0f64..2.0),
        sonar in proptest::array::uniform8(0.02f64..2.0),
        f1 in proptest::array::uniform8(0.3f64..=1.0),
        f2 in proptest::array::uniform8(0.3f64..=1.0),
    ) {
        let arm = ArmConfig::default();
        let loose = tighten(&SafetyPolicy::default(), f1);
        let strict = tighten(&loose, f2);
        prop_assert!(strict.is_at_least_as_strict_as(&loose));
        let view = view_with(q, sonar);
        if loose.check(&kind, &view, &arm).is_err() {
            prop_assert!(strict.check(&kind, &view, &arm).is_err());
        }
    }
}
