use super::*;
use crate::geometry::Pose2;
use crate::navigation::FaultReason;
use crate::rover::BasketConfig;

fn engine() -> Engine {
    Engine::new(Scenario::default_greenhouse(), 7).unwrap()
}

fn cmd(kind: CommandKind, id: &str) -> EngineInput {
    EngineInput::Command(ActuationCommand::new(kind, "test", id))
}

fn elbow(delta_deg: f64) -> CommandKind {
    CommandKind::JointDelta {
        joint: 2,
        delta_rad: delta_deg.to_radians(),
        speed_rad_s: None,
    }
}

fn ack<'a>(out: &'a TickOutput, id: &str) -> &'a CommandAck {
    out.acks
        .iter()
        .find(|a| a.correlation_id == id)
        .unwrap_or_else(|| panic!("no ack for {id}"))
}

#[test]
fn idle_tick_changes_only_the_clock() {
    let mut e = engine();
    e.tick(vec![]);
    let before = e.world().clone();
    e.tick(vec![]);
    let mut after = e.world().clone();
    assert_eq!(after.clock.tick_index, before.clock.tick_index + 1);
    after.clock = before.clock.clone();
    assert_eq!(after, before);
}

#[test]
fn elbow_thirty_degrees_takes_the_predicted_tick_count() {
    let mut e = engine();
    let q0 = e.world().rover.arm.q[2];
    let out = e.tick(vec![cmd(elbow(30.0), "c1")]);
    assert_eq!(ack(&out, "c1").status, AckStatus::Success);
    let speed = e.world().rover.config.arm.execution_speed_rad_s;
    let dt = e.dt_s();
    // Oracle: ceil(30 deg / (speed * dt)) ticks, the first being the command tick.
    let expected = (30f64.to_radians() / (speed * dt) - 1e-9).ceil() as u64;
    assert_eq!(expected, 50);
    let mut ticks = 1;
    while e.world().rover.arm.is_moving() {
        e.tick(vec![]);
        ticks += 1;
        assert!(ticks <= expected + 1);
    }
    assert_eq!(ticks, expected);
    assert!((e.world().rover.arm.q[2] - (q0 + 30f64.to_radians())).abs() < 1e-6);
}

#[test]
fn stop_zeroes_motion_within_the_tick() {
    let mut e = engine();
    e.tick(vec![
        cmd(elbow(60.0), "arm"),
        cmd(
            CommandKind::BaseVelocity {
                v_left: 0.3,
                v_right: 0.3,
            },
            "base",
        ),
    ]);
    for _ in 0..10 {
        e.tick(vec![]);
    }
    assert!(e.world().rover.arm.qd[2] > 0.0);
    let out = e.tick(vec![cmd(CommandKind::Stop, "stop")]);
    assert_eq!(ack(&out, "stop").status, AckStatus::Success);
    assert_eq!((out.view.v_left, out.view.v_right), (0.0, 0.0));
    assert_eq!(e.world().rover.arm.qd, [0.0; 6]);
    let q = e.world().rover.arm.q;
    let pose = e.world().rover.base.pose;
    e.tick(vec![]);
    assert_eq!(e.world().rover.arm.q, q);
    assert_eq!(e.world().rover.base.pose, pose);
}

#[test]
fn later_base_command_wins() {
    let mut e = engine();
    let out = e.tick(vec![
        cmd(
            CommandKind::BaseVelocity {
                v_left: 0.1,
                v_right: 0.1,
            },
            "first",
        ),
        cmd(
            CommandKind::BaseVelocity {
                v_left: 0.2,
                v_right: 0.3,
            },
            "second",
        ),
    ]);
    assert_eq!(ack(&out, "first").status, AckStatus::Superseded);
    assert_eq!(ack(&out, "second").status, AckStatus::Success);
    assert_eq!((out.view.v_left, out.view.v_right), (0.2, 0.3));
}

#[test]
fn infeasible_arm_command_fails_with_reason() {
    let mut e = engine();
    let out = e.tick(vec![cmd(
        CommandKind::JointDelta {
            joint: 1,
            delta_rad: 361f64.to_radians(),
            speed_rad_s: None,
        },
        "c",
    )]);
    let a = ack(&out, "c");
    assert_eq!(a.status, AckStatus::Failure);
    assert_eq!(a.reason.as_ref().unwrap().code, "JOINT_LIMIT");
}

#[test]
fn standing_stop_holds_everything() {
    let mut e = engine();
    e.tick(vec![cmd(elbow(30.0), "a")]);
    let out = e.tick(vec![EngineInput::StandingStop(true), cmd(elbow(10.0), "b")]);
    assert_eq!(ack(&out, "b").status, AckStatus::Failure);
    let q = e.world().rover.arm.q;
    for i in 0..20 {
        e.tick(vec![cmd(
            CommandKind::BaseVelocity {
                v_left: 0.5,
                v_right: 0.5,
            },
            &format!("d{i}"),
        )]);
    }
    assert_eq!(e.world().rover.arm.q, q);
    assert_eq!(e.world().rover.base.pose, Scenario::default_greenhouse().rover.start_pose);
    e.tick(vec![EngineInput::StandingStop(false)]);
    let out = e.tick(vec![cmd(elbow(5.0), "c")]);
    assert_eq!(ack(&out, "c").status, AckStatus::Success);
}

fn stage_grasp(e: &mut Engine) -> u32 {
    let w = e.world_mut();
    let tip = w.rover.fingertip_world;
    let t = &mut w.greenhouse.rows[0].pods[0].plant.tomatoes[0];
    t.center = tip;
    t.pluckable = true;
    t.tomato_id
}

#[test]
fn pluck_then_release_over_basket_collects() {
    let mut e = engine();
    let id = stage_grasp(&mut e);
    let out = e.tick(vec![cmd(CommandKind::GripperSet { aperture_m: 0.03 }, "close")]);
    assert_eq!(ack(&out, "close").status, AckStatus::Success);
    assert_eq!(e.world().rover.gripper.grasped_tomato, Some(id));

    let out = e.tick(vec![cmd(CommandKind::Pluck { force_n: 4.0 }, "weak")]);
    assert_eq!(ack(&out, "weak").reason.as_ref().unwrap().code, "STILL_ATTACHED");
    let out = e.tick(vec![cmd(CommandKind::Pluck { force_n: 6.0 }, "strong")]);
    assert_eq!(ack(&out, "strong").status, AckStatus::Success);
    assert_eq!(e.world().greenhouse.tomato(id).unwrap().state, TomatoState::Detached);

    // Carried with the arm.
    for _ in 0..20 {
        e.tick(vec![cmd(elbow(-1.0), "move")]);
    }
    let tip = e.world().rover.fingertip_world;
    assert_eq!(e.world().greenhouse.tomato(id).unwrap().center, tip);

    // Put the basket under the fingertip and open.
    let local = e.world().rover.base.pose.inverse_transform_point([tip[0], tip[1]]);
    e.world_mut().rover.config.basket = BasketConfig {
        center_m: local,
        size_m: [0.25, 0.5],
    };
    let collected_before = e.world().collected_count();
    e.tick(vec![cmd(CommandKind::GripperSet { aperture_m: 0.085 }, "open")]);
    assert_eq!(e.world().greenhouse.tomato(id).unwrap().state, TomatoState::Collected);
    assert_eq!(e.world().rover.gripper.grasped_tomato, None);
    assert_eq!(e.world().collected_count(), collected_before + 1);
}

#[test]
fn release_away_from_basket_drops_to_floor() {
    let mut e = engine();
    let id = stage_grasp(&mut e);
    e.tick(vec![cmd(CommandKind::GripperSet { aperture_m: 0.03 }, "close")]);
    e.tick(vec![cmd(CommandKind::Pluck { force_n: 6.0 }, "p")]);
    e.world_mut().rover.config.basket.center_m = [-5.0, 0.0];
    e.tick(vec![cmd(CommandKind::GripperSet { aperture_m: 0.085 }, "open")]);
    let t = e.world().greenhouse.tomato(id).unwrap();
    assert_eq!(t.state, TomatoState::Detached);
    assert_eq!(t.center[2], t.radius_m);
}

#[test]
fn pluck_without_grasp_fails() {
    let mut e = engine();
    let out = e.tick(vec![cmd(CommandKind::Pluck { force_n: 6.0 }, "p")]);
    assert_eq!(ack(&out, "p").reason.as_ref().unwrap().code, "NOT_GRASPED");
}

fn trace() -> Vec<(u64, CommandKind)> {
    vec![
        (0, elbow(30.0)),
        (
            3,
            CommandKind::BaseVelocity {
                v_left: 0.3,
                v_right: 0.35,
            },
        ),
        (40, CommandKind::GripperSet { aperture_m: 0.02 }),
        (80, CommandKind::Stop),
        (
            90,
            CommandKind::Mission(MissionCommand::Start {
                markers: vec![101],
            }),
        ),
    ]
}

fn run_trace(seed: u64) -> Vec<String> {
    let mut e = Engine::new(Scenario::default_greenhouse(), seed).unwrap();
    let trace = trace();
    let mut lines = Vec::new();
    for tick in 0..400u64 {
        let inputs = trace
            .iter()
            .filter(|(t, _)| *t == tick)
            .map(|(t, k)| cmd(k.clone(), &format!("t{t}")))
            .collect();
        let out = e.tick(inputs);
        lines.extend(out.telemetry.iter().map(TelemetryEvent::to_line));
    }
    lines
}

#[test]
fn equal_seeds_give_identical_telemetry() {
    let a = run_trace(42);
    assert!(a.len() > 100);
    assert_eq!(a, run_trace(42));
    assert_ne!(a, run_trace(43));
}

#[test]
fn telemetry_only_on_change() {
    let mut e = engine();
    let first = e.tick(vec![]);
    assert!(first.telemetry.iter().any(|t| t.topic == topics::ODOM));
    let second = e.tick(vec![]);
    assert!(second.telemetry.iter().all(|t| t.topic != topics::ODOM));
}

#[test]
fn lidar_and_cameras_follow_their_periods() {
    let mut e = engine();
    let mut lidar_ticks = Vec::new();
    let mut frame_ticks = Vec::new();
    e.tick(vec![cmd(
        CommandKind::BaseVelocity {
            v_left: 0.2,
            v_right: 0.2,
        },
        "go",
    )]);
    for _ in 0..30 {
        let out = e.tick(vec![]);
        for t in &out.telemetry {
            if t.topic == topics::LIDAR {
                lidar_ticks.push(t.tick);
            }
            if t.topic == topics::camera_frame(1) {
                frame_ticks.push(t.tick);
            }
        }
    }
    assert!(lidar_ticks.iter().all(|t| t % 5 == 0));
    assert!(lidar_ticks.len() >= 5);
    assert!(frame_ticks.iter().all(|t| t % 10 == 0));
}

#[test]
fn mission_stops_at_target_pod() {
    let mut e = engine();
    let events = run_mission(&mut e, vec![102], 5, 20_000);
    assert!(matches!(events.first(), Some(MissionEvent::Started { .. })));
    let reached = events
        .iter()
        .find_map(|ev| match ev {
            MissionEvent::PodReached { marker_id, .. } => Some(*marker_id),
            _ => None,
        })
        .expect("pod reached");
    assert_eq!(reached, 102);
    assert!(matches!(events.last(), Some(MissionEvent::Completed { .. })));
    let pod = e.world().greenhouse.pod_by_marker(102).unwrap().position;
    let pose = e.world().rover.base.pose;
    assert!((pose.x - pod[0]).hypot(pose.y - pod[1]) < 0.8);
    assert_eq!((e.world().rover.base.v_left, e.world().rover.base.v_right), (0.0, 0.0));
}

#[test]
fn mission_visits_markers_in_order() {
    let mut e = engine();
    let events = run_mission(&mut e, vec![101, 102, 103], 3, 30_000);
    let reached: Vec<u32> = events
        .iter()
        .filter_map(|ev| match ev {
            MissionEvent::PodReached { marker_id, .. } => Some(*marker_id),
            _ => None,
        })
        .collect();
    assert_eq!(reached, vec![101, 102, 103]);
    assert_eq!(e.world().mission.visited, vec![101, 102, 103]);
}

#[test]
fn unseen_marker_faults_at_row_end() {
    let mut scenario = Scenario::default_greenhouse();
    // Beacons 0.7 m abeam are never within a 0.5 m detection range.
    scenario.rover.lidar.marker_range_m = 0.5;
    let mut e = Engine::new(scenario, 7).unwrap();
    let events = run_mission(&mut e, vec![103], 3, 30_000);
    assert_eq!(
        events.last(),
        Some(&MissionEvent::Fault {
            reason: FaultReason::MarkerNotFound
        })
    );
    assert!(e.world().rover.base.pose.x > 10.0);
}

#[test]
fn absent_marker_fails_the_command() {
    let mut e = engine();
    let out = e.tick(vec![cmd(
        CommandKind::Mission(MissionCommand::Start { markers: vec![999] }),
        "m",
    )]);
    assert_eq!(ack(&out, "m").reason.as_ref().unwrap().code, "MARKER_NOT_FOUND");
}

#[test]
fn empty_mission_does_not_move() {
    let mut e = engine();
    let events = run_mission(&mut e, vec![], 3, 100);
    assert!(matches!(events.last(), Some(MissionEvent::Completed { .. })));
    assert_eq!(e.world().rover.base.pose, Pose2::new(0.5, 0.6, 0.0));
}

#[test]
fn operator_drive_aborts_mission() {
    let mut e = engine();
    e.tick(vec![cmd(
        CommandKind::Mission(MissionCommand::Start { markers: vec![103] }),
        "m",
    )]);
    e.tick(vec![]);
    let out = e.tick(vec![cmd(
        CommandKind::BaseVelocity {
            v_left: 0.0,
            v_right: 0.0,
        },
        "drive",
    )]);
    assert!(out
        .telemetry
        .iter()
        .any(|t| t.topic == topics::MISSION_EVENTS && t.payload["event"] == "aborted"));
    assert_eq!(e.world().mission.mode, MissionMode::Idle);
}

#[test]
fn reset_restores_initial_world() {
    let mut e = engine();
    let initial = e.world().clone();
    e.tick(vec![cmd(elbow(10.0), "a")]);
    for _ in 0..5 {
        e.tick(vec![]);
    }
    e.reset(7);
    assert_eq!(e.world(), &initial);
}

#[test]
fn audit_sees_every_applied_command() {
    struct Count(std::sync::Arc<std::sync::atomic::AtomicUsize>);
    impl CommandAudit for Count {
        fn audit(&mut self, _: &ActuationCommand, _: &RoverView) {
            self.0.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
        }
    }
    let n = std::sync::Arc::new(std::sync::atomic::AtomicUsize::new(0));
    let mut e = engine();
    e.set_audit(Box::new(Count(n.clone())));
    e.tick(vec![cmd(elbow(1.0), "a"), cmd(CommandKind::Pluck { force_n: 1.0 }, "b")]);
    assert_eq!(n.load(std::sync::atomic::Ordering::SeqCst), 2);
}

#[test]
fn afap_run_reports_metrics() {
    let mut e = Engine::new(Scenario::empty(10.0, 10.0), 1).unwrap();
    let report = run(&mut e, RunMode::Afap, 2.0);
    assert_eq!(report.ticks, 100);
    assert!((report.sim_time_s - 2.0).abs() < 1e-9);
    assert!(report.raw_rtf > 0.0 && report.fps > 0.0);
    assert_eq!(report.histogram.total(), 100);
    assert!(report.to_table().contains("rtf"));
}

