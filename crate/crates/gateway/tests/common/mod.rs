#![allow(dead_code)]

pub mod net;

use greensim_core::Scenario;
use greensim_gateway::{GatewayConfig, VirtualSystem};
use greensim_messaging::{Ack, AckStatus, ConnId};
use serde_json::{json, Value};

/// Virtual start time; the internet slot covers the first ten minutes.
pub const T0: u64 = 1_700_000_000_000;
pub const SLOT_MS: u64 = 600_000;

pub const NET_TOKEN: &str = "net-secret";
pub const NET2_TOKEN: &str = "net2-secret";
pub const LAB_TOKEN: &str = "lab-secret";
pub const LATE_TOKEN: &str = "late-secret";

pub fn config_text(delay_ms: u64, jitter_ms: u64) -> String {
    config_text_at(delay_ms, jitter_ms, T0)
}

/// Same clients with the internet slot opening at `t0`.
pub fn config_text_at(delay_ms: u64, jitter_ms: u64, t0: u64) -> String {
    format!(
        r#"
status_period_ms = 1000
jitter_seed = 7

[listen]
tcp_listen = "127.0.0.1:0"
ws_listen = "127.0.0.1:0"

[[profiles]]
name = "internet"
one_way_delay_ms = {delay_ms}
jitter_ms = {jitter_ms}

[[profiles]]
name = "intranet"
one_way_delay_ms = 0
jitter_ms = 0

[[clients]]
client_id = "team-a"
token = "{NET_TOKEN}"
role = "internet"
slot = {{ start_ms = {t0}, end_ms = {end} }}

[[clients]]
client_id = "team-b"
token = "{NET2_TOKEN}"
role = "internet"
slot = {{ start_ms = {t0}, end_ms = {end} }}

[[clients]]
client_id = "team-late"
token = "{LATE_TOKEN}"
role = "internet"
slot = {{ start_ms = {late}, end_ms = {late_end} }}

[[clients]]
client_id = "lab"
token = "{LAB_TOKEN}"
role = "intranet"
"#,
        end = t0 + SLOT_MS,
        late = t0 + 2 * SLOT_MS,
        late_end = t0 + 3 * SLOT_MS,
    )
}

pub fn config(delay_ms: u64, jitter_ms: u64) -> GatewayConfig {
    GatewayConfig::parse(&config_text(delay_ms, jitter_ms)).expect("test config parses")
}

pub fn system(cfg: GatewayConfig, scenario: Scenario) -> VirtualSystem {
    VirtualSystem::new(cfg, scenario, 42, T0).expect("scenario valid")
}

/// Connects and authenticates, asserting success.
pub fn login(sys: &mut VirtualSystem, token: &str) -> ConnId {
    let c = sys.connect();
    let id = sys.auth(c, token);
    let (_, ack) = sys.await_ack(c, id, 5_000).expect("auth ack");
    assert_eq!(ack.status, AckStatus::Success, "auth with {token}: {ack:?}");
    c
}

/// Sends a command and waits for its final ack.
pub fn command(sys: &mut VirtualSystem, conn: ConnId, topic: &str, payload: Value, timeout_ms: u64) -> Ack {
    let id = sys.command(conn, topic, payload);
    sys.await_ack(conn, id, timeout_ms).expect("ack within timeout").1
}

pub fn elbow_delta(delta_rad: f64) -> Value {
    json!({"kind": "joint_delta", "joint": 2, "delta_rad": delta_rad})
}

pub fn base(v_left: f64, v_right: f64) -> Value {
    json!({"kind": "base_velocity", "v_left": v_left, "v_right": v_right})
}

/// The rover facing a wall with `gap_m` between the chassis front and the wall.
pub fn facing_wall(gap_m: f64) -> Scenario {
    let mut s = Scenario::empty(6.0, 3.0);
    let half = s.rover.sonar.chassis_half_extent_m[0];
    s.rover.start_pose = greensim_core::geometry::Pose2::new(6.0 - half - gap_m, 1.5, 0.0);
    s
}

/// A random command payload and the topic it belongs on. About one in
/// twenty is sent to the wrong topic and one in fifty carries a bad field.
pub fn random_command(rng: &mut impl rand::Rng) -> (String, Value) {
    fn f(rng: &mut impl rand::Rng, lo: f64, hi: f64) -> Value {
        if rng.random_ratio(1, 50) {
            json!(null)
        } else {
            json!(rng.random_range(lo..hi))
        }
    }
    let (topic, payload) = match rng.random_range(0..9) {
        0 | 1 => ("/rover/cmd_vel", json!({"kind": "base_velocity", "v_left": f(rng, -1.5, 1.5), "v_right": f(rng, -1.5, 1.5)})),
        2 | 3 => {
            let speed = if rng.random_bool(0.5) { json!(null) } else { f(rng, -0.5, 4.0) };
            ("/rover/arm/cmd", json!({"kind": "joint_delta", "joint": rng.random_range(0..7), "delta_rad": f(rng, -3.0, 3.0), "speed_rad_s": speed}))
        }
        4 => {
            let n = rng.random_range(1..4);
            let wps: Vec<Vec<f64>> = (0..n).map(|_| (0..6).map(|_| rng.random_range(-3.5..3.5)).collect()).collect();
            ("/rover/arm/cmd", json!({"kind": "joint_trajectory", "waypoints": wps, "speed_rad_s": null}))
        }
        5 => ("/rover/gripper/cmd", json!({"kind": "gripper_set", "aperture_m": f(rng, -0.02, 0.12)})),
        6 => ("/rover/pluck/cmd", json!({"kind": "pluck", "force_n": f(rng, -5.0, 30.0)})),
        7 => {
            let m = match rng.random_range(0..3) {
                0 => json!({"kind": "mission", "type": "start", "markers": [101, 102]}),
                1 => json!({"kind": "mission", "type": "resume"}),
                _ => json!({"kind": "mission", "type": "abort"}),
            };
            ("/rover/mission/cmd", m)
        }
        _ => ("/rover/cmd_vel", json!({"kind": "stop"})),
    };
    let topic = if rng.random_ratio(1, 20) {
        ["/rover/cmd_vel", "/rover/arm/cmd", "/rover/gripper/cmd", "/rover/pluck/cmd"][rng.random_range(0..4)]
    } else {
        topic
    };
    (topic.to_string(), payload)
}

/// A random motion command on its proper topic.
pub fn random_motion(rng: &mut impl rand::Rng) -> (String, Value) {
    loop {
        let (topic, payload) = random_command(rng);
        let kind: Result<greensim_core::CommandKind, _> = serde_json::from_value(payload.clone());
        let proper = match &kind {
            Ok(greensim_core::CommandKind::BaseVelocity { .. }) => topic == "/rover/cmd_vel",
            Ok(greensim_core::CommandKind::JointDelta { .. } | greensim_core::CommandKind::JointTrajectory { .. }) => {
                topic == "/rover/arm/cmd"
            }
            Ok(greensim_core::CommandKind::GripperSet { .. }) => topic == "/rover/gripper/cmd",
            Ok(greensim_core::CommandKind::Pluck { .. }) => topic == "/rover/pluck/cmd",
            Ok(k @ greensim_core::CommandKind::Mission(_)) => topic == "/rover/mission/cmd" && k.is_motion(),
            _ => false,
        };
        if proper {
            return (topic, payload);
        }
    }
}

pub fn ack_code(ack: &Ack) -> Option<&str> {
    ack.reason.as_ref().map(|r| r.code.as_str())
}
