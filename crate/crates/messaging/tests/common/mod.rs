#![allow(dead_code)]

use greensim_messaging::{CorrelationId, Envelope, Kind};
use serde_json::json;

/// The twenty envelopes behind the frozen corpus.
pub fn golden_envelopes() -> Vec<Envelope> {
    let id = |n: u128| CorrelationId::from_u128(0x5eed_0000_0000_0000_0000_0000_0000_0000 | n);
    let t0 = 1_700_000_000_000u64;
    let raw = vec![
        (Kind::Auth, "", json!({"token": "intranet-secret"})),
        (Kind::Ack, "", json!({"status": "SUCCESS", "role": "intranet", "client_id": "lab", "slot": null})),
        (Kind::Sub, "/rover/arm/joint_states", json!({})),
        (Kind::Ack, "/rover/arm/joint_states", json!({"status": "SUCCESS"})),
        (Kind::Sub, "/camera/#", json!({})),
        (Kind::Sub, "/camera/+/detections", json!({})),
        (Kind::Cmd, "/rover/arm/cmd", json!({"kind": "joint_delta", "joint": 2, "delta_rad": 0.5235987755982988})),
        (Kind::Ack, "/rover/arm/cmd", json!({"status": "SUCCESS"})),
        (
            Kind::Pub,
            "/rover/arm/joint_states",
            json!({
                "names": ["base", "shoulder", "elbow", "wrist1", "wrist2", "wrist3"],
                "position": [0.0, 0.0, 0.5235987755982988, 0.0, 0.0, 0.0],
                "velocity": [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
                "moving": false
            }),
        ),
        (Kind::Cmd, "/rover/cmd_vel", json!({"kind": "base_velocity", "v_left": 2.0, "v_right": 2.0})),
        (
            Kind::Ack,
            "/rover/cmd_vel",
            json!({"status": "REJECTED", "reason": {"code": "WHEEL_SPEED", "message": "wheel speed 2 exceeds 1 m/s"}}),
        ),
        (Kind::Cmd, "/gateway/estop", json!({"engage": true})),
        (Kind::Cmd, "/rover/gripper/cmd", json!({"kind": "gripper_set", "aperture_m": 0.03})),
        (Kind::Cmd, "/rover/pluck/cmd", json!({"kind": "pluck", "force_n": 6.5})),
        (Kind::Cmd, "/rover/mission/cmd", json!({"kind": "mission", "type": "start", "markers": [101, 102]})),
        (
            Kind::Pub,
            "/rover/odom",
            json!({"pose": {"x": 0.5, "y": 0.6, "theta": 0.0}, "raw": {"x": 0.5, "y": 0.6, "theta": 0.0}, "v_left": 0.0, "v_right": 0.0}),
        ),
        (Kind::Err, "/Bad/#/x", json!({"code": "BAD_PATTERN", "message": "'#' must be the last level"})),
        (Kind::Unsub, "/camera/#", json!({})),
        (Kind::Ping, "", json!({})),
        (Kind::Pong, "", json!({})),
    ];
    raw.into_iter()
        .enumerate()
        .map(|(i, (kind, topic, payload))| {
            Envelope::new(kind, topic, id(i as u128 + 1), payload).with_seq(i as u64 + 1, t0 + 40 * i as u64)
        })
        .collect()
}
