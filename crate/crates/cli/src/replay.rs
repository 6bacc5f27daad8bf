//! Trace replay, live against a gateway or offline against the engine on a
//! virtual clock. The offline path is deterministic and produces the
//! checked-in golden report.

use crate::client::{reply_ack, Client, ClientError};
use crate::trace::TraceStep;
use greensim_core::{Scenario, ScenarioError};
use greensim_gateway::{ClientEntry, GatewayConfig, Listeners, Role, VirtualSystem};
use greensim_messaging::{Ack, AckStatus, Envelope, Kind};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::time::{Duration, Instant};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub index: usize,
    pub at_ms: u64,
    pub kind: Kind,
    pub topic: String,
    pub correlation_id: String,
    /// `None` when no reply arrived.
    pub status: Option<AckStatus>,
    pub code: Option<String>,
    pub rtt_ms: Option<u64>,
    pub expected: String,
    pub ok: bool,
}

impl StepResult {
    fn pending(index: usize, step: &TraceStep) -> Self {
        Self {
            index,
            at_ms: step.at_ms,
            kind: step.envelope.kind,
            topic: step.envelope.topic.clone(),
            correlation_id: step.envelope.correlation_id.to_hex(),
            status: None,
            code: None,
            rtt_ms: None,
            expected: step.expect.to_string(),
            ok: false,
        }
    }

    fn complete(&mut self, step: &TraceStep, ack: &Ack, rtt_ms: u64) {
        self.status = Some(ack.status);
        self.code = ack.code().map(str::to_string);
        self.rtt_ms = Some(rtt_ms);
        self.ok = step.expect.matches(ack);
    }

    /// One line: index, status, code, rtt and verdict, space separated.
    pub fn porcelain(&self) -> String {
        format!(
            "step {} {} {} {} {} rtt_ms={} {}",
            self.index,
            self.kind.as_str(),
            self.topic_or_dash(),
            self.status.map_or("NONE", AckStatus::as_str),
            self.code.as_deref().unwrap_or("-"),
            self.rtt_ms.map_or("-".to_string(), |r| r.to_string()),
            if self.ok { "ok" } else { "UNEXPECTED" },
        )
    }

    fn topic_or_dash(&self) -> &str {
        if self.topic.is_empty() {
            "-"
        } else {
            &self.topic
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub steps: Vec<StepResult>,
    pub unexpected: usize,
}

impl ReplayReport {
    fn from_steps(steps: Vec<StepResult>) -> Self {
        let unexpected = steps.iter().filter(|s| !s.ok).count();
        Self { steps, unexpected }
    }

    pub fn passed(&self) -> bool {
        self.unexpected == 0
    }

    pub fn rtt_summary(&self) -> Option<(u64, f64, u64)> {
        let rtts: Vec<u64> = self.steps.iter().filter_map(|s| s.rtt_ms).collect();
        let min = *rtts.iter().min()?;
        let max = *rtts.iter().max()?;
        Some((min, rtts.iter().sum::<u64>() as f64 / rtts.len() as f64, max))
    }
}

fn is_reply(env: &Envelope) -> bool {
    matches!(env.kind, Kind::Ack | Kind::Err | Kind::Pong)
}

/// Sends each step at its offset from now and collects the replies.
/// `on_step` sees every result as it completes.
pub fn replay_live(
    client: &mut Client,
    steps: &[TraceStep],
    reply_timeout: Duration,
    mut on_step: impl FnMut(&StepResult),
) -> Result<ReplayReport, ClientError> {
    let start = Instant::now();
    let mut results: Vec<StepResult> = steps.iter().enumerate().map(|(i, s)| StepResult::pending(i, s)).collect();
    let mut waiting: HashMap<String, (usize, Instant)> = HashMap::new();
    let mut next = 0;
    let mut last_send = start;
    while next < steps.len() || !waiting.is_empty() {
        let now = Instant::now();
        if next < steps.len() {
            let due = start + Duration::from_millis(steps[next].at_ms);
            if now >= due {
                let step = &steps[next];
                let id = client.send_envelope(step.envelope.clone())?;
                waiting.insert(id.to_hex(), (next, Instant::now()));
                last_send = Instant::now();
                next += 1;
                continue;
            }
        } else if now.duration_since(last_send) > reply_timeout {
            break;
        }
        let wait = if next < steps.len() {
            (start + Duration::from_millis(steps[next].at_ms)).saturating_duration_since(now)
        } else {
            reply_timeout.saturating_sub(now.duration_since(last_send))
        }
        .min(Duration::from_millis(50));
        if let Some((env, at)) = client.next(wait)? {
            if !is_reply(&env) {
                continue;
            }
            if let Some((index, sent)) = waiting.remove(&env.correlation_id.to_hex()) {
                let rtt = at.saturating_duration_since(sent).as_millis() as u64;
                results[index].complete(&steps[index], &reply_ack(&env), rtt);
                on_step(&results[index]);
            }
        }
    }
    for (index, _) in waiting.into_values() {
        on_step(&results[index]);
    }
    Ok(ReplayReport::from_steps(results))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalState {
    pub tick: u64,
    pub pose: [f64; 3],
    pub q: [f64; 6],
    pub aperture_m: f64,
    pub grasped: Option<u32>,
    pub collected: usize,
    pub estop: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfflineReport {
    pub scenario: String,
    pub seed: u64,
    pub replay: ReplayReport,
    pub final_state: FinalState,
    pub telemetry_events: usize,
    pub telemetry_sha256: String,
}

impl OfflineReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

pub const REPLAY_TOKEN: &str = "replay";

fn replay_config() -> GatewayConfig {
    GatewayConfig {
        listen: Listeners {
            tcp_listen: None,
            ws_listen: None,
            console_dir: None,
        },
        clients: vec![ClientEntry {
            client_id: "replay".into(),
            token: REPLAY_TOKEN.into(),
            role: Role::Intranet,
            slot: None,
            profile: None,
        }],
        ..GatewayConfig::default()
    }
}

/// Replays `steps` through the gateway filter into a fresh engine on a
/// virtual clock, then runs `tail_ms` more. Returns the report and the full
/// telemetry stream, one event per line.
pub fn replay_offline(
    scenario: Scenario,
    seed: u64,
    steps: &[TraceStep],
    tail_ms: u64,
) -> Result<(OfflineReport, String), ScenarioError> {
    let name = scenario.name.clone();
    let mut sys = VirtualSystem::new(replay_config(), scenario, seed, 0)?;
    sys.record_ticks(true);
    let conn = sys.connect();
    let auth = sys.auth(conn, REPLAY_TOKEN);
    sys.await_ack(conn, auth, 1_000).expect("replay session authenticates");
    let start = sys.now_ms();

    let mut results: Vec<StepResult> = steps.iter().enumerate().map(|(i, s)| StepResult::pending(i, s)).collect();
    let mut sent_at = HashMap::new();
    for (i, step) in steps.iter().enumerate() {
        let due = start + step.at_ms;
        if due > sys.now_ms() {
            sys.advance(due - sys.now_ms());
        }
        let id = sys.send(conn, step.envelope.clone());
        sent_at.insert(id.to_hex(), (i, sys.now_ms()));
    }
    sys.advance(tail_ms);

    for d in sys.inbox(conn) {
        if !is_reply(&d.env) {
            continue;
        }
        if let Some((i, sent)) = sent_at.remove(&d.env.correlation_id.to_hex()) {
            results[i].complete(&steps[i], &reply_ack(&d.env), d.at_ms - sent);
        }
    }

    let mut telemetry = String::new();
    let mut events = 0;
    for tick in sys.take_ticks() {
        for ev in &tick.telemetry {
            telemetry.push_str(&ev.to_line());
            telemetry.push('\n');
            events += 1;
        }
    }
    let world = sys.engine().world();
    let pose = world.rover.pose();
    let final_state = FinalState {
        tick: world.clock.tick_index,
        pose: [pose.x, pose.y, pose.theta],
        q: world.rover.arm.q,
        aperture_m: world.rover.gripper.aperture_m,
        grasped: world.rover.gripper.grasped_tomato,
        collected: world.collected_count(),
        estop: sys.core().estop().latched,
    };
    let report = OfflineReport {
        scenario: name,
        seed,
        replay: ReplayReport::from_steps(results),
        final_state,
        telemetry_events: events,
        telemetry_sha256: format!("{:x}", Sha256::digest(telemetry.as_bytes())),
    };
    Ok((report, telemetry))
}
