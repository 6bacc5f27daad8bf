//! Sans-IO gateway: authentication, the command filter, the e-stop latch
//! and per-session latency shaping around a [`Broker`].
//!
//! The owner drives it with three calls per engine tick: [`GatewayCore::step`]
//! before the tick to obtain engine inputs, [`GatewayCore::on_tick`] with the
//! tick output, and [`GatewayCore::flush`] to collect envelopes due on the wire.

use crate::config::GatewayConfig;
use crate::latency::{DelayLine, LatencyProfile};
use crate::policy::{Rejection, SafetyPolicy};
use crate::session::{ClientSession, EStopState, Role};
use greensim_core::rover::ArmConfig;
use greensim_core::{ActuationCommand, CommandAudit, CommandKind, EngineInput, RoverView, TickOutput};
use greensim_messaging::{Ack, AckStatus, Broker, BrokerConfig, ConnId, Envelope, Ingress, Kind};
use serde_json::{json, Value};
use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

pub const STATUS_TOPIC: &str = "/gateway/status";
pub const ESTOP_TOPIC: &str = "/gateway/estop";
/// Envelopes held per session in the egress delay line.
pub const EGRESS_CAPACITY: usize = 4096;

/// ERR envelope for a fault that cannot be tied to a request.
pub fn transport_error(code: &str, message: impl Into<String>) -> Envelope {
    let body = greensim_messaging::ErrorBody {
        code: code.to_string(),
        message: message.into(),
    };
    Envelope::new(
        Kind::Err,
        "",
        greensim_messaging::CorrelationId::from_u128(0),
        serde_json::to_value(body).expect("error serializes"),
    )
}

/// Which command kinds each command topic accepts.
fn topic_accepts(topic: &str, kind: &CommandKind) -> bool {
    match topic {
        "/rover/cmd_vel" => matches!(kind, CommandKind::BaseVelocity { .. } | CommandKind::Stop),
        "/rover/arm/cmd" => matches!(
            kind,
            CommandKind::JointDelta { .. } | CommandKind::JointTrajectory { .. } | CommandKind::Stop
        ),
        "/rover/gripper/cmd" => matches!(kind, CommandKind::GripperSet { .. }),
        "/rover/pluck/cmd" => matches!(kind, CommandKind::Pluck { .. }),
        "/rover/mission/cmd" => matches!(kind, CommandKind::Mission(_)),
        _ => false,
    }
}

struct ConnState {
    session: Option<ClientSession>,
    ingress: DelayLine<Envelope>,
    egress: DelayLine<Envelope>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FilterStats {
    pub approved: u64,
    pub rejected: u64,
}

pub struct GatewayCore {
    config: GatewayConfig,
    arm: ArmConfig,
    broker: Broker,
    conns: BTreeMap<ConnId, ConnState>,
    estop: EStopState,
    estop_sent: Option<bool>,
    pending: HashMap<String, (ConnId, String)>,
    stats: FilterStats,
    last_status_ms: Option<u64>,
    status_dirty: bool,
}

impl GatewayCore {
    pub fn new(config: GatewayConfig, arm: ArmConfig) -> Self {
        Self {
            config,
            arm,
            broker: Broker::new(BrokerConfig::default()),
            conns: BTreeMap::new(),
            estop: EStopState::default(),
            estop_sent: None,
            pending: HashMap::new(),
            stats: FilterStats::default(),
            last_status_ms: None,
            status_dirty: true,
        }
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    pub fn policy(&self) -> &SafetyPolicy {
        &self.config.policy
    }

    pub fn estop(&self) -> &EStopState {
        &self.estop
    }

    pub fn stats(&self) -> FilterStats {
        self.stats
    }

    pub fn broker(&self) -> &Broker {
        &self.broker
    }

    pub fn session(&self, conn: ConnId) -> Option<&ClientSession> {
        self.conns.get(&conn).and_then(|c| c.session.as_ref())
    }

    /// An audit hook that re-checks every command the engine applies.
    pub fn audit(&self) -> PolicyAudit {
        PolicyAudit::new(self.config.policy.clone(), self.arm.clone())
    }

    pub fn connect(&mut self) -> ConnId {
        let id = self.broker.connect();
        let open = LatencyProfile::intranet();
        self.conns.insert(
            id,
            ConnState {
                session: None,
                ingress: DelayLine::new(&open, 0),
                egress: DelayLine::new(&open, 0),
            },
        );
        id
    }

    pub fn disconnect(&mut self, conn: ConnId) {
        self.broker.disconnect(conn);
        if self.conns.remove(&conn).is_some_and(|c| c.session.is_some()) {
            self.status_dirty = true;
        }
        self.pending.retain(|_, (c, _)| *c != conn);
    }

    /// Accepts an envelope read off the wire; it enters the session's
    /// ingress delay line.
    pub fn receive(&mut self, conn: ConnId, env: Envelope, now_ms: u64) {
        if let Some(c) = self.conns.get_mut(&conn) {
            c.ingress.push(now_ms, env);
        }
    }

    /// Reports a frame the transport could not decode.
    pub fn send_error(&mut self, conn: ConnId, code: &str, message: impl Into<String>, now_ms: u64) {
        self.broker.send(conn, transport_error(code, message), now_ms);
    }

    /// Processes ingress that is due and returns the inputs for the next
    /// engine tick. `view` must be the engine's current state.
    pub fn step(&mut self, now_ms: u64, view: &RoverView) -> Vec<EngineInput> {
        let mut inputs = Vec::new();
        let ids: Vec<ConnId> = self.conns.keys().copied().collect();
        for conn in ids {
            let due = match self.conns.get_mut(&conn) {
                Some(c) => c.ingress.pop_ready(now_ms),
                None => continue,
            };
            for env in due {
                match self.broker.ingress(conn, env, now_ms) {
                    Ingress::Auth(env) => self.authenticate(conn, &env, now_ms),
                    Ingress::Command => {
                        for (from, cmd) in self.broker.take_commands() {
                            if let Some(input) = self.filter(from, &cmd, now_ms, view) {
                                inputs.push(input);
                            }
                        }
                    }
                    _ => {}
                }
            }
        }
        if self.estop_sent != Some(self.estop.latched) {
            self.estop_sent = Some(self.estop.latched);
            // Ahead of any command approved in the same window.
            inputs.insert(0, EngineInput::StandingStop(self.estop.latched));
            self.status_dirty = true;
        }
        let period = self.config.status_period_ms;
        if self.status_dirty || self.last_status_ms.is_none_or(|t| now_ms >= t + period) {
            self.publish_status(now_ms);
        }
        inputs
    }

    /// Routes acks back to their sessions and publishes telemetry.
    pub fn on_tick(&mut self, out: &TickOutput, now_ms: u64) {
        for ack in &out.acks {
            let Some((conn, topic)) = self.pending.remove(&ack.correlation_id) else {
                continue;
            };
            let Ok(correlation_id) = greensim_messaging::CorrelationId::parse(&ack.correlation_id) else {
                continue;
            };
            let status = match ack.status {
                greensim_core::AckStatus::Success => AckStatus::Success,
                greensim_core::AckStatus::Failure => AckStatus::Failure,
                greensim_core::AckStatus::Superseded => AckStatus::Superseded,
                greensim_core::AckStatus::Rejected => AckStatus::Rejected,
            };
            let body = match &ack.reason {
                Some(r) => Ack::with_reason(status, &r.code, r.message.clone()),
                None => Ack {
                    status,
                    reason: None,
                    extra: Default::default(),
                },
            };
            let env = Envelope::new(Kind::Ack, topic, correlation_id, serde_json::to_value(&body).expect("ack"));
            self.broker.send(conn, env, now_ms);
        }
        for ev in &out.telemetry {
            self.broker.publish(&ev.topic, ev.payload.clone(), now_ms);
        }
    }

    /// Moves broker output through each session's egress delay line and
    /// returns what is due on the wire now.
    pub fn flush(&mut self, now_ms: u64) -> Vec<(ConnId, Envelope)> {
        let mut out = Vec::new();
        for (&conn, state) in self.conns.iter_mut() {
            for env in self.broker.drain(conn) {
                if env.kind == Kind::Pub && state.egress.len() >= EGRESS_CAPACITY {
                    state.egress.drop_oldest(|e| e.kind == Kind::Pub);
                }
                state.egress.push(now_ms, env);
            }
            out.extend(state.egress.pop_ready(now_ms).into_iter().map(|e| (conn, e)));
        }
        out
    }

    /// Earliest time anything queued in a delay line becomes due.
    pub fn next_due_ms(&self) -> Option<u64> {
        self.conns
            .values()
            .flat_map(|c| [c.ingress.next_release(), c.egress.next_release()])
            .flatten()
            .min()
    }

    fn authenticate(&mut self, conn: ConnId, env: &Envelope, now_ms: u64) {
        let token = env.payload.get("token").and_then(Value::as_str).unwrap_or("");
        let reply = match self.admit(conn, token) {
            Err(code) => env.ack(&Ack::rejected(code, "authentication refused")),
            Ok(session) => {
                let seed = self.config.jitter_seed ^ conn.0.wrapping_mul(0x9e37_79b9_7f4a_7c15);
                let state = self.conns.get_mut(&conn).expect("connection exists");
                state.ingress = DelayLine::new(&session.profile, seed);
                state.egress = DelayLine::new(&session.profile, seed ^ 1);
                let mut ack = Ack::success();
                ack.extra.insert("client_id".into(), json!(session.client_id));
                ack.extra.insert("role".into(), json!(session.role));
                ack.extra.insert("slot".into(), json!(session.slot));
                ack.extra.insert("profile".into(), json!(session.profile));
                state.session = Some(session);
                self.broker.authorize(conn);
                self.status_dirty = true;
                env.ack(&ack)
            }
        };
        self.broker.send(conn, reply, now_ms);
    }

    fn admit(&self, conn: ConnId, token: &str) -> Result<ClientSession, &'static str> {
        if self.conns.get(&conn).is_some_and(|c| c.session.is_some()) {
            return Err("ALREADY_AUTHENTICATED");
        }
        let entry = self.config.client_by_token(token).ok_or("BAD_TOKEN")?;
        let live = || self.conns.values().filter_map(|c| c.session.as_ref());
        if live().any(|s| s.client_id == entry.client_id) {
            return Err("SESSION_LIMIT");
        }
        if entry.role == Role::Internet
            && live().filter(|s| s.role == Role::Internet).count() >= self.config.max_internet_sessions
        {
            return Err("SESSION_LIMIT");
        }
        let profile = self.config.profile_for(entry).map_err(|_| "BAD_TOKEN")?;
        Ok(ClientSession {
            client_id: entry.client_id.clone(),
            role: entry.role,
            slot: entry.slot,
            profile,
        })
    }

    fn refuse(&mut self, conn: ConnId, env: &Envelope, code: &'static str, msg: impl Into<String>, now_ms: u64) {
        self.stats.rejected += 1;
        self.broker.send(conn, env.ack(&Ack::rejected(code, msg)), now_ms);
    }

    /// The single serialization point in front of the engine. Checks, in
    /// order: payload shape, topic, e-stop latch, slot, policy, then
    /// duplicate correlation ids.
    fn filter(&mut self, conn: ConnId, env: &Envelope, now_ms: u64, view: &RoverView) -> Option<EngineInput> {
        let session = self.conns.get(&conn)?.session.clone()?;
        if env.topic == ESTOP_TOPIC {
            self.handle_estop(conn, env, &session, now_ms);
            return None;
        }
        let kind: CommandKind = match serde_json::from_value(env.payload_value()) {
            Ok(k) => k,
            Err(e) => {
                self.refuse(conn, env, "BAD_COMMAND", e.to_string(), now_ms);
                return None;
            }
        };
        if !topic_accepts(&env.topic, &kind) {
            self.refuse(conn, env, "MISADDRESSED", format!("{} does not accept this command", env.topic), now_ms);
            return None;
        }
        if self.estop.latched && kind.is_motion() {
            self.refuse(conn, env, "ESTOPPED", "e-stop is latched", now_ms);
            return None;
        }
        if !session.in_slot(now_ms) {
            self.refuse(conn, env, "SLOT", "outside the access slot", now_ms);
            return None;
        }
        if let Err(Rejection { code, message }) = self.config.policy.check(&kind, view, &self.arm) {
            self.refuse(conn, env, code, message, now_ms);
            return None;
        }
        let id = env.correlation_id.to_hex();
        if self.pending.contains_key(&id) {
            self.refuse(conn, env, "DUPLICATE_ID", "correlation id already in flight", now_ms);
            return None;
        }
        self.pending.insert(id.clone(), (conn, env.topic.clone()));
        self.stats.approved += 1;
        Some(EngineInput::Command(ActuationCommand::new(kind, session.client_id, id)))
    }

    fn handle_estop(&mut self, conn: ConnId, env: &Envelope, session: &ClientSession, now_ms: u64) {
        match env.payload.get("engage").and_then(Value::as_bool) {
            Some(true) => {
                self.estop.engage(&session.client_id, now_ms);
                self.status_dirty = true;
                self.broker.send(conn, env.ack(&Ack::success()), now_ms);
            }
            Some(false) => match self.estop.clear(session) {
                Ok(()) => {
                    self.status_dirty = true;
                    self.broker.send(conn, env.ack(&Ack::success()), now_ms);
                }
                Err(code) => self.refuse(conn, env, code, "only intranet sessions may clear the e-stop", now_ms),
            },
            None => self.refuse(conn, env, "BAD_COMMAND", "expected {\"engage\": bool}", now_ms),
        }
    }

    fn publish_status(&mut self, now_ms: u64) {
        let sessions: Vec<Value> = self
            .conns
            .values()
            .filter_map(|c| c.session.as_ref())
            .map(|s| json!({"client_id": s.client_id, "role": s.role, "in_slot": s.in_slot(now_ms)}))
            .collect();
        let payload = json!({
            "estop": self.estop,
            "sessions": sessions,
            "slot_clock_ms": now_ms,
            "approved": self.stats.approved,
            "rejected": self.stats.rejected,
        });
        self.broker.publish(STATUS_TOPIC, payload, now_ms);
        self.last_status_ms = Some(now_ms);
        self.status_dirty = false;
    }
}

/// Engine-side re-check of every applied command against the policy.
#[derive(Clone)]
pub struct PolicyAudit {
    policy: SafetyPolicy,
    arm: ArmConfig,
    checked: Arc<AtomicU64>,
    violations: Arc<Mutex<Vec<String>>>,
}

impl PolicyAudit {
    pub fn new(policy: SafetyPolicy, arm: ArmConfig) -> Self {
        Self {
            policy,
            arm,
            checked: Arc::new(AtomicU64::new(0)),
            violations: Arc::new(Mutex::new(Vec::new())),
        }
    }

    pub fn checked(&self) -> u64 {
        self.checked.load(Ordering::SeqCst)
    }

    pub fn violations(&self) -> Vec<String> {
        self.violations.lock().expect("audit lock").clone()
    }
}

impl CommandAudit for PolicyAudit {
    fn audit(&mut self, cmd: &ActuationCommand, view: &RoverView) {
        self.checked.fetch_add(1, Ordering::SeqCst);
        if let Err(r) = self.policy.check(&cmd.kind, view, &self.arm) {
            self.violations
                .lock()
                .expect("audit lock")
                .push(format!("{} {:?}: {r}", cmd.correlation_id, cmd.kind));
        }
    }
}
