//! Gateway and engine stepped together on a virtual millisecond clock.

use crate::config::GatewayConfig;
use crate::core::GatewayCore;
use greensim_core::{Engine, Scenario, ScenarioError, TickOutput};
use greensim_messaging::{Ack, ConnId, CorrelationId, Envelope, Kind};
use serde_json::{json, Value};
use std::collections::BTreeMap;

/// An envelope as it reached the simulated client.
#[derive(Debug, Clone, PartialEq)]
pub struct Delivered {
    pub at_ms: u64,
    pub env: Envelope,
}

pub struct VirtualSystem {
    core: GatewayCore,
    engine: Engine,
    now_ms: u64,
    tick_ms: u64,
    next_tick_ms: u64,
    inbox: BTreeMap<ConnId, Vec<Delivered>>,
    out_seq: BTreeMap<ConnId, u64>,
    next_id: u128,
    ticks: Vec<TickOutput>,
    keep_ticks: bool,
}

impl VirtualSystem {
    pub fn new(config: GatewayConfig, scenario: Scenario, seed: u64, start_ms: u64) -> Result<Self, ScenarioError> {
        let arm = scenario.rover.arm.clone();
        let tick_ms = (scenario.sim.dt_s * 1000.0).round().max(1.0) as u64;
        let engine = Engine::new(scenario, seed)?;
        Ok(Self {
            core: GatewayCore::new(config, arm),
            engine,
            now_ms: start_ms,
            tick_ms,
            next_tick_ms: start_ms,
            inbox: BTreeMap::new(),
            out_seq: BTreeMap::new(),
            next_id: 0,
            ticks: Vec::new(),
            keep_ticks: false,
        })
    }

    /// Installs the policy audit on the engine and returns a handle to it.
    pub fn install_audit(&mut self) -> crate::core::PolicyAudit {
        let audit = self.core.audit();
        self.engine.set_audit(Box::new(audit.clone()));
        audit
    }

    /// Keeps every tick output for inspection by [`Self::take_ticks`].
    pub fn record_ticks(&mut self, on: bool) {
        self.keep_ticks = on;
    }

    pub fn take_ticks(&mut self) -> Vec<TickOutput> {
        std::mem::take(&mut self.ticks)
    }

    pub fn now_ms(&self) -> u64 {
        self.now_ms
    }

    pub fn core(&self) -> &GatewayCore {
        &self.core
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn engine_mut(&mut self) -> &mut Engine {
        &mut self.engine
    }

    pub fn connect(&mut self) -> ConnId {
        let c = self.core.connect();
        self.inbox.insert(c, Vec::new());
        c
    }

    pub fn disconnect(&mut self, conn: ConnId) {
        self.core.disconnect(conn);
        self.inbox.remove(&conn);
    }

    pub fn fresh_id(&mut self) -> CorrelationId {
        self.next_id += 1;
        CorrelationId::from_u128(self.next_id)
    }

    /// Sends `env` from the client side, stamping seq and ts_ms.
    pub fn send(&mut self, conn: ConnId, env: Envelope) -> CorrelationId {
        let seq = self.out_seq.entry(conn).or_insert(0);
        *seq += 1;
        let env = env.with_seq(*seq, self.now_ms);
        let id = env.correlation_id;
        self.core.receive(conn, env, self.now_ms);
        id
    }

    pub fn request(&mut self, conn: ConnId, kind: Kind, topic: &str, payload: Value) -> CorrelationId {
        let id = self.fresh_id();
        self.send(conn, Envelope::new(kind, topic, id, payload))
    }

    pub fn auth(&mut self, conn: ConnId, token: &str) -> CorrelationId {
        self.request(conn, Kind::Auth, "", json!({ "token": token }))
    }

    pub fn subscribe(&mut self, conn: ConnId, pattern: &str) -> CorrelationId {
        self.request(conn, Kind::Sub, pattern, Value::Null)
    }

    pub fn command(&mut self, conn: ConnId, topic: &str, payload: Value) -> CorrelationId {
        self.request(conn, Kind::Cmd, topic, payload)
    }

    fn tick(&mut self) {
        let view = self.engine.view();
        let inputs = self.core.step(self.now_ms, &view);
        let out = self.engine.tick(inputs);
        self.core.on_tick(&out, self.now_ms);
        if self.keep_ticks {
            self.ticks.push(out);
        }
    }

    fn deliver(&mut self) {
        for (conn, env) in self.core.flush(self.now_ms) {
            if let Some(v) = self.inbox.get_mut(&conn) {
                v.push(Delivered { at_ms: self.now_ms, env });
            }
        }
    }

    /// Advances the clock by `ms`, ticking the engine on its period and
    /// delivering envelopes as they fall due.
    pub fn advance(&mut self, ms: u64) {
        let end = self.now_ms + ms;
        while self.now_ms < end {
            if self.now_ms >= self.next_tick_ms {
                self.tick();
                self.next_tick_ms += self.tick_ms;
            }
            self.deliver();
            self.now_ms += 1;
        }
        if self.now_ms >= self.next_tick_ms {
            self.tick();
            self.next_tick_ms += self.tick_ms;
        }
        self.deliver();
    }

    pub fn inbox(&self, conn: ConnId) -> &[Delivered] {
        self.inbox.get(&conn).map_or(&[], Vec::as_slice)
    }

    pub fn take_inbox(&mut self, conn: ConnId) -> Vec<Delivered> {
        self.inbox.get_mut(&conn).map(std::mem::take).unwrap_or_default()
    }

    /// The ACK for `id`, when it has arrived.
    pub fn ack_for(&self, conn: ConnId, id: CorrelationId) -> Option<(u64, Ack)> {
        self.inbox(conn)
            .iter()
            .find(|d| d.env.kind == Kind::Ack && d.env.correlation_id == id)
            .and_then(|d| d.env.as_ack().map(|a| (d.at_ms, a)))
    }

    /// Advances until `id` is acked or `timeout_ms` passes.
    pub fn await_ack(&mut self, conn: ConnId, id: CorrelationId, timeout_ms: u64) -> Option<(u64, Ack)> {
        let deadline = self.now_ms + timeout_ms;
        while self.now_ms < deadline {
            if let Some(a) = self.ack_for(conn, id) {
                return Some(a);
            }
            self.advance(1);
        }
        self.ack_for(conn, id)
    }
}
