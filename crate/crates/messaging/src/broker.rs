//! Sans-IO topic broker.
//!
//! Connections are opened and fed decoded envelopes by the transport. The
//! broker fans publications out into bounded per-connection outboxes and
//! hands every CMD envelope to the command queue drained by the gateway;
//! it has no other way to deliver a command.

use crate::envelope::{Ack, CorrelationId, Envelope, Kind};
use crate::topic::{Pattern, PatternError};
use serde_json::Value;
use std::collections::{BTreeMap, BTreeSet, VecDeque};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ConnId(pub u64);

impl std::fmt::Display for ConnId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "conn-{}", self.0)
    }
}

/// Topics that carry commands. Never retained.
pub const COMMAND_TOPICS: [&str; 6] = [
    "/rover/cmd_vel",
    "/rover/arm/cmd",
    "/rover/gripper/cmd",
    "/rover/pluck/cmd",
    "/rover/mission/cmd",
    "/gateway/estop",
];

pub fn is_command_topic(topic: &str) -> bool {
    COMMAND_TOPICS.contains(&topic)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BrokerConfig {
    /// Publications held per connection before the oldest is dropped.
    pub outbox_capacity: usize,
}

impl Default for BrokerConfig {
    fn default() -> Self {
        Self { outbox_capacity: 1024 }
    }
}

#[derive(Debug, Default)]
struct Connection {
    authorized: bool,
    may_publish: bool,
    patterns: BTreeSet<Pattern>,
    outbox: VecDeque<Envelope>,
    out_seq: u64,
    in_seq: Option<u64>,
    dropped: u64,
}

#[derive(Debug, Default, Clone)]
struct TopicEntry {
    publishers: BTreeSet<ConnId>,
    retained: Option<Envelope>,
}

/// One row of [`Broker::topic_table`].
#[derive(Debug, Clone, PartialEq)]
pub struct TopicRow {
    pub topic: String,
    pub publishers: BTreeSet<ConnId>,
    pub subscribers: BTreeSet<ConnId>,
    pub retained: bool,
}

/// What the broker did with an ingress envelope.
#[derive(Debug, Clone, PartialEq)]
pub enum Ingress {
    /// Answered or applied inside the broker; replies are in the outbox.
    Handled,
    /// Queued for the gateway's command filter.
    Command,
    /// Needs authentication by the gateway.
    Auth(Envelope),
    /// Rejected with an ERR in the outbox.
    Refused(&'static str),
    Ignored,
}

#[derive(Debug)]
pub struct Broker {
    config: BrokerConfig,
    conns: BTreeMap<ConnId, Connection>,
    topics: BTreeMap<String, TopicEntry>,
    commands: VecDeque<(ConnId, Envelope)>,
    next_conn: u64,
    next_id: u128,
}

impl Default for Broker {
    fn default() -> Self {
        Self::new(BrokerConfig::default())
    }
}

impl Broker {
    pub fn new(config: BrokerConfig) -> Self {
        Self {
            config,
            conns: BTreeMap::new(),
            topics: BTreeMap::new(),
            commands: VecDeque::new(),
            next_conn: 1,
            // High bit set so broker ids never collide with small client counters.
            next_id: 1 << 127,
        }
    }

    pub fn connect(&mut self) -> ConnId {
        let id = ConnId(self.next_conn);
        self.next_conn += 1;
        self.conns.insert(id, Connection::default());
        id
    }

    /// A connection allowed to publish, such as the engine bridge.
    pub fn connect_publisher(&mut self) -> ConnId {
        let id = self.connect();
        let c = self.conns.get_mut(&id).expect("just inserted");
        c.authorized = true;
        c.may_publish = true;
        id
    }

    pub fn disconnect(&mut self, id: ConnId) {
        self.conns.remove(&id);
        for entry in self.topics.values_mut() {
            entry.publishers.remove(&id);
        }
        self.commands.retain(|(c, _)| *c != id);
    }

    pub fn is_connected(&self, id: ConnId) -> bool {
        self.conns.contains_key(&id)
    }

    pub fn authorize(&mut self, id: ConnId) {
        if let Some(c) = self.conns.get_mut(&id) {
            c.authorized = true;
        }
    }

    pub fn is_authorized(&self, id: ConnId) -> bool {
        self.conns.get(&id).is_some_and(|c| c.authorized)
    }

    pub fn connection_count(&self) -> usize {
        self.conns.len()
    }

    fn fresh_id(&mut self) -> CorrelationId {
        self.next_id += 1;
        CorrelationId::from_u128(self.next_id)
    }

    /// Queues `env` for `id`, stamping the connection's next sequence number.
    /// ACK and ERR are never dropped; publications are dropped oldest first
    /// when the outbox is full.
    pub fn send(&mut self, id: ConnId, env: Envelope, now_ms: u64) {
        let cap = self.config.outbox_capacity;
        let Some(c) = self.conns.get_mut(&id) else {
            return;
        };
        if env.kind == Kind::Pub && c.outbox.len() >= cap {
            if let Some(i) = c.outbox.iter().position(|e| e.kind == Kind::Pub) {
                c.outbox.remove(i);
                c.dropped += 1;
            }
        }
        c.out_seq += 1;
        let seq = c.out_seq;
        c.outbox.push_back(env.with_seq(seq, now_ms));
    }

    pub fn drain(&mut self, id: ConnId) -> Vec<Envelope> {
        self.conns
            .get_mut(&id)
            .map(|c| c.outbox.drain(..).collect())
            .unwrap_or_default()
    }

    pub fn pending(&self, id: ConnId) -> usize {
        self.conns.get(&id).map_or(0, |c| c.outbox.len())
    }

    pub fn dropped(&self, id: ConnId) -> u64 {
        self.conns.get(&id).map_or(0, |c| c.dropped)
    }

    /// CMD envelopes in arrival order, for the gateway filter.
    pub fn take_commands(&mut self) -> Vec<(ConnId, Envelope)> {
        self.commands.drain(..).collect()
    }

    fn refuse(&mut self, id: ConnId, env: &Envelope, code: &'static str, msg: impl Into<String>, now_ms: u64) -> Ingress {
        let reply = env.err(code, msg);
        self.send(id, reply, now_ms);
        Ingress::Refused(code)
    }

    /// Processes one envelope received on `id`.
    pub fn ingress(&mut self, id: ConnId, env: Envelope, now_ms: u64) -> Ingress {
        let Some(c) = self.conns.get_mut(&id) else {
            return Ingress::Ignored;
        };
        if c.in_seq.is_some_and(|prev| env.seq <= prev) {
            let prev = c.in_seq.unwrap_or(0);
            return self.refuse(id, &env, "BAD_SEQ", format!("seq {} not above {prev}", env.seq), now_ms);
        }
        c.in_seq = Some(env.seq);
        let authorized = c.authorized;
        match env.kind {
            Kind::Auth => Ingress::Auth(env),
            Kind::Ping => {
                let pong = env.reply(Kind::Pong, Value::Null);
                self.send(id, pong, now_ms);
                Ingress::Handled
            }
            Kind::Sub | Kind::Unsub | Kind::Cmd | Kind::Pub if !authorized => {
                self.refuse(id, &env, "UNAUTHORIZED", "authenticate first", now_ms)
            }
            Kind::Sub => match Pattern::parse(&env.topic) {
                Ok(_) => {
                    self.send(id, env.ack(&Ack::success()), now_ms);
                    self.subscribe(id, &env.topic, now_ms).expect("pattern already parsed");
                    Ingress::Handled
                }
                Err(e) => self.refuse(id, &env, "BAD_PATTERN", e.to_string(), now_ms),
            },
            Kind::Unsub => {
                match Pattern::parse(&env.topic) {
                    Ok(p) => {
                        if let Some(c) = self.conns.get_mut(&id) {
                            c.patterns.remove(&p);
                        }
                        self.send(id, env.ack(&Ack::success()), now_ms);
                    }
                    Err(e) => return self.refuse(id, &env, "BAD_PATTERN", e.to_string(), now_ms),
                }
                Ingress::Handled
            }
            Kind::Cmd => {
                self.commands.push_back((id, env));
                Ingress::Command
            }
            Kind::Pub => {
                if !self.conns[&id].may_publish {
                    return self.refuse(id, &env, "FORBIDDEN", "clients may not publish", now_ms);
                }
                if is_command_topic(&env.topic) {
                    return self.refuse(id, &env, "FORBIDDEN", "commands must be sent as CMD", now_ms);
                }
                self.fan_out(Some(id), env, now_ms);
                Ingress::Handled
            }
            Kind::Ack | Kind::Err | Kind::Pong => Ingress::Ignored,
        }
    }

    /// Adds a subscription, then replays matching retained values
    /// in topic order.
    pub fn subscribe(&mut self, id: ConnId, pattern: &str, now_ms: u64) -> Result<(), PatternError> {
        let p = Pattern::parse(pattern)?;
        let replay: Vec<Envelope> = self
            .topics
            .iter()
            .filter(|(t, _)| p.matches(t))
            .filter_map(|(_, e)| e.retained.clone())
            .collect();
        let Some(c) = self.conns.get_mut(&id) else {
            return Ok(());
        };
        c.patterns.insert(p);
        for env in replay {
            self.send(id, env, now_ms);
        }
        Ok(())
    }

    /// Publishes from an internal source.
    pub fn publish(&mut self, topic: &str, payload: Value, now_ms: u64) {
        let env = Envelope::new(Kind::Pub, topic, self.fresh_id(), payload);
        self.fan_out(None, env, now_ms);
    }

    fn fan_out(&mut self, from: Option<ConnId>, env: Envelope, now_ms: u64) {
        let entry = self.topics.entry(env.topic.clone()).or_default();
        if let Some(p) = from {
            entry.publishers.insert(p);
        }
        let mut canonical = env.clone();
        canonical.seq = 0;
        canonical.ts_ms = now_ms;
        if !is_command_topic(&env.topic) {
            entry.retained = Some(canonical.clone());
        }
        let targets: Vec<ConnId> = self
            .conns
            .iter()
            .filter(|(_, c)| c.patterns.iter().any(|p| p.matches(&env.topic)))
            .map(|(id, _)| *id)
            .collect();
        for t in targets {
            self.send(t, canonical.clone(), now_ms);
        }
    }

    pub fn retained(&self, topic: &str) -> Option<&Envelope> {
        self.topics.get(topic).and_then(|e| e.retained.as_ref())
    }

    pub fn subscribers(&self, topic: &str) -> BTreeSet<ConnId> {
        self.conns
            .iter()
            .filter(|(_, c)| c.patterns.iter().any(|p| p.matches(topic)))
            .map(|(id, _)| *id)
            .collect()
    }

    pub fn topic_table(&self) -> Vec<TopicRow> {
        self.topics
            .iter()
            .map(|(t, e)| TopicRow {
                topic: t.clone(),
                publishers: e.publishers.clone(),
                subscribers: self.subscribers(t),
                retained: e.retained.is_some(),
            })
            .collect()
    }
}
