use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{Map, Value};
use std::fmt;

pub const PROTOCOL_VERSION: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Kind {
    Pub,
    Sub,
    Unsub,
    Cmd,
    Ack,
    Err,
    Auth,
    Ping,
    Pong,
}

impl Kind {
    pub const ALL: [Kind; 9] = [
        Kind::Pub,
        Kind::Sub,
        Kind::Unsub,
        Kind::Cmd,
        Kind::Ack,
        Kind::Err,
        Kind::Auth,
        Kind::Ping,
        Kind::Pong,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Pub => "PUB",
            Kind::Sub => "SUB",
            Kind::Unsub => "UNSUB",
            Kind::Cmd => "CMD",
            Kind::Ack => "ACK",
            Kind::Err => "ERR",
            Kind::Auth => "AUTH",
            Kind::Ping => "PING",
            Kind::Pong => "PONG",
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// 16-byte id, lowercase hex on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct CorrelationId(pub [u8; 16]);

impl CorrelationId {
    pub fn from_u128(v: u128) -> Self {
        Self(v.to_be_bytes())
    }

    pub fn as_u128(&self) -> u128 {
        u128::from_be_bytes(self.0)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn parse(s: &str) -> Result<Self, String> {
        if s.len() != 32 || s.bytes().any(|b| b.is_ascii_uppercase()) {
            return Err(format!("correlation_id must be 32 lowercase hex digits, got {s:?}"));
        }
        let mut out = [0u8; 16];
        hex::decode_to_slice(s, &mut out).map_err(|e| e.to_string())?;
        Ok(Self(out))
    }
}

impl fmt::Display for CorrelationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for CorrelationId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for CorrelationId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        CorrelationId::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// The wire unit. Field order here is the canonical key order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Envelope {
    pub version: u64,
    pub kind: Kind,
    /// Empty for AUTH, PING and PONG.
    pub topic: String,
    pub correlation_id: CorrelationId,
    pub seq: u64,
    pub ts_ms: u64,
    pub payload: Map<String, Value>,
}

impl Envelope {
    pub fn new(kind: Kind, topic: impl Into<String>, correlation_id: CorrelationId, payload: Value) -> Self {
        let payload = match payload {
            Value::Object(m) => m,
            Value::Null => Map::new(),
            other => {
                let mut m = Map::new();
                m.insert("value".into(), other);
                m
            }
        };
        Self {
            version: PROTOCOL_VERSION,
            kind,
            topic: topic.into(),
            correlation_id,
            seq: 0,
            ts_ms: 0,
            payload,
        }
    }

    pub fn ping(correlation_id: CorrelationId) -> Self {
        Self::new(Kind::Ping, "", correlation_id, Value::Null)
    }

    pub fn with_seq(mut self, seq: u64, ts_ms: u64) -> Self {
        self.seq = seq;
        self.ts_ms = ts_ms;
        self
    }

    pub fn payload_value(&self) -> Value {
        Value::Object(self.payload.clone())
    }

    /// Reply sharing this envelope's topic and correlation id.
    pub fn reply(&self, kind: Kind, payload: Value) -> Self {
        Self::new(kind, self.topic.clone(), self.correlation_id, payload)
    }

    pub fn ack(&self, ack: &Ack) -> Self {
        self.reply(Kind::Ack, serde_json::to_value(ack).expect("ack serializes"))
    }

    pub fn err(&self, code: &str, message: impl Into<String>) -> Self {
        let body = ErrorBody {
            code: code.to_string(),
            message: message.into(),
        };
        self.reply(Kind::Err, serde_json::to_value(body).expect("error serializes"))
    }

    pub fn as_ack(&self) -> Option<Ack> {
        if self.kind != Kind::Ack {
            return None;
        }
        serde_json::from_value(self.payload_value()).ok()
    }

    pub fn as_error(&self) -> Option<ErrorBody> {
        if self.kind != Kind::Err {
            return None;
        }
        serde_json::from_value(self.payload_value()).ok()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AckStatus {
    Success,
    Failure,
    Superseded,
    Rejected,
}

impl AckStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            AckStatus::Success => "SUCCESS",
            AckStatus::Failure => "FAILURE",
            AckStatus::Superseded => "SUPERSEDED",
            AckStatus::Rejected => "REJECTED",
        }
    }
}

impl fmt::Display for AckStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for AckStatus {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "SUCCESS" => Ok(AckStatus::Success),
            "FAILURE" => Ok(AckStatus::Failure),
            "SUPERSEDED" => Ok(AckStatus::Superseded),
            "REJECTED" => Ok(AckStatus::Rejected),
            other => Err(format!("unknown ack status {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reason {
    pub code: String,
    pub message: String,
}

/// ACK payload. Extra fields (AUTH replies carry role and slot) sit beside
/// status and reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    pub status: AckStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<Reason>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl Ack {
    pub fn success() -> Self {
        Self {
            status: AckStatus::Success,
            reason: None,
            extra: Map::new(),
        }
    }

    pub fn with_reason(status: AckStatus, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            reason: Some(Reason {
                code: code.to_string(),
                message: message.into(),
            }),
            extra: Map::new(),
        }
    }

    pub fn rejected(code: &str, message: impl Into<String>) -> Self {
        Self::with_reason(AckStatus::Rejected, code, message)
    }

    pub fn code(&self) -> Option<&str> {
        self.reason.as_ref().map(|r| r.code.as_str())
    }
}

/// ERR payload.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}
