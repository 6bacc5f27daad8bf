//! Frame codec: `u32` big-endian body length, then the UTF-8 JSON body with
//! keys in canonical order. The WebSocket bridge carries the body alone.

use crate::envelope::{Envelope, Kind, PROTOCOL_VERSION};
use crate::topic::{validate_topic, Pattern};
use serde_json::Value;

/// Largest accepted body, in bytes.
pub const MAX_FRAME_BYTES: usize = 1 << 20;
const PREFIX: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EncodeError {
    #[error("FRAME_TOO_LARGE: body of {0} bytes")]
    FrameTooLarge(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DecodeError {
    #[error("FRAME_TOO_LARGE: declared body of {0} bytes")]
    FrameTooLarge(usize),
    #[error("MALFORMED: {0}")]
    Malformed(String),
    #[error("UNSUPPORTED_VERSION: {0}")]
    UnsupportedVersion(u64),
}

impl DecodeError {
    pub fn code(&self) -> &'static str {
        match self {
            DecodeError::FrameTooLarge(_) => "FRAME_TOO_LARGE",
            DecodeError::Malformed(_) => "MALFORMED",
            DecodeError::UnsupportedVersion(_) => "UNSUPPORTED_VERSION",
        }
    }
}

fn malformed(msg: impl Into<String>) -> DecodeError {
    DecodeError::Malformed(msg.into())
}

pub fn encode_text(env: &Envelope) -> String {
    serde_json::to_string(env).expect("envelope serializes")
}

pub fn encode(env: &Envelope) -> Result<Vec<u8>, EncodeError> {
    let body = encode_text(env);
    if body.len() > MAX_FRAME_BYTES {
        return Err(EncodeError::FrameTooLarge(body.len()));
    }
    let mut out = Vec::with_capacity(PREFIX + body.len());
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(body.as_bytes());
    Ok(out)
}

/// Parses one body. The version is checked before the rest of the shape so
/// that future envelopes report UNSUPPORTED_VERSION rather than MALFORMED.
pub fn decode_text(body: &str) -> Result<Envelope, DecodeError> {
    if body.len() > MAX_FRAME_BYTES {
        return Err(DecodeError::FrameTooLarge(body.len()));
    }
    let value: Value = serde_json::from_str(body).map_err(|e| malformed(e.to_string()))?;
    let obj = value.as_object().ok_or_else(|| malformed("body is not an object"))?;
    let version = obj
        .get("version")
        .ok_or_else(|| malformed("missing version"))?
        .as_u64()
        .ok_or_else(|| malformed("version is not an unsigned integer"))?;
    if version != PROTOCOL_VERSION {
        return Err(DecodeError::UnsupportedVersion(version));
    }
    let env: Envelope = serde_json::from_value(value).map_err(|e| malformed(e.to_string()))?;
    check_topic(&env)?;
    Ok(env)
}

fn check_topic(env: &Envelope) -> Result<(), DecodeError> {
    let bad = |e| malformed(format!("topic {:?}: {e}", env.topic));
    match env.kind {
        Kind::Pub | Kind::Cmd => validate_topic(&env.topic).map_err(bad),
        // Patterns are checked by the broker, which answers BAD_PATTERN.
        Kind::Sub | Kind::Unsub => {
            if env.topic.is_empty() {
                Err(malformed("missing pattern"))
            } else {
                Ok(())
            }
        }
        // An ERR may echo whatever topic it refuses.
        Kind::Err => Ok(()),
        Kind::Ack if !env.topic.is_empty() => Pattern::parse(&env.topic)
            .map(|_| ())
            .map_err(|e| malformed(format!("topic {:?}: {e}", env.topic))),
        _ if env.topic.is_empty() => Ok(()),
        _ => validate_topic(&env.topic).map_err(bad),
    }
}

/// Decodes exactly one frame.
pub fn decode(bytes: &[u8]) -> Result<Envelope, DecodeError> {
    let mut reader = FrameReader::new();
    reader.push(bytes);
    match reader.next_frame() {
        None => Err(malformed("truncated frame")),
        Some(Err(e)) => Err(e),
        Some(Ok(env)) if reader.buffered() == 0 => Ok(env),
        Some(Ok(_)) => Err(malformed("trailing bytes after frame")),
    }
}

/// Incremental decoder for a byte stream.
#[derive(Debug, Default)]
pub struct FrameReader {
    buf: Vec<u8>,
    poisoned: Option<DecodeError>,
}

impl FrameReader {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bytes: &[u8]) {
        if self.poisoned.is_none() {
            self.buf.extend_from_slice(bytes);
        }
    }

    pub fn buffered(&self) -> usize {
        self.buf.len()
    }

    /// Next complete frame, if any. A body that fails to parse is consumed
    /// and reported; an oversized length prefix poisons the stream since the
    /// frame boundary can no longer be trusted.
    pub fn next_frame(&mut self) -> Option<Result<Envelope, DecodeError>> {
        if let Some(e) = &self.poisoned {
            return Some(Err(e.clone()));
        }
        if self.buf.len() < PREFIX {
            return None;
        }
        let len = u32::from_be_bytes([self.buf[0], self.buf[1], self.buf[2], self.buf[3]]) as usize;
        if len > MAX_FRAME_BYTES {
            let e = DecodeError::FrameTooLarge(len);
            self.poisoned = Some(e.clone());
            self.buf.clear();
            return Some(Err(e));
        }
        if self.buf.len() < PREFIX + len {
            return None;
        }
        let body: Vec<u8> = self.buf.drain(..PREFIX + len).skip(PREFIX).collect();
        Some(match std::str::from_utf8(&body) {
            Ok(text) => decode_text(text),
            Err(e) => Err(malformed(format!("body is not UTF-8: {e}"))),
        })
    }

    pub fn is_poisoned(&self) -> bool {
        self.poisoned.is_some()
    }
}
