//! Wire protocol and pub/sub broker shared by the gateway and its clients.
//!
//! Frames are a 4-byte big-endian length followed by a JSON envelope. The
//! broker is sans-IO: callers feed it decoded envelopes and drain per
//! connection outboxes.

pub mod broker;
pub mod codec;
pub mod envelope;
pub mod topic;

pub use broker::{Broker, BrokerConfig, ConnId, Ingress};
pub use codec::{decode, decode_text, encode, encode_text, DecodeError, EncodeError, FrameReader, MAX_FRAME_BYTES};
pub use envelope::{Ack, AckStatus, CorrelationId, Envelope, ErrorBody, Kind, Reason, PROTOCOL_VERSION};
pub use topic::{Pattern, PatternError, TopicError};
