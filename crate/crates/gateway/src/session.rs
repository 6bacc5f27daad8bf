//! Token authentication, roles, access slots and the e-stop latch.

use crate::latency::LatencyProfile;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Internet,
    Intranet,
}

/// Access window in Unix milliseconds, inclusive at both ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Slot {
    pub start_ms: u64,
    pub end_ms: u64,
}

impl Slot {
    pub fn contains(&self, t_ms: u64) -> bool {
        t_ms >= self.start_ms && t_ms <= self.end_ms
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientSession {
    pub client_id: String,
    pub role: Role,
    pub slot: Option<Slot>,
    pub profile: LatencyProfile,
}

impl ClientSession {
    /// Intranet sessions have no slot restriction.
    pub fn in_slot(&self, now_ms: u64) -> bool {
        match (self.role, self.slot) {
            (Role::Intranet, _) => true,
            (Role::Internet, Some(s)) => s.contains(now_ms),
            (Role::Internet, None) => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum AuthError {
    #[error("unknown token")]
    BadToken,
    #[error("concurrent internet session limit reached")]
    SessionLimit,
    #[error("client already connected")]
    AlreadyConnected,
}

impl AuthError {
    pub fn code(self) -> &'static str {
        match self {
            AuthError::BadToken => "BAD_TOKEN",
            AuthError::SessionLimit => "SESSION_LIMIT",
            AuthError::AlreadyConnected => "SESSION_LIMIT",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EStopState {
    pub latched: bool,
    pub engaged_by: Option<String>,
    pub engaged_at_ms: Option<u64>,
}

impl Default for EStopState {
    fn default() -> Self {
        Self {
            latched: false,
            engaged_by: None,
            engaged_at_ms: None,
        }
    }
}

impl EStopState {
    /// Latches. Engaging an engaged latch keeps the first engagement.
    pub fn engage(&mut self, client_id: &str, now_ms: u64) {
        if !self.latched {
            self.latched = true;
            self.engaged_by = Some(client_id.to_string());
            self.engaged_at_ms = Some(now_ms);
        }
    }

    pub fn clear(&mut self, session: &ClientSession) -> Result<(), &'static str> {
        if session.role != Role::Intranet {
            return Err("FORBIDDEN");
        }
        self.latched = false;
        self.engaged_by = None;
        self.engaged_at_ms = None;
        Ok(())
    }
}
