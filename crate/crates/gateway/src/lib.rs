//! The intranet gateway: every operator connection passes through here.
//!
//! [`GatewayCore`] holds the logic without IO. [`VirtualSystem`] pairs it
//! with an engine on a virtual clock for deterministic tests, and
//! [`runtime::Gateway`] serves it over TCP and WebSocket in real time.

pub mod config;
pub mod core;
pub mod latency;
pub mod policy;
pub mod runtime;
pub mod session;
pub mod virtual_system;
mod web;

pub use crate::config::{ClientEntry, ConfigError, GatewayConfig, Listeners, CONFIG_ENV};
pub use crate::core::{GatewayCore, PolicyAudit, ESTOP_TOPIC, STATUS_TOPIC};
pub use crate::latency::{Clock, DelayLine, LatencyProfile, SystemClock, VirtualClock};
pub use crate::policy::{Rejection, SafetyPolicy};
pub use crate::session::{ClientSession, EStopState, Role, Slot};
pub use crate::virtual_system::VirtualSystem;
