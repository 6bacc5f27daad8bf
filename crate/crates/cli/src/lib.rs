//! Operator tooling: a blocking gateway client, the one-line command
//! language, command traces and their replay.

pub mod client;
pub mod command;
pub mod replay;
pub mod trace;

pub use client::{Client, ClientError, Incoming};
pub use command::{parse_op, Op};
pub use replay::{replay_live, replay_offline, FinalState, OfflineReport, ReplayReport, StepResult};
pub use trace::{parse_trace, write_trace, Expect, TraceError, TraceStep};
