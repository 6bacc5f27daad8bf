//! Deterministic greenhouse and rover simulation: world model, rover
//! kinematics and sensors, navigation, and the fixed-step engine.

pub mod engine;
pub mod geometry;
pub mod navigation;
pub mod rover;
pub mod scenario;
pub mod world;

pub use engine::{
    ActuationCommand, AckStatus, CommandAck, CommandAudit, CommandKind, Engine, EngineInput, MissionCommand,
    RoverView, TelemetryEvent, TickOutput,
};
pub use scenario::{load_scenario, load_scenario_file, Scenario, ScenarioError};
pub use world::WorldState;
