//! Fixed-timestep simulation loop: command lanes, actuation, sensing and
//! change-driven telemetry.

mod perf;

pub use perf::{
    rtf, run, run_until, PerfMetrics, PerfReport, RunMode, TickHistogram, HISTOGRAM_BOUNDS_US,
};

use crate::rover::{
    grasp_check, joint_index, plan_joint_motion, plan_through, scan_lidar, scan_sonar, step_base,
    JointVector, LidarScan, PlanLimits, SonarRing, TrajectoryExecutor, JOINT_COUNT, JOINT_NAMES,
};
use crate::navigation::{DriveLimits, MissionEvent, MissionMode};
use crate::scenario::Scenario;
use crate::world::{
    camera_detections_with_sigma, render_snapshot, PluckOutcome, TomatoState, WorldState,
    DEFAULT_PIXEL_NOISE_PX,
};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub dt_s: f64,
    pub lidar_period_ticks: u64,
    pub camera_period_ticks: u64,
    pub pixel_noise_px: f64,
    pub perf_window_s: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            dt_s: 0.02,
            lidar_period_ticks: 5,
            camera_period_ticks: 10,
            pixel_noise_px: DEFAULT_PIXEL_NOISE_PX,
            perf_window_s: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimClock {
    pub tick_index: u64,
    pub dt_s: f64,
    /// Maintained by the run loop; never part of telemetry.
    pub wall_time_elapsed_s: f64,
}

impl SimClock {
    pub fn new(dt_s: f64) -> Self {
        Self {
            tick_index: 0,
            dt_s,
            wall_time_elapsed_s: 0.0,
        }
    }

    pub fn sim_time_s(&self) -> f64 {
        self.tick_index as f64 * self.dt_s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MissionCommand {
    Start { markers: Vec<u32> },
    Resume,
    Abort,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CommandKind {
    BaseVelocity {
        v_left: f64,
        v_right: f64,
    },
    JointDelta {
        joint: usize,
        delta_rad: f64,
        /// Defaults to the arm's execution speed.
        speed_rad_s: Option<f64>,
    },
    JointTrajectory {
        waypoints: Vec<JointVector>,
        speed_rad_s: Option<f64>,
    },
    GripperSet {
        aperture_m: f64,
    },
    Pluck {
        force_n: f64,
    },
    Mission(MissionCommand),
    Stop,
}

impl CommandKind {
    /// Whether the command can move the base or the arm.
    pub fn is_motion(&self) -> bool {
        !matches!(self, CommandKind::Stop)
            && !matches!(self, CommandKind::Mission(MissionCommand::Abort))
    }

    /// Every numeric field is finite.
    pub fn is_finite(&self) -> bool {
        match self {
            CommandKind::BaseVelocity { v_left, v_right } => v_left.is_finite() && v_right.is_finite(),
            CommandKind::JointDelta {
                delta_rad,
                speed_rad_s,
                ..
            } => delta_rad.is_finite() && speed_rad_s.is_none_or(f64::is_finite),
            CommandKind::JointTrajectory {
                waypoints,
                speed_rad_s,
            } => {
                waypoints.iter().flatten().all(|v| v.is_finite())
                    && speed_rad_s.is_none_or(f64::is_finite)
            }
            CommandKind::GripperSet { aperture_m } => aperture_m.is_finite(),
            CommandKind::Pluck { force_n } => force_n.is_finite(),
            CommandKind::Mission(_) | CommandKind::Stop => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActuationCommand {
    pub kind: CommandKind,
    pub issued_by: String,
    pub correlation_id: String,
}

impl ActuationCommand {
    pub fn new(kind: CommandKind, issued_by: impl Into<String>, correlation_id: impl Into<String>) -> Self {
        Self {
            kind,
            issued_by: issued_by.into(),
            correlation_id: correlation_id.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EngineInput {
    Command(ActuationCommand),
    /// Latched e-stop from the gateway: while true every tick ends at rest.
    StandingStop(bool),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AckStatus {
    Success,
    Failure,
    Superseded,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AckReason {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandAck {
    pub correlation_id: String,
    pub issued_by: String,
    pub status: AckStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<AckReason>,
}

impl CommandAck {
    fn new(cmd: &ActuationCommand, status: AckStatus) -> Self {
        Self {
            correlation_id: cmd.correlation_id.clone(),
            issued_by: cmd.issued_by.clone(),
            status,
            reason: None,
        }
    }

    fn failure(cmd: &ActuationCommand, code: &str, message: impl Into<String>) -> Self {
        Self {
            reason: Some(AckReason {
                code: code.into(),
                message: message.into(),
            }),
            ..Self::new(cmd, AckStatus::Failure)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryEvent {
    pub tick: u64,
    pub topic: String,
    pub payload: Value,
}

impl TelemetryEvent {
    /// One line of the determinism stream: no wall-clock content.
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("telemetry serializes")
    }
}

/// The slice of live state the gateway's filter consults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoverView {
    pub tick: u64,
    pub q: JointVector,
    pub sonar: SonarRing,
    pub v_left: f64,
    pub v_right: f64,
    pub estopped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TickOutput {
    pub tick: u64,
    pub acks: Vec<CommandAck>,
    pub telemetry: Vec<TelemetryEvent>,
    pub view: RoverView,
}

/// Engine-side hook run on every command just before it is applied.
pub trait CommandAudit: Send {
    fn audit(&mut self, command: &ActuationCommand, view: &RoverView);
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic per-purpose seed derived from the run seed.
pub fn derive_seed(run_seed: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(run_seed), |acc, &p| splitmix64(acc ^ p))
}

pub mod topics {
    pub const ODOM: &str = "/rover/odom";
    pub const ODOM_FILTERED: &str = "/rover/odom/filtered";
    pub const JOINT_STATES: &str = "/rover/arm/joint_states";
    pub const ARM_TRAJECTORY: &str = "/rover/arm/trajectory";
    pub const LIDAR: &str = "/rover/lidar";
    pub const SONAR: &str = "/rover/sonar";
    pub const GRIPPER: &str = "/rover/gripper";
    pub const MISSION_EVENTS: &str = "/rover/mission/events";
    pub const TOMATOES: &str = "/world/tomatoes";

    pub fn camera_frame(id: u32) -> String {
        format!("/camera/{id}/frame")
    }

    pub fn camera_detections(id: u32) -> String {
        format!("/camera/{id}/detections")
    }

    /// Topics whose payload is an event rather than a state sample.
    pub fn is_event_topic(topic: &str) -> bool {
        topic == MISSION_EVENTS || topic == ARM_TRAJECTORY
    }
}

const SALT_BASE: u64 = 1;
const SALT_CAMERA: u64 = 2;

pub struct Engine {
    scenario: Scenario,
    seed: u64,
    world: WorldState,
    estopped: bool,
    last_published: BTreeMap<String, Value>,
    last_scan: Option<LidarScan>,
    audit: Option<Box<dyn CommandAudit>>,
}

#[derive(Default)]
struct Lanes {
    stop: Option<ActuationCommand>,
    base: Option<ActuationCommand>,
    arm: Option<ActuationCommand>,
    gripper: Option<ActuationCommand>,
    pluck: Option<ActuationCommand>,
}

impl Lanes {
    fn put(slot: &mut Option<ActuationCommand>, cmd: ActuationCommand, acks: &mut Vec<CommandAck>) {
        if let Some(old) = slot.replace(cmd) {
            acks.push(CommandAck::new(&old, AckStatus::Superseded));
        }
    }

    fn halt(&mut self, acks: &mut Vec<CommandAck>) {
        for slot in [&mut self.base, &mut self.arm] {
            if let Some(old) = slot.take() {
                acks.push(CommandAck::new(&old, AckStatus::Superseded));
            }
        }
    }
}

impl Engine {
    pub fn new(scenario: Scenario, seed: u64) -> Result<Self, crate::scenario::ScenarioError> {
        let world = scenario.build_world()?;
        Ok(Self {
            scenario,
            seed,
            world,
            estopped: false,
            last_published: BTreeMap::new(),
            last_scan: None,
            audit: None,
        })
    }

    /// Rebuilds the initial world; telemetry history is cleared.
    pub fn reset(&mut self, seed: u64) -> &WorldState {
        self.seed = seed;
        self.world = self
            .scenario
            .build_world()
            .expect("scenario validated at construction");
        self.estopped = false;
        self.last_published.clear();
        self.last_scan = None;
        &self.world
    }

    pub fn set_audit(&mut self, audit: Box<dyn CommandAudit>) {
        self.audit = Some(audit);
    }

    pub fn take_audit(&mut self) -> Option<Box<dyn CommandAudit>> {
        self.audit.take()
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    /// Direct world access for staging test situations.
    pub fn world_mut(&mut self) -> &mut WorldState {
        &mut self.world
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn config(&self) -> &EngineConfig {
        &self.scenario.sim
    }

    pub fn dt_s(&self) -> f64 {
        self.scenario.sim.dt_s
    }

    pub fn estopped(&self) -> bool {
        self.estopped
    }

    pub fn view(&self) -> RoverView {
        let r = &self.world.rover;
        RoverView {
            tick: self.world.clock.tick_index,
            q: r.arm.q,
            sonar: r.sonar,
            v_left: r.base.v_left,
            v_right: r.base.v_right,
            estopped: self.estopped,
        }
    }

    /// Last telemetry value per topic, as retained by the broker.
    pub fn retained(&self) -> &BTreeMap<String, Value> {
        &self.last_published
    }

    /// Advances the world by one `dt`.
    pub fn tick(&mut self, inputs: Vec<EngineInput>) -> TickOutput {
        let mut acks = Vec::new();
        let mut events: Vec<MissionEvent> = Vec::new();
        let mut new_trajectory: Option<(Vec<JointVector>, f64)> = None;
        let mut lanes = Lanes::default();

        for input in inputs {
            match input {
                EngineInput::StandingStop(on) => {
                    self.estopped = on;
                    if on {
                        lanes.halt(&mut acks);
                    }
                }
                EngineInput::Command(cmd) => match &cmd.kind {
                    CommandKind::Stop => {
                        lanes.halt(&mut acks);
                        Lanes::put(&mut lanes.stop, cmd, &mut acks);
                    }
                    CommandKind::BaseVelocity { .. } | CommandKind::Mission(_) => {
                        Lanes::put(&mut lanes.base, cmd, &mut acks)
                    }
                    CommandKind::JointDelta { .. } | CommandKind::JointTrajectory { .. } => {
                        Lanes::put(&mut lanes.arm, cmd, &mut acks)
                    }
                    CommandKind::GripperSet { .. } => Lanes::put(&mut lanes.gripper, cmd, &mut acks),
                    CommandKind::Pluck { .. } => Lanes::put(&mut lanes.pluck, cmd, &mut acks),
                },
            }
        }

        let view = self.view();
        for cmd in [&lanes.stop, &lanes.base, &lanes.arm, &lanes.gripper, &lanes.pluck]
            .into_iter()
            .flatten()
        {
            if let Some(audit) = self.audit.as_mut() {
                audit.audit(cmd, &view);
            }
        }

        if let Some(cmd) = lanes.stop.take() {
            self.halt(&mut events);
            acks.push(CommandAck::new(&cmd, AckStatus::Success));
        }
        if self.estopped {
            self.halt(&mut events);
        }
        if let Some(cmd) = lanes.base.take() {
            acks.push(self.apply_base(&cmd, &mut events));
        }
        if let Some(cmd) = lanes.arm.take() {
            acks.push(self.apply_arm(&cmd, &mut new_trajectory));
        }
        if let Some(cmd) = lanes.gripper.take() {
            acks.push(self.apply_gripper(&cmd));
        }
        if let Some(cmd) = lanes.pluck.take() {
            acks.push(self.apply_pluck(&cmd));
        }

        self.advance(&mut events);
        let telemetry = self.collect_telemetry(events, new_trajectory);
        TickOutput {
            tick: self.world.clock.tick_index,
            acks,
            telemetry,
            view: self.view(),
        }
    }

    fn halt(&mut self, events: &mut Vec<MissionEvent>) {
        let rover = &mut self.world.rover;
        rover.base.stop();
        rover.arm.stop();
        events.extend(self.world.mission.abort());
    }

    fn apply_base(&mut self, cmd: &ActuationCommand, events: &mut Vec<MissionEvent>) -> CommandAck {
        if self.estopped && cmd.kind.is_motion() {
            return CommandAck::failure(cmd, "ESTOPPED", "e-stop is latched");
        }
        match &cmd.kind {
            CommandKind::BaseVelocity { v_left, v_right } => {
                events.extend(self.world.mission.abort());
                self.world.rover.base.set_wheel_speeds(*v_left, *v_right);
                CommandAck::new(cmd, AckStatus::Success)
            }
            CommandKind::Mission(mc) => match mc {
                MissionCommand::Start { markers } => {
                    events.extend(self.world.mission.abort());
                    let started = self
                        .world
                        .mission
                        .start(markers.clone(), &self.world.greenhouse);
                    events.extend(started);
                    self.world.rover.base.stop();
                    match self.world.mission.mode {
                        MissionMode::Fault(reason) => {
                            CommandAck::failure(cmd, reason.code(), "mission target not in world")
                        }
                        _ => CommandAck::new(cmd, AckStatus::Success),
                    }
                }
                MissionCommand::Resume => match self.world.mission.resume() {
                    Ok(ev) => {
                        events.extend(ev);
                        CommandAck::new(cmd, AckStatus::Success)
                    }
                    Err(e) => CommandAck::failure(cmd, "NOT_STOPPED", e.to_string()),
                },
                MissionCommand::Abort => {
                    let ev = self.world.mission.abort();
                    if !ev.is_empty() {
                        self.world.rover.base.stop();
                    }
                    events.extend(ev);
                    CommandAck::new(cmd, AckStatus::Success)
                }
            },
            _ => unreachable!("base lane carries base and mission commands"),
        }
    }

    fn apply_arm(
        &mut self,
        cmd: &ActuationCommand,
        new_trajectory: &mut Option<(Vec<JointVector>, f64)>,
    ) -> CommandAck {
        if self.estopped {
            return CommandAck::failure(cmd, "ESTOPPED", "e-stop is latched");
        }
        let arm_cfg = &self.world.rover.config.arm;
        let limits = PlanLimits::from_arm(arm_cfg);
        let q = self.world.rover.arm.q;
        let (plan, speed) = match &cmd.kind {
            CommandKind::JointDelta {
                joint,
                delta_rad,
                speed_rad_s,
            } => {
                if *joint >= JOINT_COUNT {
                    return CommandAck::failure(cmd, "BAD_JOINT", format!("joint index {joint} out of range"));
                }
                let mut target = q;
                target[*joint] += delta_rad;
                let speed = speed_rad_s
                    .unwrap_or(arm_cfg.execution_speed_rad_s)
                    .min(arm_cfg.velocity_limits_rad_s[*joint]);
                (plan_joint_motion(&q, &target, &limits, arm_cfg), speed)
            }
            CommandKind::JointTrajectory {
                waypoints,
                speed_rad_s,
            } => {
                let vmax = arm_cfg
                    .velocity_limits_rad_s
                    .iter()
                    .copied()
                    .fold(f64::INFINITY, f64::min);
                let speed = speed_rad_s.unwrap_or(arm_cfg.execution_speed_rad_s).min(vmax);
                (plan_through(&q, waypoints, &limits, arm_cfg), speed)
            }
            _ => unreachable!("arm lane carries joint commands"),
        };
        if !(speed > 0.0) {
            return CommandAck::failure(cmd, "JOINT_SPEED", "speed must be positive");
        }
        match plan {
            Ok(waypoints) if waypoints.is_empty() => CommandAck::new(cmd, AckStatus::Success),
            Ok(waypoints) => {
                *new_trajectory = Some((waypoints.clone(), speed));
                self.world.rover.arm.executor = Some(TrajectoryExecutor::new(waypoints, speed));
                CommandAck::new(cmd, AckStatus::Success)
            }
            Err(e) => CommandAck::failure(cmd, e.reason.code(), e.to_string()),
        }
    }

    fn apply_gripper(&mut self, cmd: &ActuationCommand) -> CommandAck {
        let CommandKind::GripperSet { aperture_m } = cmd.kind else {
            unreachable!("gripper lane carries gripper commands")
        };
        let rover = &mut self.world.rover;
        rover.gripper.set_aperture(aperture_m);
        self.update_grasp();
        if self.world.rover.gripper.grasped_tomato.is_none() {
            let rover = &self.world.rover;
            let grasp = grasp_check(&self.world.greenhouse, rover.fingertip_world, &rover.gripper);
            self.world.rover.gripper.grasped_tomato = grasp;
        }
        CommandAck::new(cmd, AckStatus::Success)
    }

    fn apply_pluck(&mut self, cmd: &ActuationCommand) -> CommandAck {
        let CommandKind::Pluck { force_n } = cmd.kind else {
            unreachable!("pluck lane carries pluck commands")
        };
        let Some(id) = self.world.rover.gripper.grasped_tomato else {
            return CommandAck::failure(cmd, "NOT_GRASPED", "no tomato in the gripper");
        };
        match self.world.apply_pluck(id, force_n) {
            Ok(PluckOutcome::Detached) => CommandAck::new(cmd, AckStatus::Success),
            Ok(other) => {
                let code = serde_json::to_value(other)
                    .ok()
                    .and_then(|v| v.as_str().map(str::to_owned))
                    .unwrap_or_default();
                CommandAck::failure(cmd, &code, format!("tomato {id}: {code}"))
            }
            Err(e) => CommandAck::failure(cmd, "UNKNOWN_TOMATO", e.to_string()),
        }
    }

    /// Keeps the grasp binding consistent with the gripper: releases when
    /// the aperture opens past the tomato or an attached tomato falls out of
    /// reach. Detached tomatoes released over the basket become Collected.
    fn update_grasp(&mut self) {
        let rover = &self.world.rover;
        let Some(id) = rover.gripper.grasped_tomato else {
            return;
        };
        let fingertip = rover.fingertip_world;
        let over_basket = rover.fingertip_over_basket();
        let aperture = rover.gripper.aperture_m;
        let grasp_radius = rover.gripper.grasp_radius_m;
        let Some(t) = self.world.greenhouse.tomato_mut(id) else {
            self.world.rover.gripper.grasped_tomato = None;
            return;
        };
        if t.state == TomatoState::Detached {
            t.center = fingertip;
        }
        let open = aperture >= t.diameter();
        let out_of_reach = crate::geometry::distance3(t.center, fingertip) > grasp_radius;
        if open || out_of_reach || t.state == TomatoState::Collected {
            if t.state == TomatoState::Detached {
                if over_basket {
                    t.state = TomatoState::Collected;
                } else {
                    // Dropped: it rests on the floor where it fell.
                    t.center[2] = t.radius_m;
                }
            }
            self.world.rover.gripper.grasped_tomato = None;
        }
    }

    fn advance(&mut self, events: &mut Vec<MissionEvent>) {
        let tick = self.world.clock.tick_index;
        let dt = self.dt_s();
        let need_scan = self.world.mission.mode == MissionMode::FollowingWall
            || tick % self.scenario.sim.lidar_period_ticks == 0;
        let scan = need_scan.then(|| {
            scan_lidar(
                &self.world.greenhouse,
                &self.world.rover.base.pose,
                &self.world.rover.config.lidar,
            )
        });

        if let Some(scan) = scan.as_ref().filter(|_| !self.estopped) {
            let base = &self.world.rover.base;
            let limits = DriveLimits {
                track_width_m: base.track_width_m,
                wheel_speed_limit_m_s: base.wheel_speed_limit_m_s,
            };
            let step = self.world.mission.step(
                scan,
                &self.world.greenhouse,
                &self.scenario.navigation,
                &limits,
            );
            if let Some((l, r)) = step.wheels {
                self.world.rover.base.set_wheel_speeds(l, r);
            }
            if let Some(fit) = step.fit {
                self.correct_heading(fit.heading_rad);
            }
            events.extend(step.events);
        }
        if scan.is_some() && tick % self.scenario.sim.lidar_period_ticks == 0 {
            self.last_scan = scan;
        }

        let rover = &mut self.world.rover;
        rover.base = step_base(&rover.base, dt, derive_seed(self.seed, &[SALT_BASE, tick]));
        rover.arm.step(dt);
        rover.refresh_fingertip();
        self.update_grasp();
        let rover = &mut self.world.rover;
        rover.sonar = scan_sonar(&self.world.greenhouse, &rover.base.pose, &rover.config.sonar);
        self.world.clock.tick_index += 1;
    }

    /// Nudges the filtered heading toward the map wall nearest the filtered
    /// position, using the lidar line fit's relative heading.
    fn correct_heading(&mut self, relative_heading: f64) {
        let filter = &mut self.world.rover.base.filter;
        let p = [filter.pose.x, filter.pose.y];
        let nearest = self
            .world
            .greenhouse
            .walls
            .iter()
            .min_by(|a, b| a.distance_to_point(p).total_cmp(&b.distance_to_point(p)));
        if let Some(w) = nearest {
            let direction = (w.b[1] - w.a[1]).atan2(w.b[0] - w.a[0]);
            filter.correct_heading(direction, relative_heading);
        }
    }

    fn publish_if_changed(&mut self, out: &mut Vec<TelemetryEvent>, tick: u64, topic: String, payload: Value) {
        if self.last_published.get(&topic) != Some(&payload) {
            self.last_published.insert(topic.clone(), payload.clone());
            out.push(TelemetryEvent {
                tick,
                topic,
                payload,
            });
        }
    }

    fn collect_telemetry(
        &mut self,
        events: Vec<MissionEvent>,
        new_trajectory: Option<(Vec<JointVector>, f64)>,
    ) -> Vec<TelemetryEvent> {
        // Samples are stamped with the tick that produced them.
        let tick = self.world.clock.tick_index - 1;
        let mut out = Vec::new();
        let r = &self.world.rover;
        let pose = r.base.pose;
        let raw = r.base.raw_odometry;
        let filtered = r.base.filtered_odometry();
        let odom = json!({
            "pose": pose,
            "raw": raw,
            "v_left": r.base.v_left,
            "v_right": r.base.v_right,
        });
        let odom_filtered = json!({ "pose": filtered });
        let joints = json!({
            "names": JOINT_NAMES,
            "position": r.arm.q,
            "velocity": r.arm.qd,
            "moving": r.arm.is_moving(),
        });
        let sonar = json!({ "ranges": r.sonar.ranges });
        let gripper = json!({
            "aperture_m": r.gripper.aperture_m,
            "grasped_tomato": r.gripper.grasped_tomato,
            "fingertip": r.fingertip_world,
        });
        let tomatoes: Vec<Value> = self
            .world
            .greenhouse
            .tomatoes()
            .map(|t| {
                json!({
                    "tomato_id": t.tomato_id,
                    "state": t.state,
                    "pluckable": t.pluckable,
                    "center": t.center,
                })
            })
            .collect();
        let world_tomatoes = json!({
            "tomatoes": tomatoes,
            "collected": self.world.collected_count(),
        });

        self.publish_if_changed(&mut out, tick, topics::ODOM.into(), odom);
        self.publish_if_changed(&mut out, tick, topics::ODOM_FILTERED.into(), odom_filtered);
        self.publish_if_changed(&mut out, tick, topics::JOINT_STATES.into(), joints);
        if let Some((waypoints, speed)) = new_trajectory {
            out.push(TelemetryEvent {
                tick,
                topic: topics::ARM_TRAJECTORY.into(),
                payload: json!({ "waypoints": waypoints, "speed_rad_s": speed }),
            });
        }
        self.publish_if_changed(&mut out, tick, topics::SONAR.into(), sonar);
        self.publish_if_changed(&mut out, tick, topics::GRIPPER.into(), gripper);
        self.publish_if_changed(&mut out, tick, topics::TOMATOES.into(), world_tomatoes);

        if tick % self.scenario.sim.lidar_period_ticks == 0 {
            if let Some(scan) = &self.last_scan {
                let payload = serde_json::to_value(scan).expect("scan serializes");
                self.publish_if_changed(&mut out, tick, topics::LIDAR.into(), payload);
            }
        }
        if tick % self.scenario.sim.camera_period_ticks == 0 {
            let ids: Vec<u32> = self.world.greenhouse.cameras.iter().map(|c| c.camera_id).collect();
            for id in ids {
                let frame = render_snapshot(&self.world, id).expect("camera exists");
                let detections = camera_detections_with_sigma(
                    &self.world.greenhouse,
                    id,
                    derive_seed(self.seed, &[SALT_CAMERA, tick, u64::from(id)]),
                    self.scenario.sim.pixel_noise_px,
                )
                .expect("camera exists");
                self.publish_if_changed(
                    &mut out,
                    tick,
                    topics::camera_frame(id),
                    serde_json::to_value(frame).expect("frame serializes"),
                );
                self.publish_if_changed(
                    &mut out,
                    tick,
                    topics::camera_detections(id),
                    json!({ "camera_id": id, "detections": detections }),
                );
            }
        }
        for ev in events {
            out.push(TelemetryEvent {
                tick,
                topic: topics::MISSION_EVENTS.into(),
                payload: serde_json::to_value(ev).expect("event serializes"),
            });
        }
        out
    }
}

/// Arm joint index by name, or by its 0-based number.
pub fn parse_joint(name: &str) -> Option<usize> {
    joint_index(name).or_else(|| name.parse::<usize>().ok().filter(|&i| i < JOINT_COUNT))
}

/// Drives a mission to completion or fault, resuming at every pod after
/// `dwell_ticks`. Returns the mission events in order.
pub fn run_mission(
    engine: &mut Engine,
    markers: Vec<u32>,
    dwell_ticks: u64,
    max_ticks: u64,
) -> Vec<MissionEvent> {
    let mut log = Vec::new();
    let mut inputs = vec![EngineInput::Command(ActuationCommand::new(
        CommandKind::Mission(MissionCommand::Start { markers }),
        "mission",
        "start",
    ))];
    let mut stopped_for = 0;
    for n in 0..max_ticks {
        let out = engine.tick(std::mem::take(&mut inputs));
        for ev in out.telemetry.iter().filter(|e| e.topic == topics::MISSION_EVENTS) {
            log.push(serde_json::from_value(ev.payload.clone()).expect("mission event"));
        }
        match engine.world().mission.mode {
            MissionMode::StoppedAtPod(_) => {
                stopped_for += 1;
                if stopped_for > dwell_ticks {
                    stopped_for = 0;
                    inputs.push(EngineInput::Command(ActuationCommand::new(
                        CommandKind::Mission(MissionCommand::Resume),
                        "mission",
                        format!("resume-{n}"),
                    )));
                }
            }
            MissionMode::FollowingWall => {}
            MissionMode::Idle | MissionMode::Fault(_) => break,
        }
    }
    log
}

#[cfg(test)]
mod tests;
