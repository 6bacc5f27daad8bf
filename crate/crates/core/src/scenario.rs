//! Scenario documents: JSON world description, validation and world building.

use crate::engine::{EngineConfig, SimClock};
use crate::geometry::{Pose2, Rect, Segment};
use crate::navigation::{MissionState, WallFollowConfig};
use crate::rover::{RoverConfig, RoverState};
use crate::world::{
    default_cameras, footprint_walls, CameraSpec, Greenhouse, Plant, Pod, PodRow, Side, Tomato,
    TomatoState, WorldState, DEFAULT_DETACH_THRESHOLD_N, MAX_PLUCKABLE_TOMATOES,
};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};
use std::f64::consts::PI;
use std::path::Path;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("missing schema_version field")]
    MissingSchemaVersion,
    #[error("unsupported schema_version {0}")]
    UnsupportedSchema(u64),
    #[error("invalid scenario: {invariant}: {detail}")]
    Validation {
        invariant: &'static str,
        detail: String,
    },
    #[error("cannot read scenario file: {0}")]
    Io(#[from] std::io::Error),
}

impl ScenarioError {
    /// Machine-readable invariant name for validation failures.
    pub fn invariant(&self) -> Option<&'static str> {
        match self {
            ScenarioError::Validation { invariant, .. } => Some(invariant),
            _ => None,
        }
    }
}

fn invalid(invariant: &'static str, detail: impl Into<String>) -> ScenarioError {
    ScenarioError::Validation {
        invariant,
        detail: detail.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GreenhouseSpec {
    pub width_m: f64,
    pub length_m: f64,
    /// Omitted: four corner cameras.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cameras: Option<Vec<CameraSpec>>,
    /// Omitted: the rectangular footprint boundary.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub walls: Option<Vec<Segment>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    /// Lifts the pluckable tomato cap.
    #[serde(default)]
    pub allow_extra_pluckable: bool,
    pub greenhouse: GreenhouseSpec,
    #[serde(default)]
    pub rows: Vec<PodRow>,
    #[serde(default)]
    pub rover: RoverConfig,
    #[serde(default)]
    pub navigation: WallFollowConfig,
    #[serde(default)]
    pub sim: EngineConfig,
}

/// Parses and validates a scenario document.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    let version = value
        .get("schema_version")
        .ok_or(ScenarioError::MissingSchemaVersion)?;
    let version = version
        .as_u64()
        .ok_or_else(|| ScenarioError::Parse("schema_version must be an integer".into()))?;
    if version != u64::from(SCHEMA_VERSION) {
        return Err(ScenarioError::UnsupportedSchema(version));
    }
    let scenario: Scenario =
        serde_json::from_value(value).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    scenario.validate()?;
    Ok(scenario)
}

/// Parses, validates and builds the initial world.
pub fn load_scenario(text: &str) -> Result<(Scenario, WorldState), ScenarioError> {
    let scenario = parse_scenario(text)?;
    let world = scenario.build_world()?;
    Ok((scenario, world))
}

pub fn load_scenario_file(path: impl AsRef<Path>) -> Result<(Scenario, WorldState), ScenarioError> {
    load_scenario(&std::fs::read_to_string(path)?)
}

fn finite_positive(name: &'static str, v: f64) -> Result<(), ScenarioError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid("positive_parameter", format!("{name} must be finite and > 0, got {v}")))
    }
}

/// Checks that every endpoint is shared by exactly two segments.
fn check_closed(walls: &[Segment]) -> Result<(), ScenarioError> {
    if walls.len() < 3 {
        return Err(invalid("closed_walls", "fewer than three wall segments"));
    }
    let mut counts: BTreeMap<(u64, u64), usize> = BTreeMap::new();
    for w in walls {
        if w.a == w.b {
            return Err(invalid("closed_walls", "zero-length wall segment"));
        }
        for p in [w.a, w.b] {
            *counts.entry((p[0].to_bits(), p[1].to_bits())).or_default() += 1;
        }
    }
    match counts.iter().find(|(_, &n)| n != 2) {
        None => Ok(()),
        Some(((x, y), n)) => Err(invalid(
            "closed_walls",
            format!(
                "endpoint ({}, {}) shared by {n} segments",
                f64::from_bits(*x),
                f64::from_bits(*y)
            ),
        )),
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let gh = &self.greenhouse;
        finite_positive("greenhouse.width_m", gh.width_m)?;
        finite_positive("greenhouse.length_m", gh.length_m)?;
        let inside = Rect {
            min: [0.0, 0.0],
            max: [gh.length_m, gh.width_m],
        };
        let strictly_inside =
            |p: [f64; 2]| p[0] > inside.min[0] && p[0] < inside.max[0] && p[1] > inside.min[1] && p[1] < inside.max[1];

        if let Some(walls) = &gh.walls {
            check_closed(walls)?;
        }

        if let Some(cams) = &gh.cameras {
            let mut ids = HashSet::new();
            for c in cams {
                if !(1..=4).contains(&c.camera_id) || !ids.insert(c.camera_id) {
                    return Err(invalid("camera_id", format!("camera id {} must be unique in 1..=4", c.camera_id)));
                }
                if !(c.horizontal_fov_rad > 0.0 && c.horizontal_fov_rad < PI) {
                    return Err(invalid("camera_fov", format!("camera {} fov out of (0, pi)", c.camera_id)));
                }
                finite_positive("camera.max_range_m", c.max_range_m)?;
                finite_positive("camera.focal_px", c.intrinsics.focal_px)?;
                if c.intrinsics.image_size_px.contains(&0) {
                    return Err(invalid("camera_intrinsics", "image size must be non-zero"));
                }
            }
        }

        let mut pod_ids = HashSet::new();
        let mut marker_ids = HashSet::new();
        let mut tomato_ids = HashSet::new();
        let mut row_ids = HashSet::new();
        let mut pluckable = 0usize;
        for row in &self.rows {
            if !row_ids.insert(row.row_id) {
                return Err(invalid("unique_row_id", format!("row id {} repeated", row.row_id)));
            }
            for pair in row.pods.windows(2) {
                if !(pair[0].position[0] < pair[1].position[0]) {
                    return Err(invalid(
                        "row_order",
                        format!("row {}: pods must be ordered by increasing x", row.row_id),
                    ));
                }
            }
            for pod in &row.pods {
                if !pod_ids.insert(pod.pod_id) {
                    return Err(invalid("unique_pod_id", format!("pod id {} repeated", pod.pod_id)));
                }
                if !marker_ids.insert(pod.marker_id) {
                    return Err(invalid("unique_marker_id", format!("marker id {} repeated", pod.marker_id)));
                }
                finite_positive("pod.size_m", pod.size_m[0])?;
                finite_positive("pod.size_m", pod.size_m[1])?;
                finite_positive("pod.height_m", pod.height_m)?;
                let fp = pod.footprint();
                if !(strictly_inside(fp.min) && strictly_inside(fp.max)) {
                    return Err(invalid(
                        "pod_inside_footprint",
                        format!("pod {} is not strictly inside the greenhouse", pod.pod_id),
                    ));
                }
                finite_positive("plant.height_m", pod.plant.height_m)?;
                finite_positive("plant.radius_m", pod.plant.radius_m)?;
                for t in &pod.plant.tomatoes {
                    if !tomato_ids.insert(t.tomato_id) {
                        return Err(invalid("unique_tomato_id", format!("tomato id {} repeated", t.tomato_id)));
                    }
                    if !t.center.iter().all(|c| c.is_finite()) {
                        return Err(invalid("finite_tomato_center", format!("tomato {}", t.tomato_id)));
                    }
                    finite_positive("tomato.radius_m", t.radius_m)?;
                    finite_positive("tomato.detach_threshold_n", t.detach_threshold_n)?;
                    if !t.pluckable && t.state != TomatoState::Attached {
                        return Err(invalid(
                            "static_tomato_attached",
                            format!("static tomato {} must stay attached", t.tomato_id),
                        ));
                    }
                    if t.state == TomatoState::Detached {
                        return Err(invalid(
                            "initial_tomato_state",
                            format!("tomato {} cannot start detached", t.tomato_id),
                        ));
                    }
                    pluckable += usize::from(t.pluckable);
                }
            }
        }
        if pluckable > MAX_PLUCKABLE_TOMATOES && !self.allow_extra_pluckable {
            return Err(invalid(
                "pluckable_limit",
                format!(
                    "{pluckable} pluckable tomatoes exceed the limit of {MAX_PLUCKABLE_TOMATOES} (set allow_extra_pluckable to override)"
                ),
            ));
        }

        self.validate_rover(&strictly_inside)?;
        self.navigation
            .validate(&self.rover.lidar)
            .map_err(|d| invalid("navigation", d))?;
        finite_positive("sim.dt_s", self.sim.dt_s)?;
        if self.sim.lidar_period_ticks == 0 || self.sim.camera_period_ticks == 0 {
            return Err(invalid("positive_parameter", "publish periods must be >= 1 tick"));
        }
        Ok(())
    }

    fn validate_rover(&self, strictly_inside: &dyn Fn([f64; 2]) -> bool) -> Result<(), ScenarioError> {
        let r = &self.rover;
        let p = r.start_pose;
        if !(p.x.is_finite() && p.y.is_finite() && p.theta.is_finite()) || !strictly_inside([p.x, p.y]) {
            return Err(invalid("rover_inside_footprint", "start pose must lie inside the greenhouse"));
        }
        finite_positive("rover.base.track_width_m", r.base.track_width_m)?;
        finite_positive("rover.base.wheel_speed_limit_m_s", r.base.wheel_speed_limit_m_s)?;
        if !(r.base.slip_coefficient >= 0.0 && r.base.slip_coefficient < 1.0) {
            return Err(invalid("slip_range", "slip_coefficient must lie in [0, 1)"));
        }
        if !(r.base.filter_alpha > 0.0 && r.base.filter_alpha <= 1.0) {
            return Err(invalid("filter_alpha", "filter_alpha must lie in (0, 1]"));
        }
        if !(r.base.odometry_noise_fraction >= 0.0 && r.base.odometry_noise_fraction.is_finite()) {
            return Err(invalid("odometry_noise", "noise fraction must be finite and >= 0"));
        }
        if !(r.base.wall_heading_gain >= 0.0 && r.base.wall_heading_gain <= 1.0) {
            return Err(invalid("wall_heading_gain", "wall_heading_gain must lie in [0, 1]"));
        }
        let arm = &r.arm;
        if let Some(j) = arm.joint_within_limits(&arm.initial_q) {
            return Err(invalid("initial_q_limits", format!("initial joint {j} outside its limits")));
        }
        for v in arm.velocity_limits_rad_s {
            finite_positive("rover.arm.velocity_limits_rad_s", v)?;
        }
        finite_positive("rover.arm.execution_speed_rad_s", arm.execution_speed_rad_s)?;
        finite_positive("rover.arm.plan_step_rad", arm.plan_step_rad)?;
        finite_positive("rover.arm.max_reach_m", arm.max_reach_m)?;
        finite_positive("rover.gripper.max_aperture_m", r.gripper.max_aperture_m)?;
        finite_positive("rover.gripper.grasp_radius_m", r.gripper.grasp_radius_m)?;
        finite_positive("rover.lidar.fov_rad", r.lidar.fov_rad)?;
        finite_positive("rover.lidar.resolution_rad", r.lidar.resolution_rad)?;
        finite_positive("rover.lidar.max_range_m", r.lidar.max_range_m)?;
        if r.lidar.fov_rad > 2.0 * PI {
            return Err(invalid("lidar_fov", "lidar fov must not exceed a full turn"));
        }
        finite_positive("rover.sonar.max_range_m", r.sonar.max_range_m)?;
        if !(r.sonar.min_range_m > 0.0 && r.sonar.min_range_m < r.sonar.max_range_m) {
            return Err(invalid("sonar_range", "sonar min_range_m must lie in (0, max_range_m)"));
        }
        Ok(())
    }

    pub fn cameras(&self) -> Vec<CameraSpec> {
        self.greenhouse
            .cameras
            .clone()
            .unwrap_or_else(|| default_cameras(self.greenhouse.length_m, self.greenhouse.width_m))
    }

    pub fn walls(&self) -> Vec<Segment> {
        self.greenhouse
            .walls
            .clone()
            .unwrap_or_else(|| footprint_walls(self.greenhouse.length_m, self.greenhouse.width_m))
    }

    /// Validates and builds the initial world.
    pub fn build_world(&self) -> Result<WorldState, ScenarioError> {
        self.validate()?;
        let greenhouse = Greenhouse::new(
            self.greenhouse.width_m,
            self.greenhouse.length_m,
            self.rows.clone(),
            self.cameras(),
            self.walls(),
        );
        let mut rover = RoverState::new(self.rover.clone());
        rover.sonar = crate::rover::scan_sonar(&greenhouse, &rover.base.pose, &rover.config.sonar);
        Ok(WorldState {
            greenhouse,
            rover,
            mission: MissionState::default(),
            clock: SimClock::new(self.sim.dt_s),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// A scenario with no rows: walls, cameras and a rover near the origin.
    pub fn empty(length_m: f64, width_m: f64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            name: "empty".into(),
            allow_extra_pluckable: false,
            greenhouse: GreenhouseSpec {
                width_m,
                length_m,
                cameras: None,
                walls: None,
            },
            rows: Vec::new(),
            rover: RoverConfig {
                start_pose: Pose2::new(length_m.min(1.0) / 2.0, width_m.min(1.2) / 2.0, 0.0),
                ..RoverConfig::default()
            },
            navigation: WallFollowConfig::default(),
            sim: EngineConfig::default(),
        }
    }

    /// Two rows of three pods, twelve tomatoes, five of them pluckable.
    /// Row 1 is serviced along the y = 0 wall, row 2 along the y = width wall.
    pub fn default_greenhouse() -> Self {
        let length = 12.0;
        let width = 4.0;
        let pod_y = [1.3, width - 1.3];
        let sides = [Side::Right, Side::Left];
        let xs = [3.0, 6.0, 9.0];
        let mut pluckable_left = MAX_PLUCKABLE_TOMATOES;
        let mut rows = Vec::new();
        for (r, (&y, &side)) in pod_y.iter().zip(sides.iter()).enumerate() {
            let row_id = r as u32 + 1;
            // Tomatoes hang on the aisle side of each plant.
            let toward_aisle = if side == Side::Right { -1.0 } else { 1.0 };
            let pods = xs
                .iter()
                .enumerate()
                .map(|(k, &x)| {
                    let pod_id = row_id * 10 + k as u32 + 1;
                    let tomatoes = (0..2)
                        .map(|j| {
                            let pluckable = j == 0 && pluckable_left > 0;
                            if pluckable {
                                pluckable_left -= 1;
                            }
                            Tomato {
                                tomato_id: pod_id * 10 + j as u32 + 1,
                                center: [
                                    x + if j == 0 { -0.06 } else { 0.07 },
                                    y + toward_aisle * 0.14,
                                    0.4 + if j == 0 { 0.45 } else { 0.6 },
                                ],
                                radius_m: 0.03,
                                pluckable,
                                detach_threshold_n: DEFAULT_DETACH_THRESHOLD_N,
                                state: TomatoState::Attached,
                            }
                        })
                        .collect();
                    Pod {
                        pod_id,
                        marker_id: row_id * 100 + k as u32 + 1,
                        position: [x, y],
                        size_m: [0.4, 0.4],
                        height_m: 0.4,
                        plant: Plant {
                            base_position: [x, y, 0.4],
                            height_m: 0.8,
                            radius_m: 0.15,
                            tomatoes,
                        },
                    }
                })
                .collect();
            rows.push(PodRow {
                row_id,
                wall_side: side,
                pods,
            });
        }
        Self {
            schema_version: SCHEMA_VERSION,
            name: "default-greenhouse".into(),
            allow_extra_pluckable: false,
            greenhouse: GreenhouseSpec {
                width_m: width,
                length_m: length,
                cameras: None,
                walls: None,
            },
            rows,
            rover: RoverConfig::default(),
            navigation: WallFollowConfig::default(),
            sim: EngineConfig::default(),
        }
    }

    /// Straight empty corridor for wall-following experiments along y = 0.
    pub fn corridor(length_m: f64, width_m: f64, lateral_m: f64) -> Self {
        let mut s = Self::empty(length_m, width_m);
        s.name = "corridor".into();
        s.rover.start_pose = Pose2::new(1.0, lateral_m, 0.0);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_scenario_counts() {
        let world = Scenario::default_greenhouse().build_world().unwrap();
        assert_eq!(world.greenhouse.pods().count(), 6);
        assert_eq!(world.greenhouse.pluckable_count(), 5);
        assert_eq!(world.greenhouse.cameras.len(), 4);
    }

    #[test]
    fn zero_rows_is_valid() {
        let text = r#"{"schema_version": 1, "greenhouse": {"width_m": 5, "length_m": 5}}"#;
        let (_, world) = load_scenario(text).unwrap();
        assert_eq!(world.greenhouse.pods().count(), 0);
    }

    #[test]
    fn sixth_pluckable_needs_override() {
        let mut s = Scenario::default_greenhouse();
        s.rows[1].pods[2].plant.tomatoes[0].pluckable = true;
        let err = s.validate().unwrap_err();
        assert_eq!(err.invariant(), Some("pluckable_limit"));
        s.allow_extra_pluckable = true;
        assert!(s.validate().is_ok());
    }

    #[test]
    fn schema_version_is_required() {
        let err = parse_scenario(r#"{"greenhouse": {"width_m": 5, "length_m": 5}}"#).unwrap_err();
        assert!(matches!(err, ScenarioError::MissingSchemaVersion));
        let err = parse_scenario(r#"{"schema_version": 7, "greenhouse": {"width_m": 5, "length_m": 5}}"#)
            .unwrap_err();
        assert!(matches!(err, ScenarioError::UnsupportedSchema(7)));
        assert!(matches!(parse_scenario("{not json"), Err(ScenarioError::Parse(_))));
    }

    #[test]
    fn duplicate_marker_rejected() {
        let mut s = Scenario::default_greenhouse();
        s.rows[1].pods[0].marker_id = s.rows[0].pods[0].marker_id;
        assert_eq!(s.validate().unwrap_err().invariant(), Some("unique_marker_id"));
    }

    #[test]
    fn pod_outside_rejected() {
        let mut s = Scenario::default_greenhouse();
        s.rows[0].pods[2].position[0] = 11.9;
        assert_eq!(s.validate().unwrap_err().invariant(), Some("pod_inside_footprint"));
    }

    #[test]
    fn unordered_row_rejected() {
        let mut s = Scenario::default_greenhouse();
        s.rows[0].pods.swap(0, 1);
        assert_eq!(s.validate().unwrap_err().invariant(), Some("row_order"));
    }

    #[test]
    fn open_walls_rejected() {
        let mut s = Scenario::default_greenhouse();
        let mut walls = footprint_walls(12.0, 4.0);
        walls.pop();
        s.greenhouse.walls = Some(walls);
        assert_eq!(s.validate().unwrap_err().invariant(), Some("closed_walls"));
    }

    #[test]
    fn zero_threshold_rejected() {
        let mut s = Scenario::default_greenhouse();
        s.rows[0].pods[0].plant.tomatoes[0].detach_threshold_n = 0.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn unknown_fields_rejected() {
        let text = r#"{"schema_version": 1, "greenhouse": {"width_m": 5, "length_m": 5}, "bogus": 1}"#;
        assert!(matches!(parse_scenario(text), Err(ScenarioError::Parse(_))));
    }

    #[test]
    fn round_trip_is_identity() {
        let text = Scenario::default_greenhouse().to_json();
        let (s1, w1) = load_scenario(&text).unwrap();
        let (s2, w2) = load_scenario(&s1.to_json()).unwrap();
        assert_eq!(s1, s2);
        assert_eq!(w1, w2);
        assert_eq!(s1.to_json(), s2.to_json());
    }

    #[test]
    fn loading_is_deterministic() {
        let text = Scenario::default_greenhouse().to_json();
        assert_eq!(load_scenario(&text).unwrap().1, load_scenario(&text).unwrap().1);
    }
}
