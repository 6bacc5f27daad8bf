//! Greenhouse scene: pods, plants, tomatoes, pod markers, cameras, and the
//! tomato detachment rule.

mod camera;

pub use camera::{
    camera_detections, camera_detections_with_sigma, render_snapshot, CameraFrame, Detection,
    FrameColor, FramePrimitive, DEFAULT_PIXEL_NOISE_PX,
};

use crate::engine::SimClock;
use crate::geometry::{Rect, Segment};
use crate::navigation::MissionState;
use crate::rover::RoverState;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Pluckable tomatoes allowed in one world unless the scenario overrides it.
pub const MAX_PLUCKABLE_TOMATOES: usize = 5;
pub const DEFAULT_DETACH_THRESHOLD_N: f64 = 5.0;
pub const DEFAULT_CAMERA_COUNT: usize = 4;
/// Beacon line-of-sight detection range for pod markers.
pub const MARKER_DETECTION_RANGE_M: f64 = 1.5;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum WorldError {
    #[error("unknown tomato id {0}")]
    UnknownTomato(u32),
    #[error("unknown camera id {0}")]
    UnknownCamera(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    /// +1 for left, -1 for right: the sign of the side's bearing in the rover frame.
    pub fn bearing_sign(self) -> f64 {
        match self {
            Side::Left => 1.0,
            Side::Right => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TomatoState {
    #[default]
    Attached,
    Detached,
    Collected,
}

impl TomatoState {
    fn is_attached(&self) -> bool {
        *self == TomatoState::Attached
    }

    fn rank(self) -> u8 {
        match self {
            TomatoState::Attached => 0,
            TomatoState::Detached => 1,
            TomatoState::Collected => 2,
        }
    }

    /// Transitions only move forward: Attached, then Detached, then Collected.
    pub fn can_become(self, next: TomatoState) -> bool {
        next.rank() == self.rank() || next.rank() == self.rank() + 1
    }
}

fn default_radius() -> f64 {
    0.03
}

fn default_threshold() -> f64 {
    DEFAULT_DETACH_THRESHOLD_N
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tomato {
    pub tomato_id: u32,
    /// Sphere center in the world frame.
    pub center: [f64; 3],
    #[serde(default = "default_radius")]
    pub radius_m: f64,
    #[serde(default)]
    pub pluckable: bool,
    #[serde(default = "default_threshold")]
    pub detach_threshold_n: f64,
    #[serde(default, skip_serializing_if = "TomatoState::is_attached")]
    pub state: TomatoState,
}

impl Tomato {
    pub fn diameter(&self) -> f64 {
        2.0 * self.radius_m
    }
}

fn default_plant_height() -> f64 {
    0.8
}

fn default_plant_radius() -> f64 {
    0.15
}

/// Plant modeled as a vertical cylinder standing on its pod.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Plant {
    pub base_position: [f64; 3],
    #[serde(default = "default_plant_height")]
    pub height_m: f64,
    #[serde(default = "default_plant_radius")]
    pub radius_m: f64,
    #[serde(default)]
    pub tomatoes: Vec<Tomato>,
}

fn default_pod_size() -> [f64; 2] {
    [0.4, 0.4]
}

fn default_pod_height() -> f64 {
    0.4
}

/// Box-shaped plant container. Its marker is an ideal beacon at `position`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pod {
    pub pod_id: u32,
    pub marker_id: u32,
    pub position: [f64; 2],
    #[serde(default = "default_pod_size")]
    pub size_m: [f64; 2],
    #[serde(default = "default_pod_height")]
    pub height_m: f64,
    pub plant: Plant,
}

impl Pod {
    pub fn footprint(&self) -> Rect {
        Rect::from_center(self.position, self.size_m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PodRow {
    pub row_id: u32,
    /// Wall tracked by the wall follower while servicing this row.
    pub wall_side: Side,
    /// Ordered by increasing x (the row axis).
    #[serde(default)]
    pub pods: Vec<Pod>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Intrinsics {
    pub focal_px: f64,
    pub principal_point_px: [f64; 2],
    pub image_size_px: [u32; 2],
}

/// Fixed surveillance camera. Pitch is positive when tilted down.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraSpec {
    pub camera_id: u32,
    pub position: [f64; 3],
    pub yaw_rad: f64,
    pub pitch_rad: f64,
    pub horizontal_fov_rad: f64,
    pub max_range_m: f64,
    pub intrinsics: Intrinsics,
}

impl CameraSpec {
    /// Orthonormal camera basis in world coordinates: (right, down, forward).
    pub fn basis(&self) -> [[f64; 3]; 3] {
        let (sy, cy) = self.yaw_rad.sin_cos();
        let (sp, cp) = self.pitch_rad.sin_cos();
        let forward = [cp * cy, cp * sy, -sp];
        let right = [sy, -cy, 0.0];
        let down = [
            forward[1] * right[2] - forward[2] * right[1],
            forward[2] * right[0] - forward[0] * right[2],
            forward[0] * right[1] - forward[1] * right[0],
        ];
        [right, down, forward]
    }

    pub fn vertical_half_tan(&self) -> f64 {
        let [w, h] = self.intrinsics.image_size_px;
        (self.horizontal_fov_rad / 2.0).tan() * f64::from(h) / f64::from(w)
    }
}

/// Four ceiling cameras in the greenhouse corners looking at its center.
pub fn default_cameras(length_m: f64, width_m: f64) -> Vec<CameraSpec> {
    let height = 3.0;
    let inset = 0.2;
    let corners = [
        [inset, inset],
        [length_m - inset, inset],
        [length_m - inset, width_m - inset],
        [inset, width_m - inset],
    ];
    let hfov = PI / 2.0;
    let [w, h] = [640u32, 480u32];
    corners
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let dx = length_m / 2.0 - c[0];
            let dy = width_m / 2.0 - c[1];
            CameraSpec {
                camera_id: i as u32 + 1,
                position: [c[0], c[1], height],
                yaw_rad: dy.atan2(dx),
                pitch_rad: height.atan2(dx.hypot(dy)),
                horizontal_fov_rad: hfov,
                max_range_m: 20.0,
                intrinsics: Intrinsics {
                    focal_px: f64::from(w) / 2.0 / (hfov / 2.0).tan(),
                    principal_point_px: [f64::from(w) / 2.0, f64::from(h) / 2.0],
                    image_size_px: [w, h],
                },
            }
        })
        .collect()
}

/// Rectangular boundary walls of a `length_m` x `width_m` footprint.
pub fn footprint_walls(length_m: f64, width_m: f64) -> Vec<Segment> {
    Rect {
        min: [0.0, 0.0],
        max: [length_m, width_m],
    }
    .edges()
    .to_vec()
}

/// Static layout plus tomato states. The x axis runs along the rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Greenhouse {
    pub width_m: f64,
    pub length_m: f64,
    pub rows: Vec<PodRow>,
    pub cameras: Vec<CameraSpec>,
    pub walls: Vec<Segment>,
    obstacles: Vec<Segment>,
}

impl Greenhouse {
    pub fn new(
        width_m: f64,
        length_m: f64,
        rows: Vec<PodRow>,
        cameras: Vec<CameraSpec>,
        walls: Vec<Segment>,
    ) -> Self {
        let mut obstacles = walls.clone();
        for pod in rows.iter().flat_map(|r| r.pods.iter()) {
            obstacles.extend(pod.footprint().edges());
        }
        Self {
            width_m,
            length_m,
            rows,
            cameras,
            walls,
            obstacles,
        }
    }

    pub fn pods(&self) -> impl Iterator<Item = &Pod> {
        self.rows.iter().flat_map(|r| r.pods.iter())
    }

    pub fn tomatoes(&self) -> impl Iterator<Item = &Tomato> {
        self.pods().flat_map(|p| p.plant.tomatoes.iter())
    }

    pub fn tomatoes_mut(&mut self) -> impl Iterator<Item = &mut Tomato> {
        self.rows
            .iter_mut()
            .flat_map(|r| r.pods.iter_mut())
            .flat_map(|p| p.plant.tomatoes.iter_mut())
    }

    pub fn tomato(&self, id: u32) -> Option<&Tomato> {
        self.tomatoes().find(|t| t.tomato_id == id)
    }

    pub fn tomato_mut(&mut self, id: u32) -> Option<&mut Tomato> {
        self.tomatoes_mut().find(|t| t.tomato_id == id)
    }

    pub fn camera(&self, id: u32) -> Option<&CameraSpec> {
        self.cameras.iter().find(|c| c.camera_id == id)
    }

    pub fn pod_by_marker(&self, marker_id: u32) -> Option<&Pod> {
        self.pods().find(|p| p.marker_id == marker_id)
    }

    pub fn row_of_marker(&self, marker_id: u32) -> Option<&PodRow> {
        self.rows
            .iter()
            .find(|r| r.pods.iter().any(|p| p.marker_id == marker_id))
    }

    /// Walls followed by every pod's box edges.
    pub fn obstacle_segments(&self) -> &[Segment] {
        &self.obstacles
    }

    pub fn pluckable_count(&self) -> usize {
        self.tomatoes().filter(|t| t.pluckable).count()
    }
}

/// Result of pulling on a tomato's pedicel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PluckOutcome {
    Detached,
    StillAttached,
    NotPluckable,
    NotGrasped,
    AlreadyDetached,
}

/// Pure detachment rule: instantaneous force against the tomato's threshold.
pub fn pluck_outcome(tomato: &Tomato, grasped: bool, applied_force_n: f64) -> PluckOutcome {
    if !tomato.pluckable {
        PluckOutcome::NotPluckable
    } else if !grasped {
        PluckOutcome::NotGrasped
    } else if tomato.state != TomatoState::Attached {
        PluckOutcome::AlreadyDetached
    } else if applied_force_n >= tomato.detach_threshold_n {
        PluckOutcome::Detached
    } else {
        PluckOutcome::StillAttached
    }
}

/// Complete dynamic scene, stepped by the engine's single writer.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub greenhouse: Greenhouse,
    pub rover: RoverState,
    pub mission: MissionState,
    pub clock: SimClock,
}

impl WorldState {
    /// Applies `applied_force_n` to tomato `tomato_id` through the gripper.
    /// On detachment the tomato is bound to the gripper's fingertip midpoint.
    pub fn apply_pluck(
        &mut self,
        tomato_id: u32,
        applied_force_n: f64,
    ) -> Result<PluckOutcome, WorldError> {
        let grasped = self.rover.gripper.grasped_tomato == Some(tomato_id);
        let fingertip = self.rover.fingertip_world;
        let tomato = self
            .greenhouse
            .tomato_mut(tomato_id)
            .ok_or(WorldError::UnknownTomato(tomato_id))?;
        let outcome = pluck_outcome(tomato, grasped, applied_force_n.max(0.0));
        if outcome == PluckOutcome::Detached {
            tomato.state = TomatoState::Detached;
            tomato.center = fingertip;
        }
        Ok(outcome)
    }

    pub fn collected_count(&self) -> usize {
        self.greenhouse
            .tomatoes()
            .filter(|t| t.state == TomatoState::Collected)
            .count()
    }
}
