//! Geometric pseudo-perception and schematic frames for the fixed cameras.

use super::{CameraSpec, Greenhouse, TomatoState, WorldError, WorldState};
use crate::geometry::{Pose2, Segment};
use crate::rover::ROVER_FOOTPRINT_M;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub const DEFAULT_PIXEL_NOISE_PX: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub tomato_id: u32,
    /// Tomato center in the camera frame (x right, y down, z forward).
    pub camera_point: [f64; 3],
    pub pixel: [f64; 2],
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Tomatoes visible to `camera_id`, with default pixel noise.
pub fn camera_detections(
    world: &WorldState,
    camera_id: u32,
    noise_seed: u64,
) -> Result<Vec<Detection>, WorldError> {
    camera_detections_with_sigma(&world.greenhouse, camera_id, noise_seed, DEFAULT_PIXEL_NOISE_PX)
}

/// Returns every tomato center inside the camera frustum and within range,
/// sorted by tomato id, with Gaussian pixel noise drawn from `noise_seed`.
pub fn camera_detections_with_sigma(
    greenhouse: &Greenhouse,
    camera_id: u32,
    noise_seed: u64,
    sigma_px: f64,
) -> Result<Vec<Detection>, WorldError> {
    let camera = greenhouse
        .camera(camera_id)
        .ok_or(WorldError::UnknownCamera(camera_id))?;
    let [right, down, forward] = camera.basis();
    let tan_h = (camera.horizontal_fov_rad / 2.0).tan();
    let tan_v = camera.vertical_half_tan();
    let range2 = camera.max_range_m * camera.max_range_m;

    let mut visible: Vec<(u32, [f64; 3])> = greenhouse
        .tomatoes()
        .filter_map(|t| {
            let rel = [
                t.center[0] - camera.position[0],
                t.center[1] - camera.position[1],
                t.center[2] - camera.position[2],
            ];
            if dot(rel, rel) > range2 {
                return None;
            }
            let z = dot(rel, forward);
            if z <= 0.0 {
                return None;
            }
            let x = dot(rel, right);
            let y = dot(rel, down);
            (x.abs() <= z * tan_h && y.abs() <= z * tan_v).then_some((t.tomato_id, [x, y, z]))
        })
        .collect();
    visible.sort_by_key(|(id, _)| *id);

    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    let noise = Normal::new(0.0, sigma_px.max(0.0)).expect("finite sigma");
    let f = camera.intrinsics.focal_px;
    let [cx, cy] = camera.intrinsics.principal_point_px;
    Ok(visible
        .into_iter()
        .map(|(tomato_id, p)| {
            let mut pixel = [cx + f * p[0] / p[2], cy + f * p[1] / p[2]];
            if sigma_px > 0.0 {
                pixel[0] += noise.sample(&mut rng);
                pixel[1] += noise.sample(&mut rng);
            }
            Detection {
                tomato_id,
                camera_point: p,
                pixel,
            }
        })
        .collect())
}

/// Palette of the schematic renderer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FrameColor {
    #[serde(rename = "#f0f0e8")]
    Background,
    #[serde(rename = "#555555")]
    Wall,
    #[serde(rename = "#8b5a2b")]
    Pod,
    #[serde(rename = "#3a7d2c")]
    Plant,
    #[serde(rename = "#d62728")]
    TomatoPluckable,
    #[serde(rename = "#8c1c13")]
    TomatoStatic,
    #[serde(rename = "#ff7f0e")]
    TomatoDetached,
    #[serde(rename = "#2ca02c")]
    TomatoCollected,
    #[serde(rename = "#1f77b4")]
    Rover,
}

/// Typed 2D primitive in world coordinates (top-down).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum FramePrimitive {
    Rect {
        label: String,
        id: u32,
        min: [f64; 2],
        max: [f64; 2],
        color: FrameColor,
    },
    Circle {
        label: String,
        id: u32,
        center: [f64; 2],
        radius: f64,
        color: FrameColor,
    },
    Rover {
        pose: Pose2,
        size: [f64; 2],
        color: FrameColor,
    },
}

/// Vector scene description for one camera.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraFrame {
    pub camera_id: u32,
    pub background: FrameColor,
    pub walls: Vec<Segment>,
    pub wall_color: FrameColor,
    pub primitives: Vec<FramePrimitive>,
}

impl CameraFrame {
    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("frame serializes")
    }
}

fn in_view(camera: &CameraSpec, p: [f64; 2], slack: f64) -> bool {
    let dx = p[0] - camera.position[0];
    let dy = p[1] - camera.position[1];
    let dist = dx.hypot(dy);
    if dist > camera.max_range_m + slack {
        return false;
    }
    if dist <= slack {
        return true;
    }
    let off = crate::geometry::normalize_angle(dy.atan2(dx) - camera.yaw_rad).abs();
    off <= camera.horizontal_fov_rad / 2.0 + (slack / dist).asin().min(std::f64::consts::FRAC_PI_2)
}

fn tomato_color(pluckable: bool, state: TomatoState) -> FrameColor {
    match state {
        TomatoState::Attached if pluckable => FrameColor::TomatoPluckable,
        TomatoState::Attached => FrameColor::TomatoStatic,
        TomatoState::Detached => FrameColor::TomatoDetached,
        TomatoState::Collected => FrameColor::TomatoCollected,
    }
}

/// Top-down schematic of what falls inside the camera's ground sector.
pub fn render_snapshot(world: &WorldState, camera_id: u32) -> Result<CameraFrame, WorldError> {
    let gh = &world.greenhouse;
    let camera = gh.camera(camera_id).ok_or(WorldError::UnknownCamera(camera_id))?;
    let mut primitives = Vec::new();
    for pod in gh.pods() {
        let half = pod.size_m[0].hypot(pod.size_m[1]) / 2.0;
        if in_view(camera, pod.position, half) {
            let fp = pod.footprint();
            primitives.push(FramePrimitive::Rect {
                label: "pod".into(),
                id: pod.pod_id,
                min: fp.min,
                max: fp.max,
                color: FrameColor::Pod,
            });
            let base = pod.plant.base_position;
            primitives.push(FramePrimitive::Circle {
                label: "plant".into(),
                id: pod.pod_id,
                center: [base[0], base[1]],
                radius: pod.plant.radius_m,
                color: FrameColor::Plant,
            });
        }
    }
    for t in gh.tomatoes() {
        let c = [t.center[0], t.center[1]];
        if in_view(camera, c, t.radius_m) {
            primitives.push(FramePrimitive::Circle {
                label: "tomato".into(),
                id: t.tomato_id,
                center: c,
                radius: t.radius_m,
                color: tomato_color(t.pluckable, t.state),
            });
        }
    }
    let pose = world.rover.base.pose;
    let rover_half = ROVER_FOOTPRINT_M[0].hypot(ROVER_FOOTPRINT_M[1]) / 2.0;
    if in_view(camera, [pose.x, pose.y], rover_half) {
        primitives.push(FramePrimitive::Rover {
            pose,
            size: ROVER_FOOTPRINT_M,
            color: FrameColor::Rover,
        });
    }
    Ok(CameraFrame {
        camera_id,
        background: FrameColor::Background,
        walls: gh.walls.clone(),
        wall_color: FrameColor::Wall,
        primitives,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Scenario;
    use crate::world::{Intrinsics, Tomato};

    fn test_camera() -> CameraSpec {
        CameraSpec {
            camera_id: 1,
            position: [0.0, 0.0, 1.0],
            yaw_rad: 0.0,
            pitch_rad: 0.0,
            horizontal_fov_rad: std::f64::consts::FRAC_PI_2,
            max_range_m: 10.0,
            intrinsics: Intrinsics {
                focal_px: 320.0,
                principal_point_px: [320.0, 240.0],
                image_size_px: [640, 480],
            },
        }
    }

    fn greenhouse_with(tomatoes: Vec<[f64; 3]>) -> Greenhouse {
        let mut scenario = Scenario::empty(20.0, 20.0);
        scenario.greenhouse.cameras = Some(vec![test_camera()]);
        let mut gh = scenario.build_world().unwrap().greenhouse;
        // Tomatoes are injected directly so they can sit anywhere, including
        // behind the camera, without needing a pod.
        let mut pod = crate::scenario::Scenario::default_greenhouse().rows[0].pods[0].clone();
        pod.plant.tomatoes = tomatoes
            .into_iter()
            .enumerate()
            .map(|(i, c)| Tomato {
                tomato_id: i as u32 + 1,
                center: c,
                radius_m: 0.03,
                pluckable: false,
                detach_threshold_n: 5.0,
                state: TomatoState::Attached,
            })
            .collect();
        gh.rows.push(crate::world::PodRow {
            row_id: 1,
            wall_side: crate::world::Side::Left,
            pods: vec![pod],
        });
        gh
    }

    #[test]
    fn on_axis_tomato_projects_to_principal_point() {
        let gh = greenhouse_with(vec![[2.0, 0.0, 1.0]]);
        let d = camera_detections_with_sigma(&gh, 1, 7, 0.0).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].pixel, [320.0, 240.0]);
        assert!((d[0].camera_point[2] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn tomato_behind_camera_is_excluded() {
        let gh = greenhouse_with(vec![[-2.0, 0.0, 1.0]]);
        assert!(camera_detections_with_sigma(&gh, 1, 7, 0.0).unwrap().is_empty());
    }

    #[test]
    fn noise_is_seeded() {
        let gh = greenhouse_with(vec![[2.0, 0.3, 1.1], [3.0, -0.5, 0.8]]);
        let a = camera_detections_with_sigma(&gh, 1, 42, 2.0).unwrap();
        let b = camera_detections_with_sigma(&gh, 1, 42, 2.0).unwrap();
        let c = camera_detections_with_sigma(&gh, 1, 43, 2.0).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn unknown_camera() {
        let gh = greenhouse_with(vec![]);
        assert_eq!(
            camera_detections_with_sigma(&gh, 9, 0, 0.0),
            Err(WorldError::UnknownCamera(9))
        );
    }

    #[test]
    fn empty_world_renders_background_only() {
        let mut scenario = Scenario::empty(10.0, 10.0);
        // Rover parked in a corner the camera does not look at.
        scenario.rover.start_pose = Pose2::new(0.5, 9.5, 0.0);
        let mut cam = test_camera();
        cam.position = [0.2, 0.2, 3.0];
        cam.horizontal_fov_rad = 0.5;
        scenario.greenhouse.cameras = Some(vec![cam]);
        let world = scenario.build_world().unwrap();
        let frame = render_snapshot(&world, 1).unwrap();
        assert!(frame.primitives.is_empty());
        assert_eq!(frame.background, FrameColor::Background);
    }

    #[test]
    fn render_is_byte_identical_for_same_state() {
        let world = Scenario::default_greenhouse().build_world().unwrap();
        for cam in 1..=4 {
            let a = render_snapshot(&world, cam).unwrap().to_bytes();
            let b = render_snapshot(&world, cam).unwrap().to_bytes();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn detached_tomato_rendered_at_bound_position() {
        let mut world = Scenario::default_greenhouse().build_world().unwrap();
        let id = world.greenhouse.tomatoes().find(|t| t.pluckable).unwrap().tomato_id;
        world.rover.gripper.grasped_tomato = Some(id);
        world.rover.fingertip_world = [6.0, 2.5, 1.0];
        world.apply_pluck(id, 10.0).unwrap();
        let found = (1..=4).any(|cam| {
            render_snapshot(&world, cam).unwrap().primitives.iter().any(|p| {
                matches!(p, FramePrimitive::Circle { label, id: pid, center, color, .. }
                    if label == "tomato" && *pid == id && *center == [6.0, 2.5]
                        && *color == FrameColor::TomatoDetached)
            })
        });
        assert!(found);
    }
}
