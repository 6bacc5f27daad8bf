//! Reference implementations written directly from the definitions, without
//! sharing code with the production paths they check.

#![allow(dead_code)]

use greensim_core::geometry::{Pose2, Segment};
use greensim_core::rover::{DhRow, JOINT_COUNT};
use greensim_core::world::{CameraSpec, Greenhouse, Plant, Pod, PodRow, Side, Tomato, TomatoState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type M4 = [[f64; 4]; 4];

pub fn identity() -> M4 {
    let mut m = [[0.0; 4]; 4];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    m
}

pub fn mul(a: &M4, b: &M4) -> M4 {
    let mut m = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            m[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    m
}

fn rot_z(t: f64) -> M4 {
    let mut m = identity();
    m[0][0] = t.cos();
    m[0][1] = -t.sin();
    m[1][0] = t.sin();
    m[1][1] = t.cos();
    m
}

fn rot_x(t: f64) -> M4 {
    let mut m = identity();
    m[1][1] = t.cos();
    m[1][2] = -t.sin();
    m[2][1] = t.sin();
    m[2][2] = t.cos();
    m
}

fn trans(x: f64, y: f64, z: f64) -> M4 {
    let mut m = identity();
    m[0][3] = x;
    m[1][3] = y;
    m[2][3] = z;
    m
}

/// Frames 0..=6 from elementary factors Rz(theta) Tz(d) Tx(a) Rx(alpha).
pub fn fk_frames(q: &[f64; JOINT_COUNT], dh: &[DhRow; JOINT_COUNT]) -> Vec<M4> {
    let mut frames = vec![identity()];
    for i in 0..JOINT_COUNT {
        let r = &dh[i];
        let link = mul(
            &mul(&rot_z(q[i] + r.theta_offset), &trans(0.0, 0.0, r.d)),
            &mul(&trans(r.a, 0.0, 0.0), &rot_x(r.alpha)),
        );
        let next = mul(frames.last().unwrap(), &link);
        frames.push(next);
    }
    frames
}

pub fn fk_position(q: &[f64; JOINT_COUNT], dh: &[DhRow; JOINT_COUNT]) -> [f64; 3] {
    let m = fk_frames(q, dh)[JOINT_COUNT];
    [m[0][3], m[1][3], m[2][3]]
}

/// Point at `tool` along the flange z axis, in the arm base frame.
pub fn fk_tool_point(q: &[f64; JOINT_COUNT], dh: &[DhRow; JOINT_COUNT], tool: f64) -> [f64; 3] {
    let m = mul(&fk_frames(q, dh)[JOINT_COUNT], &trans(0.0, 0.0, tool));
    [m[0][3], m[1][3], m[2][3]]
}

/// Nearest forward hit of a ray over every segment, by Cramer's rule on
/// origin + t * dir = a + u * (b - a).
pub fn ray_cast_all(origin: [f64; 2], heading: f64, segments: &[Segment], max_range: f64) -> f64 {
    let d = [heading.cos(), heading.sin()];
    let mut best = max_range;
    for s in segments {
        let e = [s.b[0] - s.a[0], s.b[1] - s.a[1]];
        // | d0  -e0 | |t|   |a0 - o0|
        // | d1  -e1 | |u| = |a1 - o1|
        let det = d[0] * (-e[1]) - (-e[0]) * d[1];
        if det == 0.0 {
            continue;
        }
        let r = [s.a[0] - origin[0], s.a[1] - origin[1]];
        let t = (r[0] * (-e[1]) - (-e[0]) * r[1]) / det;
        let u = (d[0] * r[1] - d[1] * r[0]) / det;
        if t > 0.0 && (-1e-12..=1.0 + 1e-12).contains(&u) && t < best {
            best = t;
        }
    }
    best
}

pub fn lidar_oracle(
    segments: &[Segment],
    pose: &Pose2,
    angle_min: f64,
    increment: f64,
    beams: usize,
    max_range: f64,
) -> Vec<f64> {
    (0..beams)
        .map(|i| {
            let a = angle_min + i as f64 * increment;
            ray_cast_all([pose.x, pose.y], pose.theta + a, segments, max_range)
        })
        .collect()
}

/// Camera-frame coordinates via explicit yaw then pitch rotations.
pub fn to_camera_frame(cam: &CameraSpec, p: [f64; 3]) -> [f64; 3] {
    let rel = [
        p[0] - cam.position[0],
        p[1] - cam.position[1],
        p[2] - cam.position[2],
    ];
    // Undo yaw about world z.
    let (sy, cy) = cam.yaw_rad.sin_cos();
    let a = [cy * rel[0] + sy * rel[1], -sy * rel[0] + cy * rel[1], rel[2]];
    // Undo the downward pitch about the yawed y axis.
    let (sp, cp) = cam.pitch_rad.sin_cos();
    let fwd = cp * a[0] - sp * a[2];
    let up = sp * a[0] + cp * a[2];
    let left = a[1];
    [-left, -up, fwd]
}

/// Ids of points inside the frustum, using angular bounds.
pub fn frustum_oracle(cam: &CameraSpec, points: &[(u32, [f64; 3])]) -> Vec<u32> {
    let [w, h] = cam.intrinsics.image_size_px;
    let half_h = cam.horizontal_fov_rad / 2.0;
    let half_v = ((half_h).tan() * f64::from(h) / f64::from(w)).atan();
    let mut ids: Vec<u32> = points
        .iter()
        .filter(|(_, p)| {
            let c = to_camera_frame(cam, *p);
            let dist = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
            c[2] > 0.0
                && dist <= cam.max_range_m
                && c[0].abs().atan2(c[2]) <= half_h
                && c[1].abs().atan2(c[2]) <= half_v
        })
        .map(|(id, _)| *id)
        .collect();
    ids.sort_unstable();
    ids
}

/// A rectangular greenhouse with randomly sized and placed pods.
pub fn random_greenhouse(rng: &mut ChaCha8Rng) -> Greenhouse {
    let length = rng.random_range(4.0..25.0);
    let width = rng.random_range(3.0..12.0);
    let n = rng.random_range(0..12);
    let mut pods = Vec::new();
    for k in 0..n {
        let size = [rng.random_range(0.1..1.5), rng.random_range(0.1..1.5)];
        let x = rng.random_range(size[0]..length - size[0]);
        let y = rng.random_range(size[1]..width - size[1]);
        pods.push(Pod {
            pod_id: k,
            marker_id: 100 + k,
            position: [x, y],
            size_m: size,
            height_m: 0.4,
            plant: Plant {
                base_position: [x, y, 0.4],
                height_m: 0.8,
                radius_m: 0.15,
                tomatoes: vec![],
            },
        });
    }
    pods.sort_by(|a, b| a.position[0].total_cmp(&b.position[0]));
    let walls = greensim_core::world::footprint_walls(length, width);
    Greenhouse::new(
        width,
        length,
        vec![PodRow {
            row_id: 1,
            wall_side: Side::Right,
            pods,
        }],
        greensim_core::world::default_cameras(length, width),
        walls,
    )
}

/// A pose inside the footprint and outside every pod box.
pub fn random_free_pose(rng: &mut ChaCha8Rng, gh: &Greenhouse) -> Pose2 {
    loop {
        let p = [
            rng.random_range(0.05..gh.length_m - 0.05),
            rng.random_range(0.05..gh.width_m - 0.05),
        ];
        if gh.pods().all(|pod| !pod.footprint().contains(p)) {
            return Pose2::new(p[0], p[1], rng.random_range(-std::f64::consts::PI..std::f64::consts::PI));
        }
    }
}

pub fn random_tomatoes(rng: &mut ChaCha8Rng, n: usize, extent: [f64; 3]) -> Vec<Tomato> {
    (0..n)
        .map(|i| Tomato {
            tomato_id: i as u32 + 1,
            center: [
                rng.random_range(-2.0..extent[0] + 2.0),
                rng.random_range(-2.0..extent[1] + 2.0),
                rng.random_range(0.0..extent[2]),
            ],
            radius_m: 0.03,
            pluckable: false,
            detach_threshold_n: 5.0,
            state: TomatoState::Attached,
        })
        .collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
