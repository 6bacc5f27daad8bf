//! Six-joint arm: Denavit-Hartenberg forward kinematics, mounting on the
//! rover, and joint-space trajectory execution.

use crate::geometry::{Aabb3, Pose2};
use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

pub const JOINT_COUNT: usize = 6;
pub type JointVector = [f64; JOINT_COUNT];

pub const JOINT_NAMES: [&str; JOINT_COUNT] =
    ["base", "shoulder", "elbow", "wrist1", "wrist2", "wrist3"];

pub fn joint_index(name: &str) -> Option<usize> {
    JOINT_NAMES.iter().position(|n| *n == name)
}

/// One row of a standard DH table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DhRow {
    pub a: f64,
    pub alpha: f64,
    pub d: f64,
    #[serde(default)]
    pub theta_offset: f64,
}

/// Published UR5 geometry.
pub const UR5_DH: [DhRow; JOINT_COUNT] = [
    DhRow { a: 0.0, alpha: FRAC_PI_2, d: 0.089159, theta_offset: 0.0 },
    DhRow { a: -0.425, alpha: 0.0, d: 0.0, theta_offset: 0.0 },
    DhRow { a: -0.39225, alpha: 0.0, d: 0.0, theta_offset: 0.0 },
    DhRow { a: 0.0, alpha: FRAC_PI_2, d: 0.10915, theta_offset: 0.0 },
    DhRow { a: 0.0, alpha: -FRAC_PI_2, d: 0.09465, theta_offset: 0.0 },
    DhRow { a: 0.0, alpha: 0.0, d: 0.0823, theta_offset: 0.0 },
];

fn dh_transform(row: &DhRow, q: f64) -> Matrix4<f64> {
    let (st, ct) = (q + row.theta_offset).sin_cos();
    let (sa, ca) = row.alpha.sin_cos();
    Matrix4::new(
        ct, -st * ca, st * sa, row.a * ct,
        st, ct * ca, -ct * sa, row.a * st,
        0.0, sa, ca, row.d,
        0.0, 0.0, 0.0, 1.0,
    )
}

/// Frames 0..=6 of the chain; element `i` is the pose of frame `i` in the
/// arm base frame.
pub fn frame_chain(q: &JointVector, dh: &[DhRow; JOINT_COUNT]) -> [Matrix4<f64>; JOINT_COUNT + 1] {
    let mut frames = [Matrix4::identity(); JOINT_COUNT + 1];
    for i in 0..JOINT_COUNT {
        frames[i + 1] = frames[i] * dh_transform(&dh[i], q[i]);
    }
    frames
}

/// End-effector pose of the flange.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EePose {
    pub position: [f64; 3],
    /// Row-major rotation matrix.
    pub rotation: [[f64; 3]; 3],
}

impl From<&Matrix4<f64>> for EePose {
    fn from(m: &Matrix4<f64>) -> Self {
        Self {
            position: [m[(0, 3)], m[(1, 3)], m[(2, 3)]],
            rotation: [
                [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
                [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
                [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
            ],
        }
    }
}

pub fn forward_kinematics(q: &JointVector, dh: &[DhRow; JOINT_COUNT]) -> EePose {
    EePose::from(&frame_chain(q, dh)[JOINT_COUNT])
}

fn default_dh() -> [DhRow; JOINT_COUNT] {
    UR5_DH
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArmConfig {
    #[serde(default = "default_dh")]
    pub dh: [DhRow; JOINT_COUNT],
    pub joint_limits_rad: [[f64; 2]; JOINT_COUNT],
    pub velocity_limits_rad_s: JointVector,
    pub max_reach_m: f64,
    /// Flange to fingertip midpoint, along the flange z axis.
    pub tool_length_m: f64,
    /// Arm base origin in the rover frame (z up from the floor).
    pub mount_xyz_m: [f64; 3],
    pub mount_yaw_rad: f64,
    pub initial_q: JointVector,
    pub execution_speed_rad_s: f64,
    pub plan_step_rad: f64,
    /// Fingertip bounds in the rover frame.
    pub workspace: Aabb3,
    pub floor_clearance_m: f64,
}

impl Default for ArmConfig {
    fn default() -> Self {
        Self {
            dh: UR5_DH,
            joint_limits_rad: [[-2.0 * PI, 2.0 * PI]; JOINT_COUNT],
            velocity_limits_rad_s: [PI; JOINT_COUNT],
            max_reach_m: 0.850,
            tool_length_m: 0.16,
            mount_xyz_m: [0.1, 0.0, 0.45],
            mount_yaw_rad: PI,
            initial_q: [0.0; JOINT_COUNT],
            execution_speed_rad_s: 30f64.to_radians(),
            plan_step_rad: 1f64.to_radians(),
            workspace: Aabb3 {
                min: [-1.5, -1.5, 0.0],
                max: [1.5, 1.5, 1.8],
            },
            floor_clearance_m: 0.05,
        }
    }
}

impl ArmConfig {
    pub fn mount_transform(&self) -> Matrix4<f64> {
        let (s, c) = self.mount_yaw_rad.sin_cos();
        let [x, y, z] = self.mount_xyz_m;
        Matrix4::new(
            c, -s, 0.0, x,
            s, c, 0.0, y,
            0.0, 0.0, 1.0, z,
            0.0, 0.0, 0.0, 1.0,
        )
    }

    pub fn fingertip_in_base(&self, q: &JointVector) -> [f64; 3] {
        let flange = frame_chain(q, &self.dh)[JOINT_COUNT];
        let p = flange * Vector4::new(0.0, 0.0, self.tool_length_m, 1.0);
        [p.x, p.y, p.z]
    }

    pub fn fingertip_in_rover(&self, q: &JointVector) -> [f64; 3] {
        let p = self.fingertip_in_base(q);
        let r = self.mount_transform() * Vector4::new(p[0], p[1], p[2], 1.0);
        [r.x, r.y, r.z]
    }

    pub fn fingertip_in_world(&self, q: &JointVector, base: &Pose2) -> [f64; 3] {
        let p = self.fingertip_in_rover(q);
        let [x, y] = base.transform_point([p[0], p[1]]);
        [x, y, p[2]]
    }

    /// Upper bound on the shoulder-to-wrist distance for this DH table.
    /// Tight for arms whose shoulder and elbow axes are parallel.
    pub fn wrist_reach_bound(&self) -> f64 {
        let planar = self.dh[1].alpha == 0.0 && self.dh[2].alpha == 0.0;
        let a: f64 = self.dh[1..4].iter().map(|r| r.a.abs()).sum();
        let d: f64 = self.dh[1..4].iter().map(|r| r.d.abs()).sum();
        if planar {
            a.hypot(d)
        } else {
            a + d
        }
    }

    /// Chain length from the wrist (frame 4) to the fingertip midpoint.
    pub fn fingertip_offset_m(&self) -> f64 {
        self.dh[4..]
            .iter()
            .map(|r| r.a.abs() + r.d.abs())
            .sum::<f64>()
            + self.tool_length_m.abs()
    }

    pub fn joint_within_limits(&self, q: &JointVector) -> Option<usize> {
        (0..JOINT_COUNT).find(|&i| {
            let [lo, hi] = self.joint_limits_rad[i];
            !(q[i] >= lo && q[i] <= hi)
        })
    }
}

/// Follows a joint-space polyline, moving along it by at most `speed * dt`
/// (max-norm over joints) each step.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryExecutor {
    pub waypoints: Vec<JointVector>,
    pub next: usize,
    pub speed_rad_s: f64,
}

const WAYPOINT_EPS: f64 = 1e-12;

impl TrajectoryExecutor {
    pub fn new(waypoints: Vec<JointVector>, speed_rad_s: f64) -> Self {
        Self {
            waypoints,
            next: 0,
            speed_rad_s,
        }
    }

    pub fn is_done(&self) -> bool {
        self.next >= self.waypoints.len()
    }

    pub fn remaining(&self) -> &[JointVector] {
        &self.waypoints[self.next.min(self.waypoints.len())..]
    }

    pub fn final_target(&self) -> Option<&JointVector> {
        self.waypoints.last()
    }

    pub fn step(&mut self, q: &JointVector, dt_s: f64) -> JointVector {
        let mut current = *q;
        let mut budget = self.speed_rad_s * dt_s;
        while budget > 0.0 && !self.is_done() {
            let target = self.waypoints[self.next];
            let dist = (0..JOINT_COUNT)
                .map(|i| (target[i] - current[i]).abs())
                .fold(0.0, f64::max);
            if dist <= budget + WAYPOINT_EPS {
                current = target;
                budget -= dist;
                self.next += 1;
            } else {
                let frac = budget / dist;
                for i in 0..JOINT_COUNT {
                    current[i] += (target[i] - current[i]) * frac;
                }
                budget = 0.0;
            }
        }
        current
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArmState {
    pub q: JointVector,
    pub qd: JointVector,
    pub executor: Option<TrajectoryExecutor>,
}

impl ArmState {
    pub fn new(q: JointVector) -> Self {
        Self {
            q,
            qd: [0.0; JOINT_COUNT],
            executor: None,
        }
    }

    pub fn stop(&mut self) {
        self.executor = None;
        self.qd = [0.0; JOINT_COUNT];
    }

    pub fn is_moving(&self) -> bool {
        self.executor.is_some()
    }

    /// Advances the active trajectory by one tick.
    pub fn step(&mut self, dt_s: f64) {
        let Some(exec) = self.executor.as_mut() else {
            self.qd = [0.0; JOINT_COUNT];
            return;
        };
        let next = exec.step(&self.q, dt_s);
        for i in 0..JOINT_COUNT {
            self.qd[i] = (next[i] - self.q[i]) / dt_s;
        }
        self.q = next;
        if exec.is_done() {
            self.executor = None;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_configuration_flange_matches_table_sums() {
        let p = forward_kinematics(&[0.0; 6], &UR5_DH).position;
        // x: a2 + a3; y: -(d4 + d6); z: d1 - d5 (frozen from the table).
        assert!((p[0] - (-0.425 - 0.39225)).abs() < 1e-12);
        assert!((p[1] - (-(0.10915 + 0.0823))).abs() < 1e-12);
        assert!((p[2] - (0.089159 - 0.09465)).abs() < 1e-12);
    }

    #[test]
    fn base_rotation_preserves_height() {
        let q = [0.3, -0.7, 1.1, 0.2, -0.4, 0.9];
        let mut q2 = q;
        q2[0] += PI;
        let a = forward_kinematics(&q, &UR5_DH).position;
        let b = forward_kinematics(&q2, &UR5_DH).position;
        assert!((a[2] - b[2]).abs() < 1e-12);
        assert!((a[0] + b[0]).abs() < 1e-12 && (a[1] + b[1]).abs() < 1e-12);
    }

    #[test]
    fn ur5_wrist_bound_is_within_rated_reach() {
        let cfg = ArmConfig::default();
        assert!(cfg.wrist_reach_bound() <= cfg.max_reach_m);
        assert!((cfg.wrist_reach_bound() - 0.817_25f64.hypot(0.10915)).abs() < 1e-12);
    }

    #[test]
    fn executor_reaches_target_in_expected_ticks() {
        let target = {
            let mut t = [0.0; 6];
            t[2] = 30f64.to_radians();
            t
        };
        let mut arm = ArmState::new([0.0; 6]);
        arm.executor = Some(TrajectoryExecutor::new(vec![target], 30f64.to_radians()));
        let mut ticks = 0;
        while arm.is_moving() {
            arm.step(0.02);
            ticks += 1;
            assert!(ticks <= 60);
        }
        assert_eq!(ticks, 50);
        assert_eq!(arm.q, target);
    }

    #[test]
    fn joint_names_map_to_indices() {
        assert_eq!(joint_index("elbow"), Some(2));
        assert_eq!(joint_index("nope"), None);
    }
}
