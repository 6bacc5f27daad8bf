//! Joint-space straight-line planning with per-waypoint feasibility checks.

use super::arm::{ArmConfig, JointVector, JOINT_COUNT};
use crate::geometry::Aabb3;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum InfeasibleReason {
    JointLimit,
    Workspace,
    Floor,
}

impl InfeasibleReason {
    pub fn code(self) -> &'static str {
        match self {
            InfeasibleReason::JointLimit => "JOINT_LIMIT",
            InfeasibleReason::Workspace => "WORKSPACE",
            InfeasibleReason::Floor => "FLOOR",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("{} at waypoint {waypoint}", reason.code())]
pub struct Infeasible {
    pub reason: InfeasibleReason,
    pub waypoint: usize,
    pub joint: Option<usize>,
}

/// Constraints a planned path must satisfy.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanLimits {
    pub joint_limits_rad: [[f64; 2]; JOINT_COUNT],
    /// Fingertip bounds in the rover frame.
    pub workspace: Aabb3,
    pub floor_clearance_m: f64,
    pub step_rad: f64,
}

impl PlanLimits {
    pub fn from_arm(arm: &ArmConfig) -> Self {
        Self {
            joint_limits_rad: arm.joint_limits_rad,
            workspace: arm.workspace,
            floor_clearance_m: arm.floor_clearance_m,
            step_rad: arm.plan_step_rad,
        }
    }
}

pub type JointTrajectory = Vec<JointVector>;

fn check_waypoint(
    q: &JointVector,
    index: usize,
    limits: &PlanLimits,
    arm: &ArmConfig,
) -> Result<(), Infeasible> {
    let fail = |reason, joint| Infeasible {
        reason,
        waypoint: index,
        joint,
    };
    for (i, (&qi, [lo, hi])) in q.iter().zip(limits.joint_limits_rad).enumerate() {
        if !(qi >= lo && qi <= hi) {
            return Err(fail(InfeasibleReason::JointLimit, Some(i)));
        }
    }
    let tip = arm.fingertip_in_rover(q);
    if !limits.workspace.contains(tip) {
        return Err(fail(InfeasibleReason::Workspace, None));
    }
    if tip[2] < limits.floor_clearance_m {
        return Err(fail(InfeasibleReason::Floor, None));
    }
    Ok(())
}

/// Linearly interpolates from `q_from` to `q_to` so that no joint moves more
/// than `limits.step_rad` between waypoints. The returned list excludes the
/// start and always ends at `q_to`; identical endpoints yield one waypoint.
/// An out-of-limit target is reported before any waypoint is examined.
pub fn plan_joint_motion(
    q_from: &JointVector,
    q_to: &JointVector,
    limits: &PlanLimits,
    arm: &ArmConfig,
) -> Result<JointTrajectory, Infeasible> {
    plan_segment(q_from, q_to, limits, arm, 0)
}

fn plan_segment(
    q_from: &JointVector,
    q_to: &JointVector,
    limits: &PlanLimits,
    arm: &ArmConfig,
    first_index: usize,
) -> Result<JointTrajectory, Infeasible> {
    if let Some(j) = (0..JOINT_COUNT).find(|&i| !q_to[i].is_finite()) {
        return Err(Infeasible {
            reason: InfeasibleReason::JointLimit,
            waypoint: first_index,
            joint: Some(j),
        });
    }
    let steps_hint = |span: f64| ((span / limits.step_rad) - 1e-9).ceil().max(1.0) as usize;
    // The joint box is convex: an in-limit target keeps every waypoint in limits.
    for (i, (&qi, [lo, hi])) in q_to.iter().zip(limits.joint_limits_rad).enumerate() {
        if !(qi >= lo && qi <= hi) {
            let span = (0..JOINT_COUNT)
                .map(|j| (q_to[j] - q_from[j]).abs())
                .fold(0.0, f64::max);
            return Err(Infeasible {
                reason: InfeasibleReason::JointLimit,
                waypoint: first_index + steps_hint(span) - 1,
                joint: Some(i),
            });
        }
    }
    let span = (0..JOINT_COUNT)
        .map(|i| (q_to[i] - q_from[i]).abs())
        .fold(0.0, f64::max);
    // Guard the ceiling against representation error (30 deg / 1 deg).
    let steps = steps_hint(span);
    let mut out = Vec::with_capacity(steps);
    for k in 1..=steps {
        let q = if k == steps {
            *q_to
        } else {
            let s = k as f64 / steps as f64;
            let mut q = [0.0; JOINT_COUNT];
            for i in 0..JOINT_COUNT {
                q[i] = q_from[i] + (q_to[i] - q_from[i]) * s;
            }
            q
        };
        check_waypoint(&q, first_index + k - 1, limits, arm)?;
        out.push(q);
    }
    Ok(out)
}

/// Plans through a sequence of targets, concatenating the segments.
pub fn plan_through(
    q_from: &JointVector,
    targets: &[JointVector],
    limits: &PlanLimits,
    arm: &ArmConfig,
) -> Result<JointTrajectory, Infeasible> {
    let mut out: JointTrajectory = Vec::new();
    let mut cursor = *q_from;
    for target in targets {
        let seg = plan_segment(&cursor, target, limits, arm, out.len())?;
        out.extend(seg);
        cursor = *target;
    }
    Ok(out)
}
