//! Safety limits every command must satisfy before it reaches the engine.

use greensim_core::geometry::Aabb3;
use greensim_core::rover::{plan_joint_motion, plan_through, ArmConfig, PlanLimits, JOINT_COUNT};
use greensim_core::{CommandKind, MissionCommand, RoverView};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SafetyPolicy {
    pub joint_limits_rad: [[f64; 2]; JOINT_COUNT],
    pub velocity_limits_rad_s: [f64; JOINT_COUNT],
    pub wheel_speed_limit_m_s: f64,
    /// Fingertip bounds in the rover frame.
    pub workspace: Aabb3,
    pub floor_clearance_m: f64,
    /// Smallest sonar range allowed in the direction of base motion.
    pub proximity_guard_m: f64,
    pub max_pluck_force_n: f64,
}

impl Default for SafetyPolicy {
    fn default() -> Self {
        Self {
            joint_limits_rad: [[-2.0 * PI, 2.0 * PI]; JOINT_COUNT],
            velocity_limits_rad_s: [PI; JOINT_COUNT],
            wheel_speed_limit_m_s: 1.0,
            workspace: Aabb3 {
                min: [-1.5, -1.5, 0.0],
                max: [1.5, 1.5, 1.8],
            },
            floor_clearance_m: 0.05,
            proximity_guard_m: 0.25,
            max_pluck_force_n: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{code}: {message}")]
pub struct Rejection {
    pub code: &'static str,
    pub message: String,
}

fn reject(code: &'static str, message: impl Into<String>) -> Result<(), Rejection> {
    Err(Rejection {
        code,
        message: message.into(),
    })
}

impl SafetyPolicy {
    pub fn validate(&self) -> Result<(), String> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(format!("{name} must be finite and positive, got {v}"))
            }
        };
        for (i, [lo, hi]) in self.joint_limits_rad.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(format!("joint {i} limits [{lo}, {hi}] are not a finite interval"));
            }
        }
        for (i, &v) in self.velocity_limits_rad_s.iter().enumerate() {
            positive(&format!("velocity limit {i}"), v)?;
        }
        positive("wheel_speed_limit_m_s", self.wheel_speed_limit_m_s)?;
        positive("floor_clearance_m", self.floor_clearance_m)?;
        positive("proximity_guard_m", self.proximity_guard_m)?;
        positive("max_pluck_force_n", self.max_pluck_force_n)?;
        let ws = &self.workspace;
        if !(0..3).all(|i| ws.min[i].is_finite() && ws.max[i].is_finite() && ws.min[i] < ws.max[i]) {
            return Err("workspace box must be finite and non-empty".into());
        }
        Ok(())
    }

    pub fn plan_limits(&self, arm: &ArmConfig) -> PlanLimits {
        PlanLimits {
            joint_limits_rad: self.joint_limits_rad,
            workspace: self.workspace,
            floor_clearance_m: self.floor_clearance_m,
            step_rad: arm.plan_step_rad,
        }
    }

    /// True when every limit of `self` is at least as tight as `other`'s.
    pub fn is_at_least_as_strict_as(&self, other: &SafetyPolicy) -> bool {
        let joints = (0..JOINT_COUNT).all(|i| {
            self.joint_limits_rad[i][0] >= other.joint_limits_rad[i][0]
                && self.joint_limits_rad[i][1] <= other.joint_limits_rad[i][1]
                && self.velocity_limits_rad_s[i] <= other.velocity_limits_rad_s[i]
        });
        joints
            && other.workspace.encloses(&self.workspace)
            && self.wheel_speed_limit_m_s <= other.wheel_speed_limit_m_s
            && self.floor_clearance_m >= other.floor_clearance_m
            && self.proximity_guard_m >= other.proximity_guard_m
            && self.max_pluck_force_n <= other.max_pluck_force_n
    }

    /// Finiteness, then the per-kind limits, then the proximity guard.
    /// The e-stop and slot checks belong to the gateway session layer.
    pub fn check(&self, kind: &CommandKind, view: &RoverView, arm: &ArmConfig) -> Result<(), Rejection> {
        if !kind.is_finite() {
            return reject("NOT_FINITE", "numeric fields must be finite");
        }
        match kind {
            CommandKind::BaseVelocity { v_left, v_right } => {
                let lim = self.wheel_speed_limit_m_s;
                for v in [v_left, v_right] {
                    if v.abs() > lim {
                        return reject("WHEEL_SPEED", format!("wheel speed {v} exceeds {lim} m/s"));
                    }
                }
                self.check_proximity(*v_left, *v_right, view)
            }
            CommandKind::JointDelta {
                joint,
                delta_rad,
                speed_rad_s,
            } => {
                if *joint >= JOINT_COUNT {
                    return reject("BAD_JOINT", format!("joint index {joint} out of range"));
                }
                let mut target = view.q;
                target[*joint] += delta_rad;
                let [lo, hi] = self.joint_limits_rad[*joint];
                if !(target[*joint] >= lo && target[*joint] <= hi) {
                    return reject(
                        "JOINT_LIMIT",
                        format!("joint {joint} target {:.4} rad outside [{lo:.4}, {hi:.4}]", target[*joint]),
                    );
                }
                if let Some(s) = speed_rad_s {
                    self.check_speed(*s, self.velocity_limits_rad_s[*joint])?;
                }
                plan_joint_motion(&view.q, &target, &self.plan_limits(arm), arm)
                    .map(|_| ())
                    .map_err(|e| Rejection {
                        code: e.reason.code(),
                        message: e.to_string(),
                    })
            }
            CommandKind::JointTrajectory {
                waypoints,
                speed_rad_s,
            } => {
                if let Some(s) = speed_rad_s {
                    let vmax = self.velocity_limits_rad_s.iter().copied().fold(f64::INFINITY, f64::min);
                    self.check_speed(*s, vmax)?;
                }
                plan_through(&view.q, waypoints, &self.plan_limits(arm), arm)
                    .map(|_| ())
                    .map_err(|e| Rejection {
                        code: e.reason.code(),
                        message: e.to_string(),
                    })
            }
            CommandKind::GripperSet { aperture_m } => {
                if *aperture_m < 0.0 {
                    return reject("APERTURE", "aperture must be non-negative");
                }
                Ok(())
            }
            CommandKind::Pluck { force_n } => {
                if *force_n < 0.0 || *force_n > self.max_pluck_force_n {
                    return reject(
                        "PLUCK_FORCE",
                        format!("force {force_n} N outside [0, {}] N", self.max_pluck_force_n),
                    );
                }
                Ok(())
            }
            CommandKind::Mission(MissionCommand::Start { .. } | MissionCommand::Resume) => {
                // Autonomous cruise starts forward.
                self.check_proximity(1.0, 1.0, view)
            }
            CommandKind::Mission(MissionCommand::Abort) | CommandKind::Stop => Ok(()),
        }
    }

    fn check_speed(&self, speed: f64, limit: f64) -> Result<(), Rejection> {
        if !(speed > 0.0) || speed > limit {
            return reject("JOINT_VELOCITY", format!("speed {speed} rad/s outside (0, {limit}]"));
        }
        Ok(())
    }

    /// Forward motion consults the front transducers, reverse the rear,
    /// and turning in place all of them.
    fn check_proximity(&self, v_left: f64, v_right: f64, view: &RoverView) -> Result<(), Rejection> {
        let v = v_left + v_right;
        let nearest = if v_left == 0.0 && v_right == 0.0 {
            return Ok(());
        } else if v > 0.0 {
            view.sonar.front_min()
        } else if v < 0.0 {
            view.sonar.rear_min()
        } else {
            view.sonar.ranges.iter().copied().fold(f64::INFINITY, f64::min)
        };
        if nearest < self.proximity_guard_m {
            return reject(
                "PROXIMITY",
                format!("obstacle at {nearest:.3} m inside the {:.2} m guard", self.proximity_guard_m),
            );
        }
        Ok(())
    }
}
