//! Agribot model: skid-steer base, odometry, lidar and sonar, UR5 arm, gripper.

pub mod arm;
pub mod base;
pub mod gripper;
pub mod odometry;
pub mod planner;
pub mod sensors;

pub use arm::{
    forward_kinematics, joint_index, ArmConfig, ArmState, DhRow, EePose, JointVector,
    TrajectoryExecutor, JOINT_COUNT, JOINT_NAMES, UR5_DH,
};
pub use base::{integrate_arc, step_base, BaseConfig, BaseState};
pub use gripper::{grasp_check, GripperConfig, GripperState};
pub use odometry::{filter_odometry, ArcIncrement, OdometryFilter};
pub use planner::{
    plan_joint_motion, plan_through, Infeasible, InfeasibleReason, JointTrajectory, PlanLimits,
};
pub use sensors::{
    scan_lidar, scan_sonar, LidarConfig, LidarScan, MarkerHit, SonarConfig, SonarRing,
    SONAR_COUNT,
};

use crate::geometry::{Pose2, Rect};
use serde::{Deserialize, Serialize};

/// Chassis length and width, used for rendering.
pub const ROVER_FOOTPRINT_M: [f64; 2] = [0.7, 0.55];

/// Harvest basket at the trolley front, in the rover frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BasketConfig {
    pub center_m: [f64; 2],
    pub size_m: [f64; 2],
}

impl Default for BasketConfig {
    fn default() -> Self {
        Self {
            center_m: [0.45, 0.0],
            size_m: [0.25, 0.5],
        }
    }
}

impl BasketConfig {
    pub fn footprint(&self) -> Rect {
        Rect::from_center(self.center_m, self.size_m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoverConfig {
    pub start_pose: Pose2,
    pub base: BaseConfig,
    pub arm: ArmConfig,
    pub gripper: GripperConfig,
    pub lidar: LidarConfig,
    pub sonar: SonarConfig,
    pub basket: BasketConfig,
}

impl Default for RoverConfig {
    fn default() -> Self {
        Self {
            start_pose: Pose2::new(0.5, 0.6, 0.0),
            base: BaseConfig::default(),
            arm: ArmConfig::default(),
            gripper: GripperConfig::default(),
            lidar: LidarConfig::default(),
            sonar: SonarConfig::default(),
            basket: BasketConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoverState {
    pub config: RoverConfig,
    pub base: BaseState,
    pub arm: ArmState,
    pub gripper: GripperState,
    pub sonar: SonarRing,
    /// Midpoint between the fingertips, world frame.
    pub fingertip_world: [f64; 3],
}

impl RoverState {
    pub fn new(config: RoverConfig) -> Self {
        let base = BaseState::new(config.start_pose, &config.base);
        let arm = ArmState::new(config.arm.initial_q);
        let gripper = GripperState::new(&config.gripper);
        let fingertip_world = config.arm.fingertip_in_world(&arm.q, &base.pose);
        let sonar = SonarRing::clear(&config.sonar);
        Self {
            config,
            base,
            arm,
            gripper,
            sonar,
            fingertip_world,
        }
    }

    pub fn pose(&self) -> Pose2 {
        self.base.pose
    }

    pub fn refresh_fingertip(&mut self) {
        self.fingertip_world = self
            .config
            .arm
            .fingertip_in_world(&self.arm.q, &self.base.pose);
    }

    /// Whether the fingertip midpoint lies above the basket footprint.
    pub fn fingertip_over_basket(&self) -> bool {
        let p = self.base.pose.inverse_transform_point([
            self.fingertip_world[0],
            self.fingertip_world[1],
        ]);
        self.config.basket.footprint().contains(p)
    }
}
