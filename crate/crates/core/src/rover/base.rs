//! Skid-steer base kinematics with slip and noisy wheel odometry.

use super::odometry::{ArcIncrement, OdometryFilter};
use crate::geometry::{normalize_angle, Pose2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaseConfig {
    pub track_width_m: f64,
    /// Yaw-rate attenuation from lateral skid, in `[0, 1)`.
    pub slip_coefficient: f64,
    pub wheel_speed_limit_m_s: f64,
    /// Standard deviation of wheel-speed noise as a fraction of the speed.
    pub odometry_noise_fraction: f64,
    pub filter_alpha: f64,
    pub wall_heading_gain: f64,
}

impl Default for BaseConfig {
    fn default() -> Self {
        Self {
            track_width_m: 0.5,
            slip_coefficient: 0.1,
            wheel_speed_limit_m_s: 1.0,
            odometry_noise_fraction: 0.02,
            filter_alpha: 0.3,
            wall_heading_gain: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaseState {
    pub pose: Pose2,
    pub v_left: f64,
    pub v_right: f64,
    pub track_width_m: f64,
    pub slip_coefficient: f64,
    pub wheel_speed_limit_m_s: f64,
    pub noise_fraction: f64,
    pub raw_odometry: Pose2,
    pub filter: OdometryFilter,
}

impl BaseState {
    pub fn new(pose: Pose2, config: &BaseConfig) -> Self {
        Self {
            pose,
            v_left: 0.0,
            v_right: 0.0,
            track_width_m: config.track_width_m,
            slip_coefficient: config.slip_coefficient,
            wheel_speed_limit_m_s: config.wheel_speed_limit_m_s,
            noise_fraction: config.odometry_noise_fraction,
            raw_odometry: pose,
            filter: OdometryFilter::new(config.filter_alpha, config.wall_heading_gain, pose),
        }
    }

    pub fn filtered_odometry(&self) -> Pose2 {
        self.filter.pose
    }

    /// Sets commanded wheel speeds, clamped to the wheel-speed limit.
    pub fn set_wheel_speeds(&mut self, v_left: f64, v_right: f64) {
        let lim = self.wheel_speed_limit_m_s;
        self.v_left = v_left.clamp(-lim, lim);
        self.v_right = v_right.clamp(-lim, lim);
    }

    pub fn stop(&mut self) {
        self.v_left = 0.0;
        self.v_right = 0.0;
    }

    pub fn is_moving(&self) -> bool {
        self.v_left != 0.0 || self.v_right != 0.0
    }

    /// Arc travelled in `dt_s` at the given wheel speeds, slip included.
    pub fn arc_for(&self, v_left: f64, v_right: f64, dt_s: f64) -> ArcIncrement {
        let v = (v_left + v_right) / 2.0;
        let omega = (v_right - v_left) / self.track_width_m * (1.0 - self.slip_coefficient);
        ArcIncrement {
            distance: v * dt_s,
            dtheta: omega * dt_s,
        }
    }
}

/// Moves `pose` along a constant-curvature arc.
pub fn integrate_arc(pose: Pose2, inc: ArcIncrement) -> Pose2 {
    let ArcIncrement { distance, dtheta } = inc;
    let (x, y) = if dtheta == 0.0 {
        let (s, c) = pose.theta.sin_cos();
        (pose.x + distance * c, pose.y + distance * s)
    } else {
        let radius = distance / dtheta;
        let end = pose.theta + dtheta;
        (
            pose.x + radius * (end.sin() - pose.theta.sin()),
            pose.y - radius * (end.cos() - pose.theta.cos()),
        )
    };
    Pose2::new(x, y, normalize_angle(pose.theta + dtheta))
}

/// Advances the true pose, raw odometry and filtered odometry by `dt_s`.
pub fn step_base(state: &BaseState, dt_s: f64, noise_seed: u64) -> BaseState {
    let mut next = state.clone();
    let truth = state.arc_for(state.v_left, state.v_right, dt_s);
    next.pose = integrate_arc(state.pose, truth);

    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    let n_left: f64 = StandardNormal.sample(&mut rng);
    let n_right: f64 = StandardNormal.sample(&mut rng);
    let sigma = state.noise_fraction;
    let measured_left = state.v_left * (1.0 + sigma * n_left);
    let measured_right = state.v_right * (1.0 + sigma * n_right);
    let raw = state.arc_for(measured_left, measured_right, dt_s);
    next.raw_odometry = integrate_arc(state.raw_odometry, raw);
    next.filter.update(raw, truth);
    next
}
