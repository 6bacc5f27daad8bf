//! EWMA odometry filter with an optional lidar wall-heading correction.

use super::base::integrate_arc;
use crate::geometry::{normalize_angle, Pose2};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Distance and heading change over one integration step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ArcIncrement {
    pub distance: f64,
    pub dtheta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdometryFilter {
    /// Weight of the measured increment, in `(0, 1]`.
    pub alpha: f64,
    /// Fraction of the heading residual removed per wall observation.
    pub wall_gain: f64,
    pub pose: Pose2,
}

fn blend(alpha: f64, measured: f64, commanded: f64) -> f64 {
    if alpha == 1.0 {
        measured
    } else {
        commanded + alpha * (measured - commanded)
    }
}

impl OdometryFilter {
    pub fn new(alpha: f64, wall_gain: f64, pose: Pose2) -> Self {
        Self {
            alpha,
            wall_gain,
            pose,
        }
    }

    /// Fuses a noisy odometry increment with the commanded-kinematics
    /// increment and integrates the result.
    pub fn update(&mut self, measured: ArcIncrement, commanded: ArcIncrement) -> Pose2 {
        let fused = ArcIncrement {
            distance: blend(self.alpha, measured.distance, commanded.distance),
            dtheta: blend(self.alpha, measured.dtheta, commanded.dtheta),
        };
        self.pose = integrate_arc(self.pose, fused);
        self.pose
    }

    /// Pulls the heading toward a lidar estimate. `wall_direction` is the
    /// tracked wall's world direction (either sense) and `relative_heading`
    /// the rover heading relative to the wall as measured by the line fit.
    pub fn correct_heading(&mut self, wall_direction: f64, relative_heading: f64) -> Pose2 {
        let a = normalize_angle(wall_direction + relative_heading);
        let b = normalize_angle(a + PI);
        let ra = normalize_angle(a - self.pose.theta);
        let rb = normalize_angle(b - self.pose.theta);
        let residual = if ra.abs() <= rb.abs() { ra } else { rb };
        self.pose.theta = normalize_angle(self.pose.theta + self.wall_gain * residual);
        self.pose
    }
}

/// Free-function form of [`OdometryFilter::update`].
pub fn filter_odometry(
    raw_increment: ArcIncrement,
    commanded_increment: ArcIncrement,
    filter: &mut OdometryFilter,
) -> Pose2 {
    filter.update(raw_increment, commanded_increment)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_one_passes_measurement_through() {
        let mut f = OdometryFilter::new(1.0, 0.0, Pose2::default());
        let m = ArcIncrement {
            distance: 0.013,
            dtheta: 0.0021,
        };
        let c = ArcIncrement {
            distance: 0.01,
            dtheta: 0.002,
        };
        let out = filter_odometry(m, c, &mut f);
        assert_eq!(out, integrate_arc(Pose2::default(), m));
    }

    #[test]
    fn equal_inputs_are_a_fixpoint() {
        let mut f = OdometryFilter::new(0.3, 0.0, Pose2::default());
        let m = ArcIncrement {
            distance: 0.0123,
            dtheta: -0.0007,
        };
        assert_eq!(f.update(m, m), integrate_arc(Pose2::default(), m));
    }

    #[test]
    fn heading_correction_picks_nearest_wall_sense() {
        let mut f = OdometryFilter::new(0.3, 0.5, Pose2::new(0.0, 0.0, PI - 0.1));
        // Wall along +x, rover reported anti-parallel: estimate is PI.
        f.correct_heading(0.0, 0.0);
        assert!((f.pose.theta - (PI - 0.05)).abs() < 1e-12);
    }
}
