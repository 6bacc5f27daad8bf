//! Closed-loop wall following on a straight corridor, stepped directly
//! through the lidar, controller and base models.

#![allow(dead_code)]

use greensim_core::geometry::Pose2;
use greensim_core::navigation::{wall_follow_step, DriveLimits};
use greensim_core::rover::{scan_lidar, step_base, BaseState};
use greensim_core::Scenario;

pub struct Trace {
    /// (distance travelled, lateral error) per tick.
    pub samples: Vec<(f64, f64)>,
}

impl Trace {
    /// Travel at which the error enters and then stays inside `tol`.
    pub fn settled_at(&self, tol: f64) -> Option<f64> {
        let last_out = self.samples.iter().rposition(|(_, e)| e.abs() >= tol);
        match last_out {
            None => Some(0.0),
            Some(i) if i + 1 < self.samples.len() => Some(self.samples[i + 1].0),
            Some(_) => None,
        }
    }
}

/// Follows the y = 0 wall starting at `y0` with heading `theta0`, noise off.
pub fn run_corridor(y0: f64, theta0: f64, max_travel_m: f64) -> Trace {
    let mut scenario = Scenario::corridor(40.0, 3.0, y0);
    scenario.rover.start_pose = Pose2::new(1.0, y0, theta0);
    scenario.rover.base.odometry_noise_fraction = 0.0;
    let world = scenario.build_world().expect("corridor builds");
    let cfg = scenario.navigation.clone();
    let limits = DriveLimits {
        track_width_m: scenario.rover.base.track_width_m,
        wheel_speed_limit_m_s: scenario.rover.base.wheel_speed_limit_m_s,
    };
    let dt = scenario.sim.dt_s;
    let mut base = BaseState::new(scenario.rover.start_pose, &scenario.rover.base);
    let mut travelled = 0.0;
    let mut samples = Vec::new();
    while travelled < max_travel_m {
        let scan = scan_lidar(&world.greenhouse, &base.pose, &scenario.rover.lidar);
        let out = wall_follow_step(&scan, &cfg, &limits);
        assert!(out.fit.is_some(), "lost the wall at {:?}", base.pose);
        base.set_wheel_speeds(out.wheels.0, out.wheels.1);
        let prev = base.pose;
        base = step_base(&base, dt, 0);
        travelled += prev.distance_to(&base.pose);
        samples.push((travelled, base.pose.y - cfg.target_distance_m));
    }
    Trace { samples }
}
