//! Two-finger hemisphere gripper and the grasp rule.

use crate::geometry::distance3;
use crate::world::{Greenhouse, TomatoState};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GripperConfig {
    pub max_aperture_m: f64,
    pub fingertip_radius_m: f64,
    /// Largest fingertip-midpoint to tomato-center distance that still grasps.
    pub grasp_radius_m: f64,
}

impl Default for GripperConfig {
    fn default() -> Self {
        Self {
            max_aperture_m: 0.085,
            fingertip_radius_m: 0.02,
            grasp_radius_m: 0.04,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GripperState {
    pub aperture_m: f64,
    pub grasped_tomato: Option<u32>,
    pub fingertip_radius_m: f64,
    pub max_aperture_m: f64,
    pub grasp_radius_m: f64,
}

impl GripperState {
    /// Starts fully open with nothing grasped.
    pub fn new(config: &GripperConfig) -> Self {
        Self {
            aperture_m: config.max_aperture_m,
            grasped_tomato: None,
            fingertip_radius_m: config.fingertip_radius_m,
            max_aperture_m: config.max_aperture_m,
            grasp_radius_m: config.grasp_radius_m,
        }
    }

    pub fn set_aperture(&mut self, aperture_m: f64) {
        self.aperture_m = aperture_m.clamp(0.0, self.max_aperture_m);
    }
}

/// The tomato the gripper would hold at `fingertip` (world frame): center
/// within the grasp radius and diameter larger than the aperture. Collected
/// tomatoes are out of reach. Ties go to the nearer tomato, then the lower id.
pub fn grasp_check(
    greenhouse: &Greenhouse,
    fingertip: [f64; 3],
    gripper: &GripperState,
) -> Option<u32> {
    greenhouse
        .tomatoes()
        .filter(|t| t.state != TomatoState::Collected)
        .filter(|t| t.diameter() > gripper.aperture_m)
        .map(|t| (distance3(t.center, fingertip), t.tomato_id))
        .filter(|&(d, _)| d <= gripper.grasp_radius_m)
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, id)| id)
}
