//! 2D lidar and sonar ring ray casting against walls and pod boxes.

use crate::geometry::{normalize_angle, ray_segment_distance, Pose2, Segment};
use crate::world::{Greenhouse, MARKER_DETECTION_RANGE_M};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LidarConfig {
    pub fov_rad: f64,
    pub resolution_rad: f64,
    pub max_range_m: f64,
    pub marker_range_m: f64,
}

impl Default for LidarConfig {
    fn default() -> Self {
        Self {
            fov_rad: 270f64.to_radians(),
            resolution_rad: 0.5f64.to_radians(),
            max_range_m: 10.0,
            marker_range_m: MARKER_DETECTION_RANGE_M,
        }
    }
}

impl LidarConfig {
    pub fn beam_count(&self) -> usize {
        (self.fov_rad / self.resolution_rad).round() as usize + 1
    }

    pub fn angle_min(&self) -> f64 {
        -self.fov_rad / 2.0
    }

    /// Beam angles in the rover frame, counter-clockwise from straight ahead.
    pub fn beam_angles(&self) -> Vec<f64> {
        (0..self.beam_count())
            .map(|i| self.angle_min() + i as f64 * self.resolution_rad)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkerHit {
    pub marker_id: u32,
    /// Rover-frame bearing in `(-π, π]`.
    pub bearing: f64,
    pub range: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LidarScan {
    pub angle_min: f64,
    pub angle_increment: f64,
    pub max_range: f64,
    /// One entry per beam; `max_range` when the beam hit nothing.
    pub ranges: Vec<f64>,
    pub marker_hits: Vec<MarkerHit>,
}

impl LidarScan {
    pub fn angle(&self, index: usize) -> f64 {
        self.angle_min + index as f64 * self.angle_increment
    }

    /// Range of the beam closest to `angle`, if it lies inside the field of view.
    pub fn range_at(&self, angle: f64) -> Option<f64> {
        let idx = ((angle - self.angle_min) / self.angle_increment).round();
        if idx < 0.0 || idx as usize >= self.ranges.len() {
            None
        } else {
            Some(self.ranges[idx as usize])
        }
    }
}

/// Nearest hit along a beam, limited to `max_range`.
fn cast(origin: [f64; 2], heading: f64, segments: &[&Segment], max_range: f64) -> f64 {
    let (s, c) = heading.sin_cos();
    segments
        .iter()
        .filter_map(|seg| ray_segment_distance(origin, [c, s], seg))
        .fold(max_range, f64::min)
}

/// Segments that could be hit within `max_range` of `origin`.
fn nearby<'a>(segments: &'a [Segment], origin: [f64; 2], max_range: f64) -> Vec<&'a Segment> {
    let reach = max_range + 1e-9;
    segments
        .iter()
        .filter(|seg| seg.distance_to_point(origin) <= reach)
        .collect()
}

fn line_of_sight(from: [f64; 2], to: [f64; 2], blockers: &[&Segment]) -> bool {
    let dx = to[0] - from[0];
    let dy = to[1] - from[1];
    let dist = dx.hypot(dy);
    if dist == 0.0 {
        return true;
    }
    let dir = [dx / dist, dy / dist];
    !blockers
        .iter()
        .filter_map(|seg| ray_segment_distance(from, dir, seg))
        .any(|t| t < dist)
}

/// Simulated scan from a lidar at the rover center.
pub fn scan_lidar(greenhouse: &Greenhouse, pose: &Pose2, config: &LidarConfig) -> LidarScan {
    let origin = [pose.x, pose.y];
    let segments = nearby(greenhouse.obstacle_segments(), origin, config.max_range_m);
    let ranges = config
        .beam_angles()
        .into_iter()
        .map(|a| cast(origin, pose.theta + a, &segments, config.max_range_m))
        .collect();

    let half_fov = config.fov_rad / 2.0;
    let mut marker_hits = Vec::new();
    for pod in greenhouse.pods() {
        let dx = pod.position[0] - pose.x;
        let dy = pod.position[1] - pose.y;
        let range = dx.hypot(dy);
        if range > config.marker_range_m {
            continue;
        }
        let bearing = normalize_angle(dy.atan2(dx) - pose.theta);
        if bearing.abs() > half_fov {
            continue;
        }
        // The beacon sits inside its own pod, so that box never blocks it.
        let own: Vec<Segment> = pod.footprint().edges().to_vec();
        let blockers: Vec<&Segment> = segments
            .iter()
            .copied()
            .filter(|s| !own.contains(s))
            .collect();
        if line_of_sight(origin, pod.position, &blockers) {
            marker_hits.push(MarkerHit {
                marker_id: pod.marker_id,
                bearing,
                range,
            });
        }
    }

    LidarScan {
        angle_min: config.angle_min(),
        angle_increment: config.resolution_rad,
        max_range: config.max_range_m,
        ranges,
        marker_hits,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SonarConfig {
    pub min_range_m: f64,
    pub max_range_m: f64,
    /// Half length and half width of the chassis the transducers sit on.
    pub chassis_half_extent_m: [f64; 2],
}

impl Default for SonarConfig {
    fn default() -> Self {
        Self {
            min_range_m: 0.02,
            max_range_m: 2.0,
            chassis_half_extent_m: [super::ROVER_FOOTPRINT_M[0] / 2.0, super::ROVER_FOOTPRINT_M[1] / 2.0],
        }
    }
}

impl SonarConfig {
    /// Rover-frame distance from the center to the transducer at `bearing`,
    /// which sits where that bearing leaves the chassis rectangle.
    pub fn mount_distance(&self, bearing: f64) -> f64 {
        let [hx, hy] = self.chassis_half_extent_m;
        let (s, c) = bearing.sin_cos();
        let tx = if c.abs() > 1e-12 { hx / c.abs() } else { f64::INFINITY };
        let ty = if s.abs() > 1e-12 { hy / s.abs() } else { f64::INFINITY };
        tx.min(ty)
    }
}

pub const SONAR_COUNT: usize = 8;

/// Eight readings at 45 degree increments, index 0 straight ahead, CCW.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SonarRing {
    pub ranges: [f64; SONAR_COUNT],
}

impl SonarRing {
    pub fn clear(config: &SonarConfig) -> Self {
        Self {
            ranges: [config.max_range_m; SONAR_COUNT],
        }
    }

    pub fn bearing(index: usize) -> f64 {
        normalize_angle(index as f64 * std::f64::consts::FRAC_PI_4)
    }

    /// Smallest reading among the three forward-facing sensors.
    pub fn front_min(&self) -> f64 {
        [7, 0, 1].iter().map(|&i| self.ranges[i]).fold(f64::INFINITY, f64::min)
    }

    /// Smallest reading among the three rear-facing sensors.
    pub fn rear_min(&self) -> f64 {
        [3, 4, 5].iter().map(|&i| self.ranges[i]).fold(f64::INFINITY, f64::min)
    }
}

/// Gap between each transducer on the chassis edge and the nearest obstacle
/// along its axis, clipped to the sensor range.
pub fn scan_sonar(greenhouse: &Greenhouse, pose: &Pose2, config: &SonarConfig) -> SonarRing {
    let reach = config.max_range_m + config.chassis_half_extent_m[0].hypot(config.chassis_half_extent_m[1]);
    let segments = nearby(greenhouse.obstacle_segments(), [pose.x, pose.y], reach);
    let mut ranges = [0.0; SONAR_COUNT];
    for (i, r) in ranges.iter_mut().enumerate() {
        let bearing = SonarRing::bearing(i);
        let mount = pose.transform_point({
            let m = config.mount_distance(bearing);
            [m * bearing.cos(), m * bearing.sin()]
        });
        *r = cast(mount, pose.theta + bearing, &segments, config.max_range_m)
            .clamp(config.min_range_m, config.max_range_m);
    }
    SonarRing { ranges }
}
