//! Lidar wall following and pod-marker missions along a row.

use crate::rover::{LidarConfig, LidarScan, MarkerHit};
use crate::world::{Greenhouse, Side};
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WallFollowConfig {
    pub target_distance_m: f64,
    /// rad/s of turn per meter of distance error.
    pub k_p: f64,
    /// rad/s of turn per radian of heading relative to the wall.
    pub k_heading: f64,
    pub cruise_speed_m_s: f64,
    pub side: Side,
    /// Width of the beam sector centered on the wall side.
    pub sector_rad: f64,
    /// Fewest inlier returns accepted as a wall.
    pub min_beams: usize,
    /// Residual above which a return is dropped from the line fit.
    pub inlier_tolerance_m: f64,
    pub stop_range_m: f64,
    /// Allowed deviation of the beacon bearing from perpendicular.
    pub stop_bearing_tolerance_rad: f64,
    /// Front clearance that marks the end of a row.
    pub row_end_clearance_m: f64,
}

impl Default for WallFollowConfig {
    fn default() -> Self {
        Self {
            target_distance_m: 0.6,
            k_p: 1.2,
            k_heading: 1.6,
            cruise_speed_m_s: 0.3,
            side: Side::Right,
            sector_rad: 60f64.to_radians(),
            min_beams: 8,
            inlier_tolerance_m: 0.05,
            stop_range_m: 0.8,
            stop_bearing_tolerance_rad: 30f64.to_radians(),
            row_end_clearance_m: 0.6,
        }
    }
}

impl WallFollowConfig {
    pub fn validate(&self, lidar: &LidarConfig) -> Result<(), String> {
        for (name, v) in [
            ("k_p", self.k_p),
            ("k_heading", self.k_heading),
            ("cruise_speed_m_s", self.cruise_speed_m_s),
            ("sector_rad", self.sector_rad),
            ("stop_range_m", self.stop_range_m),
            ("inlier_tolerance_m", self.inlier_tolerance_m),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("{name} must be finite and > 0"));
            }
        }
        if !(self.target_distance_m > 0.0 && self.target_distance_m < lidar.max_range_m) {
            return Err("target_distance_m must lie within the lidar range".into());
        }
        if self.min_beams < 2 {
            return Err("min_beams must be at least 2".into());
        }
        Ok(())
    }
}

/// Wheel geometry the controller converts its turn rate with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveLimits {
    pub track_width_m: f64,
    pub wheel_speed_limit_m_s: f64,
}

/// Line fitted to the side-sector returns, in the rover frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WallFit {
    /// Perpendicular distance from the rover center to the line.
    pub distance_m: f64,
    /// Rover heading relative to the wall direction, in `(-π/2, π/2]`.
    pub heading_rad: f64,
    pub inliers: usize,
}

fn fold_half_turn(a: f64) -> f64 {
    let mut a = a;
    while a > FRAC_PI_2 {
        a -= std::f64::consts::PI;
    }
    while a <= -FRAC_PI_2 {
        a += std::f64::consts::PI;
    }
    a
}

/// Total-least-squares line through `points`: (centroid, direction angle).
fn tls(points: &[[f64; 2]]) -> ([f64; 2], f64) {
    let n = points.len() as f64;
    let cx = points.iter().map(|p| p[0]).sum::<f64>() / n;
    let cy = points.iter().map(|p| p[1]).sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for p in points {
        let dx = p[0] - cx;
        let dy = p[1] - cy;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    ([cx, cy], 0.5 * (2.0 * sxy).atan2(sxx - syy))
}

/// Fits the wall on `side`, discarding returns off the dominant line
/// (pod boxes, corners) for a few rounds.
pub fn fit_wall(scan: &LidarScan, config: &WallFollowConfig, side: Side) -> Option<WallFit> {
    let center = side.bearing_sign() * FRAC_PI_2;
    let mut points: Vec<[f64; 2]> = scan
        .ranges
        .iter()
        .enumerate()
        .filter(|&(i, &r)| {
            r < scan.max_range && (scan.angle(i) - center).abs() <= config.sector_rad / 2.0 + 1e-12
        })
        .map(|(i, &r)| {
            let a = scan.angle(i);
            [r * a.cos(), r * a.sin()]
        })
        .collect();
    for _ in 0..4 {
        if points.len() < config.min_beams {
            return None;
        }
        let (c, psi) = tls(&points);
        let normal = [-psi.sin(), psi.cos()];
        let residual = |p: &[f64; 2]| ((p[0] - c[0]) * normal[0] + (p[1] - c[1]) * normal[1]).abs();
        let before = points.len();
        let worst = points.iter().map(residual).fold(0.0, f64::max);
        if worst <= config.inlier_tolerance_m {
            return Some(WallFit {
                distance_m: (c[0] * normal[0] + c[1] * normal[1]).abs(),
                heading_rad: -fold_half_turn(psi),
                inliers: before,
            });
        }
        // Drop the worse half-spread of outliers relative to the current fit.
        let cut = (worst / 2.0).max(config.inlier_tolerance_m);
        points.retain(|p| residual(p) <= cut);
    }
    None
}

/// Turn rate for a wall fit; positive turns left.
pub fn control_law(fit: &WallFit, config: &WallFollowConfig, side: Side) -> f64 {
    // A wall on the left needs a left turn when too far away, hence the sign.
    let toward = -side.bearing_sign();
    config.k_p * (config.target_distance_m - fit.distance_m) * toward
        + config.k_heading * (-fit.heading_rad)
}

/// Converts forward speed and turn rate to clamped wheel speeds.
pub fn wheel_speeds(v: f64, omega: f64, limits: &DriveLimits) -> (f64, f64) {
    let half = omega * limits.track_width_m / 2.0;
    let lim = limits.wheel_speed_limit_m_s;
    ((v - half).clamp(-lim, lim), (v + half).clamp(-lim, lim))
}

#[derive(Debug, Clone, PartialEq)]
pub struct WallFollowOutput {
    pub wheels: (f64, f64),
    pub fit: Option<WallFit>,
}

impl WallFollowOutput {
    pub fn is_fault(&self) -> bool {
        self.fit.is_none()
    }
}

/// One controller step on a fresh scan. Without a wall fit it halts, and
/// the mission layer raises a NO_WALL fault.
pub fn wall_follow_step(
    scan: &LidarScan,
    config: &WallFollowConfig,
    limits: &DriveLimits,
) -> WallFollowOutput {
    match fit_wall(scan, config, config.side) {
        None => WallFollowOutput {
            wheels: (0.0, 0.0),
            fit: None,
        },
        Some(fit) => {
            let omega = control_law(&fit, config, config.side);
            WallFollowOutput {
                wheels: wheel_speeds(config.cruise_speed_m_s, omega, limits),
                fit: Some(fit),
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FaultReason {
    NoWall,
    MarkerNotFound,
}

impl FaultReason {
    pub fn code(self) -> &'static str {
        match self {
            FaultReason::NoWall => "NO_WALL",
            FaultReason::MarkerNotFound => "MARKER_NOT_FOUND",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", content = "detail", rename_all = "snake_case")]
pub enum MissionMode {
    #[default]
    Idle,
    FollowingWall,
    StoppedAtPod(u32),
    Fault(FaultReason),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum MissionEvent {
    Started { targets: Vec<u32> },
    PodReached { marker_id: u32, range_m: f64, bearing_rad: f64 },
    Resumed { next_marker: u32 },
    Completed { visited: Vec<u32> },
    Aborted { visited: Vec<u32> },
    Fault { reason: FaultReason },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MissionState {
    pub mode: MissionMode,
    pub targets: Vec<u32>,
    /// Always a prefix of `targets`.
    pub visited: Vec<u32>,
}

/// What the mission wants from the base this tick.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MissionStep {
    /// `None` leaves the base untouched.
    pub wheels: Option<(f64, f64)>,
    pub fit: Option<WallFit>,
    pub side: Option<Side>,
    pub events: Vec<MissionEvent>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum MissionError {
    #[error("mission is not stopped at a pod")]
    NotStopped,
}

impl MissionState {
    pub fn is_active(&self) -> bool {
        matches!(
            self.mode,
            MissionMode::FollowingWall | MissionMode::StoppedAtPod(_)
        )
    }

    pub fn next_target(&self) -> Option<u32> {
        self.targets.get(self.visited.len()).copied()
    }

    fn fault(&mut self, reason: FaultReason, events: &mut Vec<MissionEvent>) {
        self.mode = MissionMode::Fault(reason);
        events.push(MissionEvent::Fault { reason });
    }

    /// Begins a mission over `markers` in order, replacing any current one.
    pub fn start(&mut self, markers: Vec<u32>, greenhouse: &Greenhouse) -> Vec<MissionEvent> {
        let mut events = vec![MissionEvent::Started {
            targets: markers.clone(),
        }];
        self.targets = markers;
        self.visited.clear();
        if self.targets.is_empty() {
            self.mode = MissionMode::Idle;
            events.push(MissionEvent::Completed { visited: vec![] });
        } else if self
            .targets
            .iter()
            .any(|&m| greenhouse.pod_by_marker(m).is_none())
        {
            self.fault(FaultReason::MarkerNotFound, &mut events);
        } else {
            self.mode = MissionMode::FollowingWall;
        }
        events
    }

    pub fn resume(&mut self) -> Result<Vec<MissionEvent>, MissionError> {
        match (self.mode, self.next_target()) {
            (MissionMode::StoppedAtPod(_), Some(next)) => {
                self.mode = MissionMode::FollowingWall;
                Ok(vec![MissionEvent::Resumed { next_marker: next }])
            }
            _ => Err(MissionError::NotStopped),
        }
    }

    /// Cancels an active mission. Inactive missions are left as they are.
    pub fn abort(&mut self) -> Vec<MissionEvent> {
        if self.is_active() {
            self.mode = MissionMode::Idle;
            vec![MissionEvent::Aborted {
                visited: self.visited.clone(),
            }]
        } else {
            Vec::new()
        }
    }

    /// Advances the state machine on a scan taken at the current pose.
    pub fn step(
        &mut self,
        scan: &LidarScan,
        greenhouse: &Greenhouse,
        config: &WallFollowConfig,
        limits: &DriveLimits,
    ) -> MissionStep {
        let mut out = MissionStep::default();
        if self.mode != MissionMode::FollowingWall {
            if let MissionMode::StoppedAtPod(_) = self.mode {
                out.wheels = Some((0.0, 0.0));
            }
            return out;
        }
        let Some(target) = self.next_target() else {
            self.mode = MissionMode::Idle;
            out.wheels = Some((0.0, 0.0));
            return out;
        };
        let side = greenhouse
            .row_of_marker(target)
            .map_or(config.side, |r| r.wall_side);
        out.side = Some(side);
        out.wheels = Some((0.0, 0.0));

        if let Some(hit) = stop_hit(scan, target, config) {
            self.visited.push(target);
            out.events.push(MissionEvent::PodReached {
                marker_id: target,
                range_m: hit.range,
                bearing_rad: hit.bearing,
            });
            if self.next_target().is_none() {
                self.mode = MissionMode::Idle;
                out.events.push(MissionEvent::Completed {
                    visited: self.visited.clone(),
                });
            } else {
                self.mode = MissionMode::StoppedAtPod(target);
            }
            return out;
        }
        if scan.range_at(0.0).is_some_and(|r| r < config.row_end_clearance_m) {
            self.fault(FaultReason::MarkerNotFound, &mut out.events);
            return out;
        }
        let cfg = WallFollowConfig {
            side,
            ..config.clone()
        };
        let step = wall_follow_step(scan, &cfg, limits);
        out.fit = step.fit;
        if step.is_fault() {
            self.fault(FaultReason::NoWall, &mut out.events);
        } else {
            out.wheels = Some(step.wheels);
        }
        out
    }
}

fn stop_hit<'a>(scan: &'a LidarScan, target: u32, config: &WallFollowConfig) -> Option<&'a MarkerHit> {
    scan.marker_hits.iter().find(|h| {
        h.marker_id == target
            && h.range < config.stop_range_m
            && (h.bearing.abs() - FRAC_PI_2).abs() <= config.stop_bearing_tolerance_rad
    })
}
