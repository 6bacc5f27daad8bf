//! Planar and spatial primitives shared by the world and sensor models.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Wraps an angle into `(-π, π]`.
pub fn normalize_angle(angle: f64) -> f64 {
    let wrapped = angle.rem_euclid(2.0 * PI);
    if wrapped > PI {
        wrapped - 2.0 * PI
    } else {
        wrapped
    }
}

/// Planar pose in the world frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2 {
    pub const fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta }
    }

    /// Maps a point expressed in this pose's frame into the parent frame.
    pub fn transform_point(&self, local: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.theta.sin_cos();
        [
            self.x + c * local[0] - s * local[1],
            self.y + s * local[0] + c * local[1],
        ]
    }

    /// Inverse of [`Pose2::transform_point`].
    pub fn inverse_transform_point(&self, world: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.theta.sin_cos();
        let dx = world[0] - self.x;
        let dy = world[1] - self.y;
        [c * dx + s * dy, -s * dx + c * dy]
    }

    pub fn distance_to(&self, other: &Pose2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Straight 2D segment between two endpoints, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub a: [f64; 2],
    pub b: [f64; 2],
}

impl Segment {
    pub const fn new(a: [f64; 2], b: [f64; 2]) -> Self {
        Self { a, b }
    }

    pub fn length(&self) -> f64 {
        (self.b[0] - self.a[0]).hypot(self.b[1] - self.a[1])
    }

    /// Smallest distance from `p` to any point of the segment.
    pub fn distance_to_point(&self, p: [f64; 2]) -> f64 {
        let ex = self.b[0] - self.a[0];
        let ey = self.b[1] - self.a[1];
        let len2 = ex * ex + ey * ey;
        let t = if len2 == 0.0 {
            0.0
        } else {
            (((p[0] - self.a[0]) * ex + (p[1] - self.a[1]) * ey) / len2).clamp(0.0, 1.0)
        };
        let cx = self.a[0] + t * ex;
        let cy = self.a[1] + t * ey;
        (p[0] - cx).hypot(p[1] - cy)
    }
}

fn cross(ax: f64, ay: f64, bx: f64, by: f64) -> f64 {
    ax * by - ay * bx
}

/// Distance along a ray from `origin` with unit direction `dir` to `segment`,
/// or `None` when the ray misses it. Parallel segments never register a hit.
pub fn ray_segment_distance(origin: [f64; 2], dir: [f64; 2], segment: &Segment) -> Option<f64> {
    let ex = segment.b[0] - segment.a[0];
    let ey = segment.b[1] - segment.a[1];
    let denom = cross(dir[0], dir[1], ex, ey);
    if denom.abs() < 1e-15 {
        return None;
    }
    let wx = segment.a[0] - origin[0];
    let wy = segment.a[1] - origin[1];
    let t = cross(wx, wy, ex, ey) / denom;
    let u = cross(wx, wy, dir[0], dir[1]) / denom;
    if t > 0.0 && (0.0..=1.0).contains(&u) {
        Some(t)
    } else {
        None
    }
}

/// Axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Rect {
    pub fn from_center(center: [f64; 2], size: [f64; 2]) -> Self {
        Self {
            min: [center[0] - size[0] / 2.0, center[1] - size[1] / 2.0],
            max: [center[0] + size[0] / 2.0, center[1] + size[1] / 2.0],
        }
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.min[0] && p[0] <= self.max[0] && p[1] >= self.min[1] && p[1] <= self.max[1]
    }

    pub fn edges(&self) -> [Segment; 4] {
        let [x0, y0] = self.min;
        let [x1, y1] = self.max;
        [
            Segment::new([x0, y0], [x1, y0]),
            Segment::new([x1, y0], [x1, y1]),
            Segment::new([x1, y1], [x0, y1]),
            Segment::new([x0, y1], [x0, y0]),
        ]
    }

    /// Smallest distance from `p` to the rectangle (zero inside).
    pub fn distance_to_point(&self, p: [f64; 2]) -> f64 {
        let dx = (self.min[0] - p[0]).max(0.0).max(p[0] - self.max[0]);
        let dy = (self.min[1] - p[1]).max(0.0).max(p[1] - self.max[1]);
        dx.hypot(dy)
    }
}

/// Axis-aligned box in 3D.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb3 {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb3 {
    pub fn contains(&self, p: [f64; 3]) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    /// True when `other` lies entirely within `self`.
    pub fn encloses(&self, other: &Aabb3) -> bool {
        (0..3).all(|i| other.min[i] >= self.min[i] && other.max[i] <= self.max[i])
    }
}

pub fn distance3(a: [f64; 3], b: [f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}
