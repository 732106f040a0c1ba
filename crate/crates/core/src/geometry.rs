//! Planar oriented-box geometry.
//!
//! Boxes live on the ground plane (meters) for bird's-eye-view evaluation.
//! Image-space boxes use the same type with pixel units and `yaw = 0`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Vertex tolerance used by the polygon clipper.
const VERTEX_EPS: f64 = 1e-9;
/// Intersections smaller than this are treated as empty.
const SLIVER_AREA: f64 = 1e-12;

/// Relative tolerance under which an intersection counts as full containment.
const CONTAINMENT_EPS: f64 = 1e-9;

pub type Point = [f64; 2];

/// Wraps an angle into `(-pi, pi]`.
pub fn normalize_angle(angle: f64) -> f64 {
    let mut a = angle % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Rectangle with a heading. `length` runs along the heading, `width` across it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedBox {
    pub center_x: f64,
    pub center_y: f64,
    pub length: f64,
    pub width: f64,
    pub yaw: f64,
}

impl OrientedBox {
    pub fn new(center_x: f64, center_y: f64, length: f64, width: f64, yaw: f64) -> Result<Self, Error> {
        let all_finite = [center_x, center_y, length, width, yaw].iter().all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::InvalidBox("non-finite coordinate".into()));
        }
        if length <= 0.0 || width <= 0.0 {
            return Err(Error::InvalidBox(format!(
                "dimensions must be positive, got length {length} width {width}"
            )));
        }
        Ok(Self {
            center_x,
            center_y,
            length,
            width,
            yaw: normalize_angle(yaw),
        })
    }

    /// Axis-aligned box from its corner coordinates, e.g. an image-space detection.
    pub fn from_corners(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self, Error> {
        Self::new(
            0.5 * (x_min + x_max),
            0.5 * (y_min + y_max),
            x_max - x_min,
            y_max - y_min,
            0.0,
        )
    }

    pub fn center(&self) -> Point {
        [self.center_x, self.center_y]
    }

    /// Unit vector along the heading.
    pub fn heading(&self) -> Point {
        [self.yaw.cos(), self.yaw.sin()]
    }

    /// Same box moved to a new center.
    pub fn with_center(&self, center: Point) -> Self {
        Self {
            center_x: center[0],
            center_y: center[1],
            ..*self
        }
    }

    /// Corners in counter-clockwise order.
    pub fn corners(&self) -> [Point; 4] {
        let (s, c) = self.yaw.sin_cos();
        let hl = 0.5 * self.length;
        let hw = 0.5 * self.width;
        let local = [[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]];
        local.map(|[x, y]| [self.center_x + c * x - s * y, self.center_y + s * x + c * y])
    }

    /// Half extents of the box projected onto a unit axis.
    pub fn half_extent_along(&self, axis: Point) -> f64 {
        let h = self.heading();
        let along = (h[0] * axis[0] + h[1] * axis[1]).abs();
        let across = (-h[1] * axis[0] + h[0] * axis[1]).abs();
        0.5 * self.length * along + 0.5 * self.width * across
    }
}

pub fn area(b: &OrientedBox) -> f64 {
    b.length * b.width
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn polygon_area(poly: &[Point]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..poly.len() {
        let p = poly[i];
        let q = poly[(i + 1) % poly.len()];
        acc += p[0] * q[1] - q[0] * p[1];
    }
    0.5 * acc.abs()
}

/// Sutherland-Hodgman: clips `subject` by every edge of the convex CCW `clip` polygon.
fn clip_convex(subject: &[Point], clip: &[Point]) -> Vec<Point> {
    let mut output = subject.to_vec();
    for i in 0..clip.len() {
        if output.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % clip.len()];
        let edge_len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
        // signed distance of p to the edge line, positive on the inner side
        let side = |p: Point| cross(a, b, p) / edge_len;

        let input = std::mem::take(&mut output);
        for j in 0..input.len() {
            let cur = input[j];
            let prev = input[(j + input.len() - 1) % input.len()];
            let d_cur = side(cur);
            let d_prev = side(prev);
            let cur_in = d_cur >= -VERTEX_EPS;
            let prev_in = d_prev >= -VERTEX_EPS;
            if cur_in {
                if !prev_in {
                    output.push(edge_crossing(prev, cur, d_prev, d_cur));
                }
                output.push(cur);
            } else if prev_in {
                output.push(edge_crossing(prev, cur, d_prev, d_cur));
            }
        }
    }
    output
}

fn edge_crossing(p: Point, q: Point, dp: f64, dq: f64) -> Point {
    let t = dp / (dp - dq);
    [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
}

/// Polygon of `a ∩ b`; empty when disjoint.
pub fn intersection_polygon(a: &OrientedBox, b: &OrientedBox) -> Vec<Point> {
    clip_convex(&a.corners(), &b.corners())
}

pub fn intersection_area(a: &OrientedBox, b: &OrientedBox) -> f64 {
    // quick reject on circumscribed circles
    let reach = 0.5 * (a.length.hypot(a.width) + b.length.hypot(b.width));
    if center_distance(a, b) > reach {
        return 0.0;
    }
    let inter = polygon_area(&intersection_polygon(a, b));
    if inter < SLIVER_AREA {
        0.0
    } else {
        let smaller = area(a).min(area(b));
        // clipping round-off: a box fully inside the other gets its exact area
        if inter >= smaller * (1.0 - CONTAINMENT_EPS) {
            smaller
        } else {
            inter
        }
    }
}

/// Intersection over union of a detection and a ground-truth box.
pub fn iou(d: &OrientedBox, g: &OrientedBox) -> f64 {
    let inter = intersection_area(d, g);
    if inter == 0.0 {
        return 0.0;
    }
    let union = area(d) + area(g) - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Fraction of the ground truth `g` covered by the detection `d`.
///
/// When `d` fully contains `g` the ratio `|D| / |G|` is returned instead, so
/// oversized detections produce values above 1.
pub fn cover(d: &OrientedBox, g: &OrientedBox) -> f64 {
    let g_area = area(g);
    let inter = intersection_area(d, g);
    if inter >= g_area * (1.0 - VERTEX_EPS) {
        area(d) / g_area
    } else {
        inter / g_area
    }
}

/// Euclidean distance between box centers.
pub fn center_distance(a: &OrientedBox, b: &OrientedBox) -> f64 {
    (a.center_x - b.center_x).hypot(a.center_y - b.center_y)
}

/// Maximum distance of the evaluation range, used to normalize distances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRange {
    max_distance: f64,
}

impl EvaluationRange {
    pub fn new(max_distance: f64) -> Result<Self, Error> {
        if !(max_distance > 0.0 && max_distance.is_finite()) {
            return Err(Error::Config(format!(
                "evaluation range must be positive, got {max_distance}"
            )));
        }
        Ok(Self { max_distance })
    }

    pub fn max_distance(&self) -> f64 {
        self.max_distance
    }
}

impl Default for EvaluationRange {
    fn default() -> Self {
        Self { max_distance: 100.0 }
    }
}

/// Distance between ego and object divided by the evaluation range, clamped to `[0, 1]`.
pub fn normalized_distance(ego_xy: Point, obj_xy: Point, range: &EvaluationRange) -> f64 {
    let d = (ego_xy[0] - obj_xy[0]).hypot(ego_xy[1] - obj_xy[1]);
    (d / range.max_distance).clamp(0.0, 1.0)
}
