//! Bird's-eye-view geometry: range and bearing, rotation about the sensor,
//! rectangle membership, and oriented-box collision.
//!
//! Collision is decided with the separating-axis test in [`boxes_collide`].
//! [`oracle_boxes_collide`] answers the same question by clipping one footprint
//! against the other and measuring the overlap area; it shares no code with the
//! SAT path and exists to cross-check it.

use crate::types::Box3D;

pub type Vec2 = [f64; 2];

/// Radial distance from the sensor in the ground plane.
pub fn bev_range(p: Vec2) -> f64 {
    (p[0] * p[0] + p[1] * p[1]).sqrt()
}

/// Bearing of `p` in (-π, π].
pub fn azimuth(p: Vec2) -> f64 {
    p[1].atan2(p[0])
}

pub fn rotate_about_origin(p: Vec2, angle: f64) -> Vec2 {
    let (s, c) = angle.sin_cos();
    [c * p[0] - s * p[1], s * p[0] + c * p[1]]
}

/// Rectangle in the ground plane; `rotation` is the angle of its local u-axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BevRect {
    pub center: Vec2,
    pub half_extent: Vec2,
    pub rotation: f64,
}

impl BevRect {
    pub fn new(center: Vec2, half_extent: Vec2, rotation: f64) -> Self {
        debug_assert!(half_extent[0] > 0.0 && half_extent[1] > 0.0);
        Self {
            center,
            half_extent,
            rotation,
        }
    }

    pub fn to_local(&self, p: Vec2) -> Vec2 {
        let (s, c) = self.rotation.sin_cos();
        let dx = p[0] - self.center[0];
        let dy = p[1] - self.center[1];
        [c * dx + s * dy, -s * dx + c * dy]
    }

    /// Boundary-inclusive.
    pub fn contains(&self, p: Vec2) -> bool {
        let [u, v] = self.to_local(p);
        u.abs() <= self.half_extent[0] && v.abs() <= self.half_extent[1]
    }

    /// The same rectangle carried rigidly about the sensor origin by `angle`.
    pub fn rotated_about_origin(&self, angle: f64) -> Self {
        Self {
            center: rotate_about_origin(self.center, angle),
            half_extent: self.half_extent,
            rotation: self.rotation + angle,
        }
    }
}

pub fn rect_contains(rect: &BevRect, p: Vec2) -> bool {
    rect.contains(p)
}

/// Footprint corners in counter-clockwise order, starting at rear-right.
pub fn box_bev_polygon(b: &Box3D) -> [Vec2; 4] {
    let (s, c) = b.yaw.sin_cos();
    let hl = 0.5 * b.size[0];
    let hw = 0.5 * b.size[1];
    let corner = |u: f64, v: f64| [b.center[0] + c * u - s * v, b.center[1] + s * u + c * v];
    [
        corner(-hl, -hw),
        corner(hl, -hw),
        corner(hl, hw),
        corner(-hl, hw),
    ]
}

fn project(poly: &[Vec2; 4], axis: Vec2) -> (f64, f64) {
    poly.iter()
        .map(|p| p[0] * axis[0] + p[1] * axis[1])
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)))
}

/// True iff the footprints overlap with positive area. Touching edges or corners do not collide.
pub fn boxes_collide(a: &Box3D, b: &Box3D) -> bool {
    let pa = box_bev_polygon(a);
    let pb = box_bev_polygon(b);
    let axes = [a.yaw, b.yaw].into_iter().flat_map(|yaw| {
        let (s, c) = yaw.sin_cos();
        [[c, s], [-s, c]]
    });
    for axis in axes {
        let (min_a, max_a) = project(&pa, axis);
        let (min_b, max_b) = project(&pb, axis);
        if max_a <= min_b || max_b <= min_a {
            return false;
        }
    }
    true
}

/// Polygon-clipping collision check: returns (overlap area > 0, overlap area in m²).
pub fn oracle_boxes_collide(a: &Box3D, b: &Box3D) -> (bool, f64) {
    let subject = box_bev_polygon(a).to_vec();
    let clip = box_bev_polygon(b);
    let area = polygon_area(&clip_convex(subject, &clip));
    (area > 0.0, area)
}

fn cross(o: Vec2, a: Vec2, p: Vec2) -> f64 {
    (a[0] - o[0]) * (p[1] - o[1]) - (a[1] - o[1]) * (p[0] - o[0])
}

/// Sutherland–Hodgman: clips `subject` to the interior of the counter-clockwise convex `clip`.
pub fn clip_convex(mut subject: Vec<Vec2>, clip: &[Vec2]) -> Vec<Vec2> {
    for i in 0..clip.len() {
        if subject.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % clip.len()];
        let input = std::mem::take(&mut subject);
        for j in 0..input.len() {
            let cur = input[j];
            let prev = input[(j + input.len() - 1) % input.len()];
            let dc = cross(a, b, cur);
            let dp = cross(a, b, prev);
            if dc >= 0.0 {
                if dp < 0.0 {
                    subject.push(intersect(prev, cur, dp, dc));
                }
                subject.push(cur);
            } else if dp >= 0.0 {
                subject.push(intersect(prev, cur, dp, dc));
            }
        }
    }
    subject
}

fn intersect(p: Vec2, q: Vec2, dp: f64, dq: f64) -> Vec2 {
    let t = dp / (dp - dq);
    [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
}

/// Shoelace area, absolute value.
pub fn polygon_area(poly: &[Vec2]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let twice: f64 = (0..poly.len())
        .map(|i| {
            let p = poly[i];
            let q = poly[(i + 1) % poly.len()];
            p[0] * q[1] - q[0] * p[1]
        })
        .sum();
    0.5 * twice.abs()
}
