//! Planar geometry for the surround sensor and contact checks.

use serde::{Deserialize, Serialize};

/// Axis-aligned rectangle in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Aabb {
    pub fn corners(&self) -> [(f64, f64); 4] {
        [
            (self.x_min, self.y_min),
            (self.x_max, self.y_min),
            (self.x_max, self.y_max),
            (self.x_min, self.y_max),
        ]
    }
}

/// Straight reference line with a Frenet parameterization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StraightPath {
    pub origin: (f64, f64),
    pub heading: f64,
}

impl StraightPath {
    /// `(s, d)`: arc length along the path and signed lateral offset (left positive).
    pub fn project(&self, x: f64, y: f64) -> (f64, f64) {
        let (sin, cos) = self.heading.sin_cos();
        let dx = x - self.origin.0;
        let dy = y - self.origin.1;
        (dx * cos + dy * sin, -dx * sin + dy * cos)
    }

    pub fn heading_error(&self, yaw: f64) -> f64 {
        wrap_angle(yaw - self.heading)
    }
}

/// Wrap to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let w = (a + PI).rem_euclid(TAU) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}

/// Distance along the unit ray from `origin` in direction `dir` to a box, or
/// `None` when the ray misses. Slab method; an origin inside the box yields
/// the exit distance.
pub fn ray_aabb(origin: (f64, f64), dir: (f64, f64), b: &Aabb) -> Option<f64> {
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    for (o, d, lo, hi) in [(origin.0, dir.0, b.x_min, b.x_max), (origin.1, dir.1, b.y_min, b.y_max)] {
        if d.abs() < 1e-15 {
            if o < lo || o > hi {
                return None;
            }
        } else {
            let t1 = (lo - o) / d;
            let t2 = (hi - o) / d;
            t_near = t_near.max(t1.min(t2));
            t_far = t_far.min(t1.max(t2));
        }
    }
    if t_far < t_near || t_far < 0.0 {
        return None;
    }
    Some(if t_near >= 0.0 { t_near } else { t_far })
}

/// Distance to the horizontal line `y = line_y` restricted to `x in [x_lo, x_hi]`.
pub fn ray_horizontal(origin: (f64, f64), dir: (f64, f64), line_y: f64, x_lo: f64, x_hi: f64) -> Option<f64> {
    if dir.1.abs() < 1e-15 {
        return None;
    }
    let t = (line_y - origin.1) / dir.1;
    if t < 0.0 {
        return None;
    }
    let x = origin.0 + t * dir.0;
    (x_lo..=x_hi).contains(&x).then_some(t)
}

/// Corners of a rectangle of `length` x `width` centred at `(x, y)` and rotated by `yaw`.
pub fn oriented_corners(x: f64, y: f64, yaw: f64, length: f64, width: f64) -> [(f64, f64); 4] {
    let (s, c) = yaw.sin_cos();
    let hl = 0.5 * length;
    let hw = 0.5 * width;
    [(hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw)].map(|(lx, ly)| (x + lx * c - ly * s, y + lx * s + ly * c))
}

fn project(points: &[(f64, f64); 4], axis: (f64, f64)) -> (f64, f64) {
    points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        let v = p.0 * axis.0 + p.1 * axis.1;
        (lo.min(v), hi.max(v))
    })
}

/// Separating-axis overlap test of an oriented rectangle against a box.
pub fn rect_overlaps_aabb(corners: &[(f64, f64); 4], b: &Aabb) -> bool {
    let bc = b.corners();
    let e0 = (corners[1].0 - corners[0].0, corners[1].1 - corners[0].1);
    let e1 = (corners[2].0 - corners[1].0, corners[2].1 - corners[1].1);
    [(1.0, 0.0), (0.0, 1.0), e0, e1].iter().all(|&axis| {
        let (a_lo, a_hi) = project(corners, axis);
        let (b_lo, b_hi) = project(&bc, axis);
        a_hi >= b_lo && b_hi >= a_lo
    })
}
