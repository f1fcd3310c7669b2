//! Planar geometry in the map frame (meters).

use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

/// Distance below which a point counts as lying on a polygon edge.
pub const BOUNDARY_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn rotated(self, angle: f64) -> Vec2 {
        let (s, c) = angle.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x * rhs, self.y * rhs)
    }
}

fn on_segment(p: Vec2, a: Vec2, b: Vec2) -> bool {
    let ab = b - a;
    let len = ab.norm();
    if len == 0.0 {
        return (p - a).norm() <= BOUNDARY_EPS;
    }
    let dist = (p - a).cross(ab).abs() / len;
    if dist > BOUNDARY_EPS {
        return false;
    }
    let along = (p - a).dot(ab) / len;
    along >= -BOUNDARY_EPS && along <= len + BOUNDARY_EPS
}

/// Even-odd point-in-polygon test; points on an edge count as inside.
pub fn point_in_polygon(p: Vec2, polygon: &[Vec2]) -> bool {
    let n = polygon.len();
    if n < 3 {
        return false;
    }
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (polygon[i], polygon[j]);
        if on_segment(p, a, b) {
            return true;
        }
        if (a.y > p.y) != (b.y > p.y) {
            let x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x_cross {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

fn orientation(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    (b - a).cross(c - a)
}

/// Closed-segment intersection test, including collinear overlap.
pub fn segments_intersect(p1: Vec2, p2: Vec2, q1: Vec2, q2: Vec2) -> bool {
    let d1 = orientation(q1, q2, p1);
    let d2 = orientation(q1, q2, p2);
    let d3 = orientation(p1, p2, q1);
    let d4 = orientation(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(p1, q1, q2))
        || (d2 == 0.0 && on_segment(p2, q1, q2))
        || (d3 == 0.0 && on_segment(q1, p1, p2))
        || (d4 == 0.0 && on_segment(q2, p1, p2))
}

/// O(n²) simplicity check: no repeated consecutive vertices, adjacent edges
/// meet only at their shared vertex, non-adjacent edges never touch.
pub fn is_simple_polygon(polygon: &[Vec2]) -> bool {
    let n = polygon.len();
    if n < 3 || polygon.iter().any(|p| !p.is_finite()) {
        return false;
    }
    let edge = |i: usize| (polygon[i], polygon[(i + 1) % n]);
    for i in 0..n {
        let (a, b) = edge(i);
        if (b - a).norm() == 0.0 {
            return false;
        }
    }
    for i in 0..n {
        let (a, b) = edge(i);
        for j in (i + 1)..n {
            let (c, d) = edge(j);
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                // Shared vertex is expected; folding back along the edge is not.
                let (shared, other_a, other_b) = if j == i + 1 { (b, a, d) } else { (a, b, c) };
                let u = other_a - shared;
                let v = other_b - shared;
                if u.cross(v) == 0.0 && u.dot(v) > 0.0 {
                    return false;
                }
                if n == 3 {
                    continue;
                }
            } else if segments_intersect(a, b, c, d) {
                return false;
            }
        }
    }
    true
}

/// Area centroid of a simple polygon.
pub fn polygon_centroid(polygon: &[Vec2]) -> Vec2 {
    let n = polygon.len();
    let mut area2 = 0.0;
    let mut c = Vec2::default();
    for i in 0..n {
        let a = polygon[i];
        let b = polygon[(i + 1) % n];
        let w = a.cross(b);
        area2 += w;
        c = c + (a + b) * w;
    }
    if area2 == 0.0 {
        let sum = polygon.iter().fold(Vec2::default(), |acc, &p| acc + p);
        return sum * (1.0 / n as f64);
    }
    c * (1.0 / (3.0 * area2))
}

/// Wraps an angle in degrees into (-180, 180].
pub fn wrap_degrees(angle: f64) -> f64 {
    let mut a = angle % 360.0;
    if a <= -180.0 {
        a += 360.0;
    } else if a > 180.0 {
        a -= 360.0;
    }
    a
}

/// Wraps an angle in radians into (-π, π].
pub fn wrap_radians(angle: f64) -> f64 {
    use std::f64::consts::PI;
    let mut a = angle % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Axis-aligned rectangle as a counter-clockwise polygon.
pub fn rectangle(x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<Vec2> {
    vec![
        Vec2::new(x0, y0),
        Vec2::new(x1, y0),
        Vec2::new(x1, y1),
        Vec2::new(x0, y1),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_membership() {
        let sq = rectangle(0.0, 0.0, 2.0, 2.0);
        assert!(point_in_polygon(Vec2::new(1.0, 1.0), &sq));
        assert!(point_in_polygon(Vec2::new(0.0, 1.0), &sq));
        assert!(point_in_polygon(Vec2::new(2.0, 2.0), &sq));
        assert!(!point_in_polygon(Vec2::new(2.5, 1.0), &sq));
        assert!(!point_in_polygon(Vec2::new(-1e-6, 1.0), &sq));
    }

    #[test]
    fn concave_polygon() {
        // U shape opening upwards.
        let u = vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(3.0, 0.0),
            Vec2::new(3.0, 3.0),
            Vec2::new(2.0, 3.0),
            Vec2::new(2.0, 1.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(1.0, 3.0),
            Vec2::new(0.0, 3.0),
        ];
        assert!(is_simple_polygon(&u));
        assert!(point_in_polygon(Vec2::new(0.5, 2.0), &u));
        assert!(!point_in_polygon(Vec2::new(1.5, 2.0), &u));
        assert!(point_in_polygon(Vec2::new(1.5, 1.0), &u));
    }

    #[test]
    fn simplicity() {
        assert!(is_simple_polygon(&rectangle(0.0, 0.0, 1.0, 1.0)));
        let bowtie = vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(0.0, 1.0),
        ];
        assert!(!is_simple_polygon(&bowtie));
        let repeated = vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(0.0, 1.0),
        ];
        assert!(!is_simple_polygon(&repeated));
        let degenerate = vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(2.0, 0.0)];
        assert!(!is_simple_polygon(&degenerate));
        let spike = vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(2.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(1.0, 1.0),
        ];
        assert!(!is_simple_polygon(&spike));
    }

    #[test]
    fn wrapping() {
        assert_eq!(wrap_degrees(180.0), 180.0);
        assert_eq!(wrap_degrees(-180.0), 180.0);
        assert_eq!(wrap_degrees(190.0), -170.0);
        assert_eq!(wrap_degrees(-540.0), 180.0);
        assert!((wrap_radians(3.0 * std::f64::consts::PI) - std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn centroid_of_rectangle() {
        let c = polygon_centroid(&rectangle(0.0, 0.0, 4.0, 2.0));
        assert!((c.x - 2.0).abs() < 1e-12 && (c.y - 1.0).abs() < 1e-12);
    }
}
