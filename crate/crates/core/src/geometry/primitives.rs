//! Small planar primitives shared by every module: points/vectors, segment
//! predicates, polygon area. Everything is plain `f64`; robustness where it
//! matters (point location in meshes) is delegated to the mesher's adaptive
//! predicates, while domain construction works with generous tolerance bands.

use serde::{Deserialize, Serialize};
use std::ops::{Add, Div, Mul, Neg, Sub};

/// A point in the plane, also used as a 2-vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct P2 {
    pub x: f64,
    pub y: f64,
}

pub const fn p2(x: f64, y: f64) -> P2 {
    P2 { x, y }
}

impl P2 {
    pub const ZERO: P2 = p2(0.0, 0.0);

    pub fn dot(self, o: P2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the cross product `self x o`.
    pub fn cross(self, o: P2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm2(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm2().sqrt()
    }

    pub fn dist(self, o: P2) -> f64 {
        (self - o).norm()
    }

    pub fn dist2(self, o: P2) -> f64 {
        (self - o).norm2()
    }

    /// Counterclockwise rotation by 90 degrees.
    pub fn perp(self) -> P2 {
        p2(-self.y, self.x)
    }

    pub fn normalized(self) -> P2 {
        let n = self.norm();
        if n == 0.0 {
            P2::ZERO
        } else {
            self / n
        }
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn lerp(self, o: P2, t: f64) -> P2 {
        self + (o - self) * t
    }

    pub fn rotate(self, theta: f64) -> P2 {
        let (s, c) = theta.sin_cos();
        p2(c * self.x - s * self.y, s * self.x + c * self.y)
    }
}

impl Add for P2 {
    type Output = P2;
    fn add(self, o: P2) -> P2 {
        p2(self.x + o.x, self.y + o.y)
    }
}

impl Sub for P2 {
    type Output = P2;
    fn sub(self, o: P2) -> P2 {
        p2(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for P2 {
    type Output = P2;
    fn mul(self, s: f64) -> P2 {
        p2(self.x * s, self.y * s)
    }
}

impl Div<f64> for P2 {
    type Output = P2;
    fn div(self, s: f64) -> P2 {
        p2(self.x / s, self.y / s)
    }
}

impl Neg for P2 {
    type Output = P2;
    fn neg(self) -> P2 {
        p2(-self.x, -self.y)
    }
}

/// Signed angle from direction `b` to direction `a`, in (-pi, pi].
pub fn angle_between(a: P2, b: P2) -> f64 {
    let raw = a.angle() - b.angle();
    normalize_angle(raw)
}

/// Wrap an angle into (-pi, pi].
pub fn normalize_angle(mut t: f64) -> f64 {
    use std::f64::consts::PI;
    while t > PI {
        t -= 2.0 * PI;
    }
    while t <= -PI {
        t += 2.0 * PI;
    }
    t
}

/// Squared distance from `p` to segment `ab` together with the foot parameter
/// `t` in [0,1] such that the foot is `a + (b-a)*t`.
pub fn point_segment(p: P2, a: P2, b: P2) -> (f64, f64) {
    let ab = b - a;
    let l2 = ab.norm2();
    if l2 == 0.0 {
        return (p.dist2(a), 0.0);
    }
    let t = ((p - a).dot(ab) / l2).clamp(0.0, 1.0);
    let foot = a + ab * t;
    (p.dist2(foot), t)
}

/// Do segments `ab` and `cd` properly intersect (crossing at an interior point
/// of both)? Shared endpoints and touching do not count.
pub fn segments_properly_intersect(a: P2, b: P2, c: P2, d: P2) -> bool {
    let d1 = (b - a).cross(c - a);
    let d2 = (b - a).cross(d - a);
    let d3 = (d - c).cross(a - c);
    let d4 = (d - c).cross(b - c);
    // all four orientations strictly nonzero: touches (shared endpoints,
    // endpoints lying on the other segment) are not proper crossings
    (d1 > 0.0) != (d2 > 0.0)
        && (d3 > 0.0) != (d4 > 0.0)
        && d1 != 0.0
        && d2 != 0.0
        && d3 != 0.0
        && d4 != 0.0
}

/// Intersection parameter of the segment `ab` crossed with segment `cd`,
/// allowing touches. Returns `(t, u)` with the crossing at `a + (b-a)*t` when
/// the segments intersect (including endpoints), `None` for parallel misses.
pub fn segment_intersection(a: P2, b: P2, c: P2, d: P2) -> Option<(f64, f64)> {
    let r = b - a;
    let s = d - c;
    let denom = r.cross(s);
    if denom == 0.0 {
        return None;
    }
    let t = (c - a).cross(s) / denom;
    let u = (c - a).cross(r) / denom;
    if (-1e-12..=1.0 + 1e-12).contains(&t) && (-1e-12..=1.0 + 1e-12).contains(&u) {
        Some((t, u))
    } else {
        None
    }
}

/// Shoelace signed area of a closed polygon (positive = counterclockwise).
pub fn signed_area(pts: &[P2]) -> f64 {
    let n = pts.len();
    let mut s = 0.0;
    for i in 0..n {
        let a = pts[i];
        let b = pts[(i + 1) % n];
        s += a.cross(b);
    }
    0.5 * s
}

pub fn polyline_length(pts: &[P2]) -> f64 {
    pts.windows(2).map(|w| w[0].dist(w[1])).sum()
}

/// Area of the triangle `abc` (signed, positive = counterclockwise).
pub fn tri_area(a: P2, b: P2, c: P2) -> f64 {
    0.5 * (b - a).cross(c - a)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_segment_clamps_to_endpoints() {
        let (d2, t) = point_segment(p2(-1.0, 1.0), p2(0.0, 0.0), p2(2.0, 0.0));
        assert!((d2 - 2.0).abs() < 1e-15);
        assert_eq!(t, 0.0);
        let (d2, t) = point_segment(p2(1.0, 3.0), p2(0.0, 0.0), p2(2.0, 0.0));
        assert!((d2 - 9.0).abs() < 1e-15);
        assert!((t - 0.5).abs() < 1e-15);
    }

    #[test]
    fn proper_intersection_excludes_touching() {
        let a = p2(0.0, 0.0);
        let b = p2(2.0, 2.0);
        assert!(segments_properly_intersect(a, b, p2(0.0, 2.0), p2(2.0, 0.0)));
        // sharing an endpoint is not a proper crossing
        assert!(!segments_properly_intersect(a, b, b, p2(3.0, 0.0)));
        // collinear overlap is not a proper crossing either
        assert!(!segments_properly_intersect(a, b, p2(1.0, 1.0), p2(3.0, 3.0)));
    }

    #[test]
    fn shoelace_matches_known_areas() {
        let square = [p2(0.0, 0.0), p2(1.0, 0.0), p2(1.0, 1.0), p2(0.0, 1.0)];
        assert!((signed_area(&square) - 1.0).abs() < 1e-15);
        let cw: Vec<P2> = square.iter().rev().copied().collect();
        assert!((signed_area(&cw) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn angle_wrapping() {
        use std::f64::consts::PI;
        assert!((normalize_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((angle_between(p2(0.0, 1.0), p2(1.0, 0.0)) - PI / 2.0).abs() < 1e-12);
        assert!((angle_between(p2(1.0, 0.0), p2(0.0, 1.0)) + PI / 2.0).abs() < 1e-12);
    }
}
