//! Planar geometry shared by every stage: points, poses and polylines.

use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};
use std::ops::{Add, Mul, Neg, Sub};

/// Wraps an angle into `(-pi, pi]`.
pub fn normalize_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(TAU);
    if r > PI {
        r -= TAU;
    }
    // rem_euclid can return TAU itself for tiny negative inputs
    if r <= -PI {
        r += TAU;
    }
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_angle(a: f64) -> Self {
        Self::new(a.cos(), a.sin())
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z component of the 3-D cross product.
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn normalized(self) -> Vec2 {
        let n = self.norm();
        Vec2::new(self.x / n, self.y / n)
    }

    /// Counter-clockwise perpendicular.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn rotated(self, a: f64) -> Vec2 {
        let (s, c) = a.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn distance(self, o: Vec2) -> f64 {
        (self - o).norm()
    }

    pub fn lerp(self, o: Vec2, t: f64) -> Vec2 {
        self + (o - self) * t
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Planar pose. `psi` is kept in `(-pi, pi]` by every constructor.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub psi: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, psi: f64) -> Self {
        Self {
            x,
            y,
            psi: normalize_angle(psi),
        }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn heading(&self) -> Vec2 {
        Vec2::from_angle(self.psi)
    }

    /// Maps a point expressed in this pose's body frame into the parent frame.
    pub fn to_parent(&self, p: Vec2) -> Vec2 {
        p.rotated(self.psi) + self.position()
    }

    /// Maps a point expressed in the parent frame into this pose's body frame.
    pub fn to_local(&self, p: Vec2) -> Vec2 {
        (p - self.position()).rotated(-self.psi)
    }

    /// Composition `self ∘ other`: `other` is expressed in `self`'s body frame.
    pub fn compose(&self, other: &Pose2) -> Pose2 {
        let p = self.to_parent(other.position());
        Pose2::new(p.x, p.y, self.psi + other.psi)
    }

    /// The pose of `other` expressed in this pose's body frame.
    pub fn relative(&self, other: &Pose2) -> Pose2 {
        let p = self.to_local(other.position());
        Pose2::new(p.x, p.y, other.psi - self.psi)
    }
}

/// Closest point on segment `[a, b]` to `p`, with the segment parameter in `[0, 1]`.
pub fn closest_on_segment(a: Vec2, b: Vec2, p: Vec2) -> (Vec2, f64) {
    let ab = b - a;
    let len_sq = ab.norm_sq();
    if len_sq == 0.0 {
        return (a, 0.0);
    }
    let t = ((p - a).dot(ab) / len_sq).clamp(0.0, 1.0);
    (a + ab * t, t)
}

/// Result of projecting a point onto a polyline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolylineProjection {
    pub segment: usize,
    pub point: Vec2,
    pub distance: f64,
    /// Unit tangent of the segment holding the nearest point.
    pub tangent: Vec2,
    /// Arc length from the polyline start to the nearest point.
    pub arc_length: f64,
}

/// Nearest point on a polyline (at least two vertices).
pub fn project_onto_polyline(line: &[Vec2], p: Vec2) -> Option<PolylineProjection> {
    if line.len() < 2 {
        return None;
    }
    let mut best: Option<PolylineProjection> = None;
    let mut walked = 0.0;
    for (i, w) in line.windows(2).enumerate() {
        let (q, t) = closest_on_segment(w[0], w[1], p);
        let d = q.distance(p);
        let seg_len = w[0].distance(w[1]);
        if best.is_none_or(|b| d < b.distance) {
            let tangent = if seg_len > 0.0 {
                (w[1] - w[0]) * (1.0 / seg_len)
            } else {
                Vec2::new(1.0, 0.0)
            };
            best = Some(PolylineProjection {
                segment: i,
                point: q,
                distance: d,
                tangent,
                arc_length: walked + t * seg_len,
            });
        }
        walked += seg_len;
    }
    best
}

/// Signed perpendicular offset of `p` from the polyline: positive to the left of
/// the direction of travel. Beyond either end the end segment is extended.
pub fn signed_offset(line: &[Vec2], p: Vec2) -> Option<f64> {
    let proj = project_onto_polyline(line, p)?;
    let a = line[proj.segment];
    Some(proj.tangent.cross(p - a))
}

pub fn polyline_length(line: &[Vec2]) -> f64 {
    line.windows(2).map(|w| w[0].distance(w[1])).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn angle_wraps_into_half_open_interval() {
        assert_abs_diff_eq!(normalize_angle(PI), PI);
        assert_abs_diff_eq!(normalize_angle(-PI), PI);
        assert_abs_diff_eq!(normalize_angle(3.0 * PI), PI, epsilon = 1e-12);
        assert_abs_diff_eq!(normalize_angle(-0.5), -0.5);
        assert_abs_diff_eq!(normalize_angle(TAU + 0.25), 0.25, epsilon = 1e-12);
    }

    #[test]
    fn pose_local_parent_roundtrip() {
        let pose = Pose2::new(1.0, -2.0, 0.7);
        let p = Vec2::new(0.3, 4.0);
        let back = pose.to_parent(pose.to_local(p));
        assert_abs_diff_eq!(back.x, p.x, epsilon = 1e-12);
        assert_abs_diff_eq!(back.y, p.y, epsilon = 1e-12);
        let rel = pose.relative(&pose.compose(&Pose2::new(0.5, 0.1, 0.2)));
        assert_abs_diff_eq!(rel.x, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(rel.y, 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(rel.psi, 0.2, epsilon = 1e-12);
    }

    #[test]
    fn signed_offset_is_left_positive() {
        let line = [Vec2::new(0.0, 0.0), Vec2::new(10.0, 0.0)];
        assert_abs_diff_eq!(signed_offset(&line, Vec2::new(3.0, 0.2)).unwrap(), 0.2);
        assert_abs_diff_eq!(signed_offset(&line, Vec2::new(3.0, -0.2)).unwrap(), -0.2);
        // past the end the last segment is extended
        assert_abs_diff_eq!(signed_offset(&line, Vec2::new(12.0, -0.1)).unwrap(), -0.1);
    }
}
