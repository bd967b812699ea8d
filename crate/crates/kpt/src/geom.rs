//! Minimal 2D vector and line kit.
//!
//! Everything in this crate works in image coordinates: x grows to the
//! right, y grows down, and coordinates are pixel-centered (the center of
//! pixel `(3, 7)` is the point `(3.0, 7.0)`). The "left" of a direction `d`
//! is the side reached by rotating `d` by 90 degrees counter-clockwise in
//! these coordinates, which is the unit normal `(d.y, -d.x)`. This one
//! convention is used everywhere: intersection pair ordering, thickness
//! sides, head rotation and collapse detection.

use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn dot(self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 3D cross product of `self` and `other`.
    pub fn cross(self, other: Point2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn dist(self, other: Point2) -> f64 {
        (self - other).norm()
    }

    pub fn normalized(self) -> Result<Point2> {
        let n = self.norm();
        if !n.is_finite() || n < 1e-12 {
            return Err(Error::Geometry(format!(
                "cannot normalize near-zero vector ({}, {})",
                self.x, self.y
            )));
        }
        Ok(self * (1.0 / n))
    }

    /// Unit normal pointing to the left of `self` under the image-coordinate
    /// convention (see module docs).
    pub fn left_normal(self) -> Point2 {
        Point2::new(self.y, -self.x)
    }

    /// Rotates counter-clockwise in image coordinates; `rotate_ccw(d, pi/2)`
    /// equals `d.left_normal()`.
    pub fn rotate_ccw(self, angle: f64) -> Point2 {
        let (s, c) = angle.sin_cos();
        self * c + self.left_normal() * s
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, rhs: f64) -> Point2 {
        Point2::new(self.x * rhs, self.y * rhs)
    }
}

impl Neg for Point2 {
    type Output = Point2;
    fn neg(self) -> Point2 {
        Point2::new(-self.x, -self.y)
    }
}

/// The angle `theta` in `(-pi, pi]` with `from.rotate_ccw(theta)` parallel to
/// `to`. Inputs need not be unit length.
pub fn signed_angle(from: Point2, to: Point2) -> f64 {
    f64::atan2(to.dot(from.left_normal()), to.dot(from))
}

/// A directed line through `origin`. The direction is unit length (enforced
/// at construction within 1e-9).
#[derive(Debug, Clone, Copy)]
pub struct LineQuery {
    pub origin: Point2,
    pub direction: Point2,
}

impl LineQuery {
    pub fn new(origin: Point2, direction: Point2) -> Result<Self> {
        if !origin.is_finite() || !direction.is_finite() {
            return Err(Error::Geometry("non-finite line parameters".into()));
        }
        Ok(LineQuery {
            origin,
            direction: direction.normalized()?,
        })
    }

    pub fn point_at(&self, t: f64) -> Point2 {
        self.origin + self.direction * t
    }
}

/// Intersection of two (infinite) lines. Returns the parameters along each
/// line and the point, or `None` for near-parallel lines.
pub fn line_intersection(a: &LineQuery, b: &LineQuery) -> Option<(f64, f64, Point2)> {
    let denom = a.direction.cross(b.direction);
    if denom.abs() < 1e-12 {
        return None;
    }
    let delta = b.origin - a.origin;
    let ta = delta.cross(b.direction) / denom;
    let tb = delta.cross(a.direction) / denom;
    Some((ta, tb, a.point_at(ta)))
}

/// Orthogonal projection of `point` onto `line`, as (parameter, point).
pub fn project_onto(line: &LineQuery, point: Point2) -> (f64, Point2) {
    let t = (point - line.origin).dot(line.direction);
    (t, line.point_at(t))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn left_normal_of_down_is_plus_x() {
        let n = Point2::new(0.0, 1.0).left_normal();
        assert!((n.x - 1.0).abs() < 1e-12 && n.y.abs() < 1e-12);
    }

    #[test]
    fn rotate_quarter_turn_matches_left_normal() {
        let d = Point2::new(0.6, 0.8);
        let r = d.rotate_ccw(std::f64::consts::FRAC_PI_2);
        let n = d.left_normal();
        assert!(r.dist(n) < 1e-12);
    }

    #[test]
    fn signed_angle_roundtrip() {
        let a = Point2::new(1.0, 0.0);
        for k in 0..16 {
            let theta = -3.0 + 0.4 * k as f64;
            let b = a.rotate_ccw(theta);
            let got = signed_angle(a, b);
            let want = (theta + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU)
                - std::f64::consts::PI;
            assert!(
                (got - want).abs() < 1e-9,
                "theta {theta}: got {got} want {want}"
            );
        }
    }

    #[test]
    fn line_intersection_perpendicular() {
        let a = LineQuery::new(Point2::new(0.0, 0.0), Point2::new(1.0, 0.0)).unwrap();
        let b = LineQuery::new(Point2::new(3.0, -2.0), Point2::new(0.0, 1.0)).unwrap();
        let (ta, tb, p) = line_intersection(&a, &b).unwrap();
        assert!((ta - 3.0).abs() < 1e-12);
        assert!((tb - 2.0).abs() < 1e-12);
        assert!(p.dist(Point2::new(3.0, 0.0)) < 1e-12);
    }

    #[test]
    fn line_intersection_parallel_is_none() {
        let a = LineQuery::new(Point2::new(0.0, 0.0), Point2::new(1.0, 1.0)).unwrap();
        let b = LineQuery::new(Point2::new(0.0, 5.0), Point2::new(2.0, 2.0)).unwrap();
        assert!(line_intersection(&a, &b).is_none());
    }

    #[test]
    fn zero_direction_rejected() {
        assert!(LineQuery::new(Point2::new(0.0, 0.0), Point2::new(0.0, 0.0)).is_err());
    }
}
