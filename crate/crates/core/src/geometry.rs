//! Planar primitives and the predicates every connectivity query is built on.
//!
//! Conventions, fixed crate-wide:
//! - discs are open: two discs are adjacent iff their centers are strictly
//!   closer than the sum of their radii, so tangent discs are disjoint;
//! - rectangles (windows, crossing boxes, ℓ∞-balls) are closed;
//! - a disc *touches* a side of a rectangle iff its closed disk meets the
//!   closed side segment.

use std::f64::consts::PI;
use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disc {
    pub cx: f64,
    pub cy: f64,
    pub radius: f64,
}

impl Disc {
    pub fn new(cx: f64, cy: f64, radius: f64) -> Self {
        debug_assert!(radius > 0.0, "disc radius must be positive");
        Disc { cx, cy, radius }
    }

    pub fn center(&self) -> Point {
        Point::new(self.cx, self.cy)
    }

    pub fn overlaps(&self, other: &Disc) -> bool {
        let (dx, dy) = (self.cx - other.cx, self.cy - other.cy);
        let s = self.radius + other.radius;
        dx * dx + dy * dy < s * s
    }

    pub fn contains_point(&self, p: Point) -> bool {
        let (dx, dy) = (p.x - self.cx, p.y - self.cy);
        dx * dx + dy * dy < self.radius * self.radius
    }

    /// Open disc meets closed rectangle.
    pub fn meets_rect(&self, rect: &Rect) -> bool {
        rect.dist2_to(self.center()) < self.radius * self.radius
    }

    /// Some point of the open disc lies outside the closed rectangle.
    pub fn leaves_rect(&self, rect: &Rect) -> bool {
        self.cx - self.radius < rect.x0
            || self.cx + self.radius > rect.x1
            || self.cy - self.radius < rect.y0
            || self.cy + self.radius > rect.y1
    }

    /// Closed disk meets the closed segment `a`–`b`.
    pub fn touches_segment(&self, a: Point, b: Point) -> bool {
        segment_dist2(self.center(), a, b) <= self.radius * self.radius
    }

    /// Open disc is disjoint from the closed Euclidean ball B(0, l).
    pub fn avoids_ball(&self, l: f64) -> bool {
        self.center().norm() >= self.radius + l
    }

    pub fn bbox(&self) -> Rect {
        Rect {
            x0: self.cx - self.radius,
            y0: self.cy - self.radius,
            x1: self.cx + self.radius,
            y1: self.cy + self.radius,
        }
    }

    pub fn scaled(&self, s: f64) -> Disc {
        Disc::new(self.cx * s, self.cy * s, self.radius * s)
    }

    /// Rotation by +90° about the origin. Exact in floating point.
    pub fn rotated90(&self) -> Disc {
        Disc::new(-self.cy, self.cx, self.radius)
    }

    /// Parameter interval `(t0, t1)` of the line `a + t(b - a)` inside the
    /// open disc, or `None`.
    fn chord_params(&self, a: Point, b: Point) -> Option<(f64, f64)> {
        let d = b.sub(a);
        let f = a.sub(self.center());
        let qa = d.dot(d);
        if qa == 0.0 {
            return None;
        }
        let qb = 2.0 * f.dot(d);
        let qc = f.dot(f) - self.radius * self.radius;
        let disc = qb * qb - 4.0 * qa * qc;
        if disc <= 0.0 {
            return None;
        }
        let sq = disc.sqrt();
        Some(((-qb - sq) / (2.0 * qa), (-qb + sq) / (2.0 * qa)))
    }
}

/// A point of `a ∩ b ∩ rect` (open discs, closed rectangle), if any.
///
/// The lens `a ∩ b` is convex and connected, so it meets the rectangle iff
/// it meets one of the four sides or lies entirely inside it; in the latter
/// case the midpoint of its axis segment is a witness.
pub fn lens_rect_witness(a: &Disc, b: &Disc, rect: &Rect) -> Option<Point> {
    if !a.overlaps(b) {
        return None;
    }
    for (p, q) in rect.sides() {
        let (Some((a0, a1)), Some((b0, b1))) = (a.chord_params(p, q), b.chord_params(p, q)) else {
            continue;
        };
        let lo = a0.max(b0);
        let hi = a1.min(b1);
        if lo < hi && lo < 1.0 && hi > 0.0 {
            let t = 0.5 * (lo.max(0.0) + hi.min(1.0));
            return Some(p.add(q.sub(p).scale(t)));
        }
    }
    let m = lens_midpoint(a, b);
    rect.contains(m).then_some(m)
}

/// Midpoint of the segment of the center line lying in both discs.
pub fn lens_midpoint(a: &Disc, b: &Disc) -> Point {
    let ab = b.center().sub(a.center());
    let d = ab.norm();
    if d == 0.0 {
        return a.center();
    }
    let lo = (-a.radius).max(d - b.radius);
    let hi = a.radius.min(d + b.radius);
    a.center().add(ab.scale(0.5 * (lo + hi) / d))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }
    pub fn scale(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }
    pub fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }
    pub fn cross(self, o: Point) -> f64 {
        self.x * o.y - self.y * o.x
    }
    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }
}

/// Signed angle in (−π, π] swept from `p` to `q` as seen from the origin.
pub fn angle_between(p: Point, q: Point) -> f64 {
    let a = p.cross(q).atan2(p.dot(q));
    if a <= -PI {
        a + 2.0 * PI
    } else {
        a
    }
}

pub(crate) fn segment_dist2(p: Point, a: Point, b: Point) -> f64 {
    let ab = b.sub(a);
    let len2 = ab.dot(ab);
    let t = if len2 == 0.0 { 0.0 } else { (p.sub(a).dot(ab) / len2).clamp(0.0, 1.0) };
    let c = a.add(ab.scale(t)).sub(p);
    c.dot(c)
}

/// Closed axis-aligned rectangle. Used for sampling windows, crossing boxes
/// and ℓ∞-balls Λ(x, r).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

pub type Window = Rect;

impl Rect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        if !(x0 < x1 && y0 < y1) || ![x0, y0, x1, y1].iter().all(|v| v.is_finite()) {
            return Err(invalid(format!("rectangle needs x0 < x1 and y0 < y1, got ({x0}, {y0}, {x1}, {y1})")));
        }
        Ok(Rect { x0, y0, x1, y1 })
    }

    /// ℓ∞-ball Λ(center, half).
    pub fn square(center: Point, half: f64) -> Result<Self> {
        Rect::new(center.x - half, center.y - half, center.x + half, center.y + half)
    }

    /// `[0, w] × [0, h]`.
    pub fn sized(w: f64, h: f64) -> Result<Self> {
        Rect::new(0.0, 0.0, w, h)
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }
    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }
    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn expand(&self, pad: f64) -> Rect {
        Rect { x0: self.x0 - pad, y0: self.y0 - pad, x1: self.x1 + pad, y1: self.y1 + pad }
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.x0 && p.x <= self.x1 && p.y >= self.y0 && p.y <= self.y1
    }

    pub fn contains_rect(&self, o: &Rect) -> bool {
        o.x0 >= self.x0 && o.x1 <= self.x1 && o.y0 >= self.y0 && o.y1 <= self.y1
    }

    pub fn intersects(&self, o: &Rect) -> bool {
        self.x0 <= o.x1 && o.x0 <= self.x1 && self.y0 <= o.y1 && o.y0 <= self.y1
    }

    /// Nearest point of the rectangle to `p`.
    pub fn clamp(&self, p: Point) -> Point {
        Point::new(p.x.clamp(self.x0, self.x1), p.y.clamp(self.y0, self.y1))
    }

    pub fn dist2_to(&self, p: Point) -> f64 {
        let c = self.clamp(p).sub(p);
        c.dot(c)
    }

    /// Left, right, bottom, top sides as segments.
    pub fn sides(&self) -> [(Point, Point); 4] {
        let (a, b, c, d) = (
            Point::new(self.x0, self.y0),
            Point::new(self.x1, self.y0),
            Point::new(self.x1, self.y1),
            Point::new(self.x0, self.y1),
        );
        [(a, d), (b, c), (a, b), (d, c)]
    }

    pub fn scaled(&self, s: f64) -> Rect {
        Rect { x0: self.x0 * s, y0: self.y0 * s, x1: self.x1 * s, y1: self.y1 * s }
    }

    pub fn rotated90(&self) -> Rect {
        Rect { x0: -self.y1, y0: self.x0, x1: -self.y0, y1: self.x1 }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tangent_discs_are_not_adjacent() {
        let a = Disc::new(0.0, 0.0, 1.0);
        assert!(!a.overlaps(&Disc::new(2.0, 0.0, 1.0)));
        assert!(a.overlaps(&Disc::new(1.5, 0.0, 1.0)));
    }

    #[test]
    fn lens_witness_cases() {
        let rect = Rect::new(0.0, 0.0, 4.0, 4.0).unwrap();
        // lens inside the box
        let (a, b) = (Disc::new(1.5, 2.0, 1.0), Disc::new(2.5, 2.0, 1.0));
        let w = lens_rect_witness(&a, &b, &rect).unwrap();
        assert!(a.contains_point(w) && b.contains_point(w) && rect.contains(w));
        // lens straddles the left side
        let (a, b) = (Disc::new(-0.5, 2.0, 1.0), Disc::new(0.5, 2.0, 1.0));
        let w = lens_rect_witness(&a, &b, &rect).unwrap();
        assert!(a.contains_point(w) && b.contains_point(w) && rect.contains(w));
        // discs both meet the box but their lens lies outside it
        let (a, b) = (Disc::new(-1.0, 1.0, 1.2), Disc::new(-1.0, 3.0, 1.2));
        assert!(a.meets_rect(&rect) && b.meets_rect(&rect));
        assert!(lens_rect_witness(&a, &b, &rect).is_none());
        // huge disc covering the box together with a small inner disc
        let (a, b) = (Disc::new(2.0, 2.0, 10.0), Disc::new(3.0, 3.0, 0.1));
        assert!(lens_rect_witness(&a, &b, &rect).is_some());
    }

    #[test]
    fn angle_between_is_principal() {
        let a = angle_between(Point::new(1.0, 0.0), Point::new(0.0, 1.0));
        assert!((a - PI / 2.0).abs() < 1e-15);
        let a = angle_between(Point::new(1.0, 0.0), Point::new(-1.0, 0.0));
        assert_eq!(a, PI);
        let a = angle_between(Point::new(0.0, 1.0), Point::new(1.0, 0.0));
        assert!((a + PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn rotation_of_rect_matches_discs() {
        let r = Rect::new(-1.0, -2.0, 3.0, 5.0).unwrap();
        let d = Disc::new(2.0, 4.0, 0.5);
        assert!(r.rotated90().contains(d.rotated90().center()));
        assert_eq!(r.rotated90().area(), r.area());
    }
}
