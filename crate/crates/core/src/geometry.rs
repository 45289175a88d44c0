//! Planar path primitives shared by the trajectory generator and the
//! G-code planner.

use std::f64::consts::TAU;

use nalgebra::{Point2, Vector2};
use serde::{Deserialize, Serialize};

/// A point in the platform plane, millimetres.
pub type Point = Point2<f64>;

/// One piece of a planar path: a straight line or a circular arc.
///
/// Arc sweeps are signed: positive is counter-clockwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PathElement {
    Line {
        start: Point,
        end: Point,
    },
    Arc {
        center: Point,
        radius: f64,
        start_angle: f64,
        sweep: f64,
    },
}

impl PathElement {
    pub fn length(&self) -> f64 {
        match *self {
            PathElement::Line { start, end } => (end - start).norm(),
            PathElement::Arc { radius, sweep, .. } => radius * sweep.abs(),
        }
    }

    pub fn start(&self) -> Point {
        self.point_at(0.0)
    }

    pub fn end(&self) -> Point {
        match *self {
            PathElement::Line { end, .. } => end,
            PathElement::Arc { .. } => self.point_at(self.length()),
        }
    }

    /// Point at distance `s` from the element start. `s` is clamped to the
    /// element length.
    pub fn point_at(&self, s: f64) -> Point {
        let s = s.clamp(0.0, self.length());
        match *self {
            PathElement::Line { start, end } => {
                let len = (end - start).norm();
                if len == 0.0 {
                    start
                } else {
                    start + (end - start) * (s / len)
                }
            }
            PathElement::Arc {
                center,
                radius,
                start_angle,
                sweep,
            } => {
                let angle = start_angle + sweep.signum() * s / radius;
                center + Vector2::new(angle.cos(), angle.sin()) * radius
            }
        }
    }

    /// Tangent heading (radians) at distance `s` from the element start.
    pub fn heading_at(&self, s: f64) -> f64 {
        match *self {
            PathElement::Line { start, end } => {
                let d = end - start;
                d.y.atan2(d.x)
            }
            PathElement::Arc {
                radius,
                start_angle,
                sweep,
                ..
            } => {
                let s = s.clamp(0.0, self.length());
                let dir = sweep.signum();
                start_angle + dir * s / radius + dir * std::f64::consts::FRAC_PI_2
            }
        }
    }

    /// Axis-aligned bounding box as `(min, max)`.
    pub fn bounds(&self) -> (Point, Point) {
        match *self {
            PathElement::Line { start, end } => (
                Point::new(start.x.min(end.x), start.y.min(end.y)),
                Point::new(start.x.max(end.x), start.y.max(end.y)),
            ),
            PathElement::Arc {
                center,
                radius,
                start_angle,
                sweep,
            } => {
                let a = self.start();
                let b = self.end();
                let mut min = Point::new(a.x.min(b.x), a.y.min(b.y));
                let mut max = Point::new(a.x.max(b.x), a.y.max(b.y));
                // Axis extremes at multiples of a quarter turn that fall inside the sweep.
                let (lo, hi) = if sweep >= 0.0 {
                    (start_angle, start_angle + sweep)
                } else {
                    (start_angle + sweep, start_angle)
                };
                let first = (lo / std::f64::consts::FRAC_PI_2).ceil() as i64;
                let last = (hi / std::f64::consts::FRAC_PI_2).floor() as i64;
                for k in first..=last {
                    let ang = k as f64 * std::f64::consts::FRAC_PI_2;
                    let p = center + Vector2::new(ang.cos(), ang.sin()) * radius;
                    min = Point::new(min.x.min(p.x), min.y.min(p.y));
                    max = Point::new(max.x.max(p.x), max.y.max(p.y));
                }
                (min, max)
            }
        }
    }
}

/// Wrap an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(TAU);
    if r > std::f64::consts::PI {
        r -= TAU;
    }
    r
}
