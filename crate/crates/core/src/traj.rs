//! Random-walk object trajectories: fixed-length straights joined by
//! fixed-radius turning arcs, starting at the workspace centre.
//!
//! Every heading change is realised as a full circular arc whose sweep equals
//! the sampled change, placed between two full-length straights. This keeps
//! the straight length exact for any turn, including reversals.

use std::f64::consts::{FRAC_PI_2, TAU};
use std::fmt::Write as _;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{wrap_angle, PathElement, Point};
use crate::rng::SimRng;

/// Highest platform speed the G-code exporter accepts, mm/s.
pub const PLATFORM_MAX_SPEED: f64 = 250.0;

/// Current version of the trajectory file schema.
pub const TRAJECTORY_SCHEMA: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum TrajError {
    #[error("traj: invalid parameters: {0}")]
    InvalidParams(String),
    #[error("traj: segment {segment} could not be placed inside the bounds after {attempts} direction draws")]
    BoundsUnsatisfiable { segment: usize, attempts: usize },
    #[error("traj: arc length {s} outside [0, {total}]")]
    OutOfRange { s: f64, total: f64 },
    #[error("traj: speed {speed} mm/s exceeds platform limit of {limit} mm/s")]
    SpeedExceedsPlatform { speed: f64, limit: f64 },
    #[error("traj: trajectory file: {0}")]
    File(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectoryParams {
    /// Straight segment length, mm.
    pub segment_length: f64,
    /// Turning arc radius, mm.
    pub fillet_radius: f64,
    /// Smallest heading change magnitude, degrees.
    pub turn_min: f64,
    /// Largest heading change magnitude, degrees.
    pub turn_max: f64,
    pub n_segments: usize,
    /// Half width of the square the path must stay inside, mm.
    pub bounds_half: f64,
    pub seed: u64,
    pub max_resamples: usize,
}

impl Default for TrajectoryParams {
    fn default() -> Self {
        Self {
            segment_length: 50.0,
            fillet_radius: 10.0,
            turn_min: 45.0,
            turn_max: 315.0,
            n_segments: 60,
            bounds_half: 140.0,
            seed: 0,
            max_resamples: 100,
        }
    }
}

impl TrajectoryParams {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), TrajError> {
        let bad = |m: &str| Err(TrajError::InvalidParams(m.to_string()));
        if !(self.segment_length > 0.0) {
            return bad("segment_length must be > 0");
        }
        if !(self.fillet_radius >= 0.0) {
            return bad("fillet_radius must be >= 0");
        }
        if !(self.turn_min > 0.0 && self.turn_min <= self.turn_max && self.turn_max < 360.0) {
            return bad("turn range must satisfy 0 < turn_min <= turn_max < 360");
        }
        if !(self.bounds_half > 0.0) {
            return bad("bounds_half must be > 0");
        }
        if i64::try_from(self.seed).is_err() {
            return bad("seed must be at most 2^63 - 1 so files can record it");
        }
        Ok(())
    }
}

/// Draws the raw random quantities of the walk.
#[derive(Debug, Clone)]
pub struct HeadingSampler {
    rng: SimRng,
    turn_min: f64,
    turn_max: f64,
}

impl HeadingSampler {
    pub fn new(params: &TrajectoryParams) -> Self {
        Self {
            rng: SimRng::new(params.seed),
            turn_min: params.turn_min,
            turn_max: params.turn_max,
        }
    }

    /// Uniform initial heading in `[0, 2pi)`.
    pub fn initial_heading(&mut self) -> f64 {
        self.rng.range(0.0, TAU)
    }

    /// Unsigned direction change in degrees, uniform in `[turn_min, turn_max]`.
    pub fn turn_magnitude_deg(&mut self) -> f64 {
        self.rng.range(self.turn_min, self.turn_max)
    }

    /// Signed arc sweep for the next turn, radians, `|sweep| <= pi`.
    pub fn turn_sweep(&mut self) -> f64 {
        turn_to_sweep(self.turn_magnitude_deg())
    }
}

/// Map a direction change in `[0, 360)` degrees to a signed sweep in `(-pi, pi]`.
pub fn turn_to_sweep(turn_deg: f64) -> f64 {
    if turn_deg <= 180.0 {
        turn_deg.to_radians()
    } else {
        (turn_deg - 360.0).to_radians()
    }
}

/// Inverse of [`turn_to_sweep`].
pub fn sweep_to_turn(sweep: f64) -> f64 {
    let deg = sweep.to_degrees();
    if deg > 0.0 {
        deg
    } else {
        deg + 360.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSample {
    pub position: Point,
    pub heading: f64,
    pub arc_length: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    elements: Vec<PathElement>,
    /// Arc length at the start of each element.
    offsets: Vec<f64>,
    total_length: f64,
    params: TrajectoryParams,
}

impl Trajectory {
    pub fn from_elements(params: TrajectoryParams, elements: Vec<PathElement>) -> Self {
        let mut offsets = Vec::with_capacity(elements.len());
        let mut acc = 0.0;
        for e in &elements {
            offsets.push(acc);
            acc += e.length();
        }
        Self {
            elements,
            offsets,
            total_length: acc,
            params,
        }
    }

    /// The motionless path: no elements, zero length.
    pub fn stationary() -> Self {
        Self::from_elements(
            TrajectoryParams {
                n_segments: 0,
                ..TrajectoryParams::default()
            },
            Vec::new(),
        )
    }

    pub fn elements(&self) -> &[PathElement] {
        &self.elements
    }

    pub fn total_length(&self) -> f64 {
        self.total_length
    }

    pub fn params(&self) -> &TrajectoryParams {
        &self.params
    }

    pub fn end_point(&self) -> Point {
        self.elements.last().map_or(Point::origin(), |e| e.end())
    }

    pub fn position_at(&self, s: f64) -> Result<PathSample, TrajError> {
        if !(0.0..=self.total_length).contains(&s) {
            return Err(TrajError::OutOfRange {
                s,
                total: self.total_length,
            });
        }
        if self.elements.is_empty() {
            return Ok(PathSample {
                position: Point::origin(),
                heading: 0.0,
                arc_length: 0.0,
            });
        }
        let idx = self.offsets.partition_point(|&o| o <= s).saturating_sub(1);
        let elem = &self.elements[idx];
        let local = s - self.offsets[idx];
        Ok(PathSample {
            position: elem.point_at(local),
            heading: wrap_angle(elem.heading_at(local)),
            arc_length: s,
        })
    }

    /// Platform position after `t` seconds at constant path speed; the platform
    /// holds at the path end.
    pub fn position_at_time(&self, speed: f64, t: f64) -> Point {
        let s = (speed * t).clamp(0.0, self.total_length);
        self.position_at(s)
            .expect("clamped arc length is in range")
            .position
    }

    /// Grbl-dialect program that drives the platform along this path.
    pub fn emit_gcode(&self, speed: f64) -> Result<String, TrajError> {
        if !(speed > 0.0) {
            return Err(TrajError::InvalidParams("speed must be > 0".into()));
        }
        if speed > PLATFORM_MAX_SPEED {
            return Err(TrajError::SpeedExceedsPlatform {
                speed,
                limit: PLATFORM_MAX_SPEED,
            });
        }
        let feed = fmt_num(speed * 60.0);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "; random-walk trajectory seed={} segments={} speed={} mm/s",
            self.params.seed,
            self.params.n_segments,
            fmt_num(speed)
        );
        out.push_str("G21\nG90\n");
        for e in &self.elements {
            match *e {
                PathElement::Line { end, .. } => {
                    let _ = writeln!(out, "G1 X{} Y{} F{}", fmt_num(end.x), fmt_num(end.y), feed);
                }
                PathElement::Arc { center, sweep, .. } => {
                    let start = e.start();
                    let end = e.end();
                    let word = if sweep < 0.0 { "G2" } else { "G3" };
                    let _ = writeln!(
                        out,
                        "{} X{} Y{} I{} J{} F{}",
                        word,
                        fmt_num(end.x),
                        fmt_num(end.y),
                        fmt_num(center.x - start.x),
                        fmt_num(center.y - start.y),
                        feed
                    );
                }
            }
        }
        Ok(out)
    }

    pub fn to_toml(&self) -> String {
        let file = TrajectoryFile {
            schema_version: TRAJECTORY_SCHEMA,
            total_length: self.total_length,
            params: self.params.clone(),
            elements: self.elements.clone(),
        };
        toml::to_string(&file).expect("trajectory serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self, TrajError> {
        let file: TrajectoryFile =
            toml::from_str(text).map_err(|e| TrajError::File(e.to_string()))?;
        if file.schema_version != TRAJECTORY_SCHEMA {
            return Err(TrajError::File(format!(
                "unsupported schema_version {} (expected {})",
                file.schema_version, TRAJECTORY_SCHEMA
            )));
        }
        Ok(Self::from_elements(file.params, file.elements))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrajectoryFile {
    schema_version: u32,
    total_length: f64,
    params: TrajectoryParams,
    elements: Vec<PathElement>,
}

/// Decimal rendering with 8 fractional digits, trailing zeros trimmed.
fn fmt_num(x: f64) -> String {
    let s = format!("{:.8}", x);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

fn direction(heading: f64) -> Vector2<f64> {
    Vector2::new(heading.cos(), heading.sin())
}

fn inside(p: Point, half: f64) -> bool {
    p.x.abs() <= half && p.y.abs() <= half
}

fn element_inside(e: &PathElement, half: f64) -> bool {
    let (min, max) = e.bounds();
    inside(min, half) && inside(max, half)
}

/// Build the turning arc that starts at `at` with heading `heading`.
fn turn_arc(at: Point, heading: f64, radius: f64, sweep: f64) -> PathElement {
    let side = sweep.signum();
    let center = at + direction(heading + side * FRAC_PI_2) * radius;
    PathElement::Arc {
        center,
        radius,
        start_angle: wrap_angle(heading - side * FRAC_PI_2),
        sweep,
    }
}

pub fn generate(params: &TrajectoryParams) -> Result<Trajectory, TrajError> {
    params.validate()?;
    let mut sampler = HeadingSampler::new(params);
    let half = params.bounds_half;
    // Straights end far enough from the walls that a turning arc of any
    // sweep still fits; the arc stays within two radii of its start point.
    let end_half = half - 2.0 * params.fillet_radius;
    let len = params.segment_length;
    let mut elements = Vec::with_capacity(params.n_segments * 2);

    if params.n_segments == 0 {
        return Ok(Trajectory::from_elements(params.clone(), elements));
    }

    let mut first = None;
    for _ in 0..=params.max_resamples {
        let h = sampler.initial_heading();
        let line = PathElement::Line {
            start: Point::origin(),
            end: Point::origin() + direction(h) * len,
        };
        if inside(line.end(), end_half) {
            first = Some((line, h));
            break;
        }
    }
    let (line, mut heading) = first.ok_or(TrajError::BoundsUnsatisfiable {
        segment: 0,
        attempts: params.max_resamples + 1,
    })?;
    let mut cursor = line.end();
    elements.push(line);

    for segment in 1..params.n_segments {
        let mut placed = false;
        for _ in 0..=params.max_resamples {
            let sweep = sampler.turn_sweep();
            let next_heading = wrap_angle(heading + sweep);
            let arc = (params.fillet_radius > 0.0)
                .then(|| turn_arc(cursor, heading, params.fillet_radius, sweep));
            let line_start = arc.as_ref().map_or(cursor, |a| a.end());
            let line = PathElement::Line {
                start: line_start,
                end: line_start + direction(next_heading) * len,
            };
            if !inside(line.end(), end_half) || arc.as_ref().is_some_and(|a| !element_inside(a, half)) {
                continue;
            }
            elements.extend(arc);
            cursor = line.end();
            heading = next_heading;
            elements.push(line);
            placed = true;
            break;
        }
        if !placed {
            return Err(TrajError::BoundsUnsatisfiable {
                segment,
                attempts: params.max_resamples + 1,
            });
        }
    }
    Ok(Trajectory::from_elements(params.clone(), elements))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn lines(t: &Trajectory) -> impl Iterator<Item = &PathElement> {
        t.elements()
            .iter()
            .filter(|e| matches!(e, PathElement::Line { .. }))
    }

    #[test]
    fn segment_and_fillet_sizes() {
        for seed in 0..20 {
            let t = generate(&TrajectoryParams {
                seed,
                n_segments: 15,
                ..Default::default()
            })
            .unwrap();
            assert_eq!(lines(&t).count(), 15);
            for e in t.elements() {
                match *e {
                    PathElement::Line { .. } => assert_abs_diff_eq!(e.length(), 50.0, epsilon = 1e-9),
                    PathElement::Arc { radius, sweep, .. } => {
                        assert_eq!(radius, 10.0);
                        assert!(sweep.abs() >= 45f64.to_radians() - 1e-12);
                        assert!(sweep.abs() <= PI + 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn starts_at_origin() {
        let t = generate(&TrajectoryParams::with_seed(3)).unwrap();
        assert_eq!(t.position_at(0.0).unwrap().position, Point::origin());
        assert_eq!(t.position_at_time(150.0, 0.0), Point::origin());
    }

    #[test]
    fn straight_prefix_arithmetic() {
        let t = Trajectory::from_elements(
            TrajectoryParams::default(),
            vec![PathElement::Line {
                start: Point::origin(),
                end: Point::new(50.0, 0.0),
            }],
        );
        let s = t.position_at(25.0).unwrap();
        assert_eq!(s.position, Point::new(25.0, 0.0));
        assert_eq!(s.heading, 0.0);
    }

    #[test]
    fn out_of_range() {
        let t = generate(&TrajectoryParams::with_seed(1)).unwrap();
        assert!(matches!(t.position_at(-1.0), Err(TrajError::OutOfRange { .. })));
        assert!(matches!(
            t.position_at(t.total_length() + 1e-6),
            Err(TrajError::OutOfRange { .. })
        ));
        assert!(t.position_at(t.total_length()).is_ok());
    }

    #[test]
    fn time_clamps_at_end() {
        let t = generate(&TrajectoryParams::with_seed(2)).unwrap();
        let time = (t.total_length() + 10.0) / 100.0;
        assert_eq!(t.position_at_time(100.0, time), t.end_point());
    }

    #[test]
    fn speed_scaling_visits_same_points() {
        let t = generate(&TrajectoryParams::with_seed(9)).unwrap();
        for k in 0..50 {
            let time = k as f64 * 0.1;
            if 200.0 * time > t.total_length() {
                break;
            }
            assert_eq!(t.position_at_time(100.0, time), t.position_at_time(200.0, time / 2.0));
        }
    }

    #[test]
    fn turn_mapping_round_trips() {
        for deg in [45.0, 90.0, 180.0, 181.0, 270.0, 315.0] {
            assert_abs_diff_eq!(sweep_to_turn(turn_to_sweep(deg)), deg, epsilon = 1e-9);
        }
        assert!(turn_to_sweep(315.0) < 0.0);
        assert_abs_diff_eq!(turn_to_sweep(315.0), -45f64.to_radians(), epsilon = 1e-12);
    }

    #[test]
    fn invalid_params_rejected() {
        let p = TrajectoryParams {
            turn_max: 360.0,
            ..Default::default()
        };
        assert!(matches!(generate(&p), Err(TrajError::InvalidParams(_))));
        let p = TrajectoryParams {
            segment_length: 0.0,
            ..Default::default()
        };
        assert!(generate(&p).is_err());
    }

    #[test]
    fn impossible_bounds_fail_loudly() {
        let p = TrajectoryParams {
            bounds_half: 30.0,
            n_segments: 3,
            ..Default::default()
        };
        assert!(matches!(
            generate(&p),
            Err(TrajError::BoundsUnsatisfiable { segment: 0, .. })
        ));
    }

    #[test]
    fn speed_cap_enforced() {
        let t = generate(&TrajectoryParams::with_seed(1)).unwrap();
        assert!(matches!(
            t.emit_gcode(251.0),
            Err(TrajError::SpeedExceedsPlatform { .. })
        ));
        assert!(t.emit_gcode(250.0).is_ok());
    }

    #[test]
    fn gcode_feed_words() {
        let t = generate(&TrajectoryParams::with_seed(4)).unwrap();
        let g = t.emit_gcode(100.0).unwrap();
        let motion: Vec<_> = g
            .lines()
            .filter(|l| matches!(l.split_whitespace().next(), Some("G1" | "G2" | "G3")))
            .collect();
        assert_eq!(motion.len(), t.elements().len());
        assert!(motion.iter().all(|l| l.ends_with(" F6000")));
    }

    #[test]
    fn single_line_gcode() {
        let t = Trajectory::from_elements(
            TrajectoryParams::default(),
            vec![PathElement::Line {
                start: Point::origin(),
                end: Point::new(50.0, 0.0),
            }],
        );
        let g = t.emit_gcode(100.0).unwrap();
        let motion: Vec<_> = g.lines().filter(|l| l.starts_with("G1 ")).collect();
        assert_eq!(motion, vec!["G1 X50 Y0 F6000"]);
    }

    #[test]
    fn file_round_trip() {
        let t = generate(&TrajectoryParams::with_seed(11)).unwrap();
        let back = Trajectory::from_toml(&t.to_toml()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn number_format() {
        assert_eq!(fmt_num(6000.0), "6000");
        assert_eq!(fmt_num(-0.0000000001), "0");
        assert_eq!(fmt_num(1.5), "1.5");
    }
}
