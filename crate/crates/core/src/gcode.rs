//! Parser and motion planner for the Grbl G-code subset that drives the
//! object platform.
//!
//! Accepted words: `G21` (millimetres), `G90` (absolute), `G1` linear moves,
//! `G2`/`G3` arcs with `I`/`J` centre offsets, and `X Y I J F` parameters.
//! Comments in parentheses or after `;` are ignored. Anything else, including
//! inch mode, is a syntax error.

use std::f64::consts::TAU;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{PathElement, Point};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GCommand {
    LinearMove {
        x: Option<f64>,
        y: Option<f64>,
        feed: Option<f64>,
    },
    ArcCw {
        x: Option<f64>,
        y: Option<f64>,
        i: f64,
        j: f64,
        feed: Option<f64>,
    },
    ArcCcw {
        x: Option<f64>,
        y: Option<f64>,
        i: f64,
        j: f64,
        feed: Option<f64>,
    },
    SetUnitsMm,
    SetAbsolute,
}

#[derive(Debug, Error, PartialEq)]
pub enum GcodeError {
    #[error("gcode: syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("gcode: plan error at command {index}: {message}")]
    Plan { index: usize, message: String },
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> GcodeError {
    GcodeError::Syntax {
        line,
        column,
        message: message.into(),
    }
}

/// Parse program text into commands in source order.
pub fn parse(text: &str) -> Result<Vec<GCommand>, GcodeError> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let words = tokenize(raw, line)?;
        if words.is_empty() {
            continue;
        }
        parse_line(&words, line, &mut out)?;
    }
    Ok(out)
}

struct Word {
    letter: char,
    value: f64,
    raw: String,
    column: usize,
}

fn tokenize(raw: &str, line: usize) -> Result<Vec<Word>, GcodeError> {
    let chars: Vec<char> = raw.chars().collect();
    let mut words = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c == ';' {
            break;
        } else if c == '(' {
            match chars[i..].iter().position(|&ch| ch == ')') {
                Some(off) => i += off + 1,
                None => return Err(syntax(line, i + 1, "unterminated comment")),
            }
        } else if c.is_ascii_alphabetic() {
            let column = i + 1;
            let letter = c.to_ascii_uppercase();
            i += 1;
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || matches!(chars[i], '.' | '-' | '+')) {
                i += 1;
            }
            let raw: String = chars[start..i].iter().collect();
            let value = raw
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| syntax(line, column, format!("malformed number '{raw}' after {letter}")))?;
            words.push(Word {
                letter,
                value,
                raw,
                column,
            });
        } else {
            return Err(syntax(line, i + 1, format!("unexpected character '{c}'")));
        }
    }
    Ok(words)
}

fn parse_line(words: &[Word], line: usize, out: &mut Vec<GCommand>) -> Result<(), GcodeError> {
    let mut motion: Option<(&Word, u8)> = None;
    let mut params: [Option<f64>; 5] = [None; 5]; // X Y I J F
    for w in words {
        match w.letter {
            'G' => match w.raw.as_str() {
                "21" => out.push(GCommand::SetUnitsMm),
                "90" => out.push(GCommand::SetAbsolute),
                "20" => return Err(syntax(line, w.column, "inch units (G20) are not supported")),
                "1" | "01" | "2" | "02" | "3" | "03" => {
                    if motion.is_some() {
                        return Err(syntax(line, w.column, "more than one motion word on a line"));
                    }
                    motion = Some((w, w.value as u8));
                }
                other => return Err(syntax(line, w.column, format!("unsupported word G{other}"))),
            },
            'X' | 'Y' | 'I' | 'J' | 'F' => {
                let slot = match w.letter {
                    'X' => 0,
                    'Y' => 1,
                    'I' => 2,
                    'J' => 3,
                    _ => 4,
                };
                if params[slot].is_some() {
                    return Err(syntax(line, w.column, format!("repeated word {}", w.letter)));
                }
                if w.letter == 'F' && w.value <= 0.0 {
                    return Err(syntax(line, w.column, "feed must be positive"));
                }
                params[slot] = Some(w.value);
            }
            other => return Err(syntax(line, w.column, format!("unsupported word {other}"))),
        }
    }
    let [x, y, i, j, feed] = params;
    match motion {
        None => {
            if let Some(w) = words.iter().find(|w| w.letter != 'G') {
                return Err(syntax(line, w.column, format!("word {} without a motion command", w.letter)));
            }
        }
        Some((w, 1)) => {
            if i.is_some() || j.is_some() {
                return Err(syntax(line, w.column, "linear move cannot carry I/J"));
            }
            out.push(GCommand::LinearMove { x, y, feed });
        }
        Some((w, code)) => {
            let (Some(i), Some(j)) = (i, j) else {
                return Err(syntax(line, w.column, "arc move requires both I and J centre offsets"));
            };
            out.push(if code == 2 {
                GCommand::ArcCw { x, y, i, j, feed }
            } else {
                GCommand::ArcCcw { x, y, i, j, feed }
            });
        }
    }
    Ok(())
}

/// Platform acceleration limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Accel {
    Infinite,
    Finite(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    /// mm/s
    pub speed_cap: f64,
    pub accel: Accel,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            speed_cap: 250.0,
            accel: Accel::Infinite,
        }
    }
}

/// Velocity along one move.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpeedProfile {
    Constant { speed: f64 },
    /// Rest-to-rest trapezoid (triangular when `cruise_time` is zero).
    Trapezoid {
        peak: f64,
        accel: f64,
        ramp_time: f64,
        cruise_time: f64,
    },
}

impl SpeedProfile {
    fn for_move(length: f64, speed: f64, accel: Accel) -> (Self, f64) {
        match accel {
            Accel::Infinite => (SpeedProfile::Constant { speed }, length / speed),
            Accel::Finite(a) => {
                let ramp_dist = speed * speed / a;
                let (peak, ramp_time, cruise_time) = if ramp_dist <= length {
                    (speed, speed / a, (length - ramp_dist) / speed)
                } else {
                    let peak = (a * length).sqrt();
                    (peak, peak / a, 0.0)
                };
                (
                    SpeedProfile::Trapezoid {
                        peak,
                        accel: a,
                        ramp_time,
                        cruise_time,
                    },
                    2.0 * ramp_time + cruise_time,
                )
            }
        }
    }

    /// Distance covered `tau` seconds into the move.
    pub fn distance_at(&self, tau: f64) -> f64 {
        match *self {
            SpeedProfile::Constant { speed } => speed * tau,
            SpeedProfile::Trapezoid {
                peak,
                accel,
                ramp_time,
                cruise_time,
            } => {
                let ramp_dist = 0.5 * accel * ramp_time * ramp_time;
                if tau <= ramp_time {
                    0.5 * accel * tau * tau
                } else if tau <= ramp_time + cruise_time {
                    ramp_dist + peak * (tau - ramp_time)
                } else {
                    let d = (tau - ramp_time - cruise_time).min(ramp_time);
                    ramp_dist + peak * cruise_time + peak * d - 0.5 * accel * d * d
                }
            }
        }
    }

    pub fn speed_at(&self, tau: f64) -> f64 {
        match *self {
            SpeedProfile::Constant { speed } => speed,
            SpeedProfile::Trapezoid {
                peak,
                accel,
                ramp_time,
                cruise_time,
            } => {
                if tau <= ramp_time {
                    accel * tau
                } else if tau <= ramp_time + cruise_time {
                    peak
                } else {
                    (peak - accel * (tau - ramp_time - cruise_time)).max(0.0)
                }
            }
        }
    }

    pub fn peak_speed(&self) -> f64 {
        match *self {
            SpeedProfile::Constant { speed } => speed,
            SpeedProfile::Trapezoid { peak, .. } => peak,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimedMove {
    pub element: PathElement,
    pub start_time: f64,
    pub duration: f64,
    pub profile: SpeedProfile,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionTimeline {
    moves: Vec<TimedMove>,
    start: Point,
    total_duration: f64,
}

impl MotionTimeline {
    pub fn moves(&self) -> &[TimedMove] {
        &self.moves
    }

    pub fn total_duration(&self) -> f64 {
        self.total_duration
    }

    pub fn start(&self) -> Point {
        self.start
    }

    pub fn final_position(&self) -> Point {
        self.moves.last().map_or(self.start, |m| m.element.end())
    }

    /// Platform position at time `t`; holds the final position after the
    /// program ends.
    pub fn position_at_time(&self, t: f64) -> Point {
        if self.moves.is_empty() || t <= 0.0 {
            return self.start;
        }
        if t >= self.total_duration {
            return self.final_position();
        }
        let idx = self
            .moves
            .partition_point(|m| m.start_time <= t)
            .saturating_sub(1);
        let m = &self.moves[idx];
        let tau = (t - m.start_time).min(m.duration);
        m.element.point_at(m.profile.distance_at(tau))
    }

    /// Instantaneous path speed at time `t`.
    pub fn speed_at_time(&self, t: f64) -> f64 {
        if self.moves.is_empty() || t < 0.0 || t >= self.total_duration {
            return 0.0;
        }
        let idx = self
            .moves
            .partition_point(|m| m.start_time <= t)
            .saturating_sub(1);
        let m = &self.moves[idx];
        m.profile.speed_at(t - m.start_time)
    }
}

/// Turn a command list into a timed platform motion starting at `start`.
pub fn plan(commands: &[GCommand], config: &PlannerConfig, start: Point) -> Result<MotionTimeline, GcodeError> {
    if !(config.speed_cap > 0.0) {
        return Err(GcodeError::Plan {
            index: 0,
            message: "speed_cap must be > 0".into(),
        });
    }
    if let Accel::Finite(a) = config.accel {
        if !(a > 0.0) {
            return Err(GcodeError::Plan {
                index: 0,
                message: "finite acceleration must be > 0".into(),
            });
        }
    }
    let mut units = false;
    let mut absolute = false;
    let mut feed: Option<f64> = None;
    let mut pos = start;
    let mut clock = 0.0;
    let mut moves = Vec::new();

    for (index, cmd) in commands.iter().enumerate() {
        let plan_err = |message: &str| GcodeError::Plan {
            index,
            message: message.to_string(),
        };
        let (x, y, cmd_feed, arc) = match *cmd {
            GCommand::SetUnitsMm => {
                units = true;
                continue;
            }
            GCommand::SetAbsolute => {
                absolute = true;
                continue;
            }
            GCommand::LinearMove { x, y, feed } => (x, y, feed, None),
            GCommand::ArcCw { x, y, i, j, feed } => (x, y, feed, Some((i, j, false))),
            GCommand::ArcCcw { x, y, i, j, feed } => (x, y, feed, Some((i, j, true))),
        };
        if !units || !absolute {
            return Err(plan_err("motion before G21/G90 setup"));
        }
        if let Some(f) = cmd_feed {
            feed = Some(f);
        }
        let Some(feed_mm_min) = feed else {
            return Err(plan_err("motion before any feed rate"));
        };
        let speed = (feed_mm_min / 60.0).min(config.speed_cap);
        let target = Point::new(x.unwrap_or(pos.x), y.unwrap_or(pos.y));

        let element = match arc {
            None => PathElement::Line { start: pos, end: target },
            Some((i, j, ccw)) => {
                let center = pos + Vector2::new(i, j);
                let radius = (pos - center).norm();
                if radius == 0.0 {
                    return Err(plan_err("arc with zero radius"));
                }
                let a0 = (pos.y - center.y).atan2(pos.x - center.x);
                let a1 = (target.y - center.y).atan2(target.x - center.x);
                let mut sweep = if ccw {
                    (a1 - a0).rem_euclid(TAU)
                } else {
                    -(a0 - a1).rem_euclid(TAU)
                };
                if sweep.abs() < 1e-12 {
                    sweep = if ccw { TAU } else { -TAU };
                }
                PathElement::Arc {
                    center,
                    radius,
                    start_angle: a0,
                    sweep,
                }
            }
        };
        let length = element.length();
        pos = target;
        if length == 0.0 {
            continue;
        }
        let (profile, duration) = SpeedProfile::for_move(length, speed, config.accel);
        moves.push(TimedMove {
            element,
            start_time: clock,
            duration,
            profile,
        });
        clock += duration;
    }
    Ok(MotionTimeline {
        moves,
        start,
        total_duration: clock,
    })
}

/// Parse and plan in one step.
pub fn load(text: &str, config: &PlannerConfig, start: Point) -> Result<MotionTimeline, GcodeError> {
    plan(&parse(text)?, config, start)
}
