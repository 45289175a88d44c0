//! Geometric world state: the moving platform, the cube resting on it, the
//! end-effector and its two-finger parallel gripper.
//!
//! There is no dynamics engine. Contacts are resolved quasi-statically: a
//! finger that overlaps the cube pushes it by the minimum horizontal
//! translation that removes the overlap. Pushes that are too violent, or that
//! shove the cube past the platform edge, drop the cube off the platform.
//!
//! Frames: world x,y lie in the platform plane with z up from the platform
//! top. `ee_pos` is the fingertip centre point (midway between the fingertips).
//! The fingers close along world x and hang from the hand down to `ee_pos.z`.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::gcode::MotionTimeline;
use crate::geometry::Point;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantConfig {
    pub cube_side: f64,
    pub platform_top_z: f64,
    pub home_height: f64,
    pub finger_gap_open: f64,
    pub finger_length: f64,
    pub finger_thickness: f64,
    pub finger_width: f64,
    /// Fingertip height at which the hand stops descending. Defaults to half
    /// the cube side when unset.
    pub grasp_height_z: Option<f64>,
    pub close_speed: f64,
    pub vmax_axis: f64,
    pub descent_speed: f64,
    /// Largest push the cube survives in one tick, mm.
    pub push_limit: f64,
    /// Minimum finger/cube overlap along y for a stable pinch, as a fraction
    /// of the cube side.
    pub overlap_min: f64,
    /// Half side of the square object platform, mm.
    pub platform_half: f64,
    /// Time constant of the arm's first-order response to lateral velocity
    /// commands, s. Zero tracks commands instantly. The vertical axis always
    /// tracks instantly.
    pub lateral_response_time: f64,
}

impl Default for PlantConfig {
    fn default() -> Self {
        Self {
            cube_side: 30.0,
            platform_top_z: 0.0,
            home_height: 500.0,
            finger_gap_open: 100.0,
            finger_length: 50.0,
            finger_thickness: 15.0,
            finger_width: 20.0,
            grasp_height_z: None,
            close_speed: 200.0,
            vmax_axis: 300.0,
            descent_speed: 75.0,
            push_limit: 20.0,
            overlap_min: 0.3,
            platform_half: 130.0,
            lateral_response_time: 0.1,
        }
    }
}

impl PlantConfig {
    pub fn with_cube(cube_side: f64) -> Self {
        Self {
            cube_side,
            ..Self::default()
        }
    }

    pub fn grasp_height(&self) -> f64 {
        self.grasp_height_z
            .unwrap_or(self.platform_top_z + self.cube_side / 2.0)
    }

    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("cube_side", self.cube_side),
            ("home_height", self.home_height),
            ("finger_gap_open", self.finger_gap_open),
            ("finger_length", self.finger_length),
            ("finger_thickness", self.finger_thickness),
            ("finger_width", self.finger_width),
            ("close_speed", self.close_speed),
            ("vmax_axis", self.vmax_axis),
            ("descent_speed", self.descent_speed),
            ("push_limit", self.push_limit),
            ("overlap_min", self.overlap_min),
            ("platform_half", self.platform_half),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| !(*v > 0.0)) {
            return Err(format!("plant: {name} must be > 0"));
        }
        if !(self.lateral_response_time >= 0.0) || !self.lateral_response_time.is_finite() {
            return Err("plant: lateral_response_time must be >= 0".into());
        }
        if self.cube_side >= self.finger_gap_open {
            return Err("plant: cube_side must be smaller than finger_gap_open".into());
        }
        if self.grasp_height() >= self.home_height {
            return Err("plant: grasp height must be below the home height".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectStatus {
    OnPlatform,
    Grasped,
    Knocked,
    OffPlatform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GripperMode {
    Open,
    Closing,
    Closed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Closure {
    Grasped,
    Knocked,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantState {
    pub t: f64,
    pub platform_pos: Point,
    pub object_center: Vector3<f64>,
    /// Cube displacement relative to the platform centre, accumulated from
    /// pushes. Zero until a finger touches the cube.
    pub object_offset: Vector2<f64>,
    pub object_status: ObjectStatus,
    pub ee_pos: Vector3<f64>,
    /// Velocity actually achieved over the last step, mm/s.
    pub ee_vel: Vector3<f64>,
    pub gripper_gap: f64,
    pub gripper_mode: GripperMode,
}

/// End-effector velocity command (mm/s) plus the close-fingers request.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlAction {
    pub v: Vector3<f64>,
    pub close: bool,
}

impl ControlAction {
    pub fn idle() -> Self {
        Self {
            v: Vector3::zeros(),
            close: false,
        }
    }
}

pub fn init(config: &PlantConfig, timeline: &MotionTimeline) -> PlantState {
    let platform = timeline.position_at_time(0.0);
    PlantState {
        t: 0.0,
        platform_pos: platform,
        object_center: Vector3::new(
            platform.x,
            platform.y,
            config.platform_top_z + config.cube_side / 2.0,
        ),
        object_offset: Vector2::zeros(),
        object_status: ObjectStatus::OnPlatform,
        ee_pos: Vector3::new(0.0, 0.0, config.home_height),
        ee_vel: Vector3::zeros(),
        gripper_gap: config.finger_gap_open,
        gripper_mode: GripperMode::Open,
    }
}

/// Axis-aligned box as `(min, max)` corners.
type Aabb = (Vector3<f64>, Vector3<f64>);

fn cube_box(center: &Vector3<f64>, side: f64) -> Aabb {
    let h = Vector3::repeat(side / 2.0);
    (center - h, center + h)
}

/// The two finger volumes for a given gap, `[-x finger, +x finger]`.
pub fn finger_boxes(ee: &Vector3<f64>, gap: f64, config: &PlantConfig) -> [Aabb; 2] {
    let half_w = config.finger_width / 2.0;
    let inner = gap / 2.0;
    let outer = inner + config.finger_thickness;
    let z0 = ee.z;
    let z1 = ee.z + config.finger_length;
    [
        (
            Vector3::new(ee.x - outer, ee.y - half_w, z0),
            Vector3::new(ee.x - inner, ee.y + half_w, z1),
        ),
        (
            Vector3::new(ee.x + inner, ee.y - half_w, z0),
            Vector3::new(ee.x + outer, ee.y + half_w, z1),
        ),
    ]
}

fn interval_overlap(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    a1.min(b1) - a0.max(b0)
}

/// Overlap between the cube and the finger width band along y, mm.
pub fn finger_y_overlap(state: &PlantState, config: &PlantConfig) -> f64 {
    let dy = state.object_center.y - state.ee_pos.y;
    let h = config.cube_side / 2.0;
    let w = config.finger_width / 2.0;
    interval_overlap(dy - h, dy + h, -w, w).max(0.0)
}

fn z_overlap(ee: &Vector3<f64>, center: &Vector3<f64>, config: &PlantConfig) -> f64 {
    let h = config.cube_side / 2.0;
    interval_overlap(ee.z, ee.z + config.finger_length, center.z - h, center.z + h)
}

/// Decide whether a closed gripper holds the cube.
pub fn classify_closure(state: &PlantState, config: &PlantConfig) -> Closure {
    let side = config.cube_side;
    let dx = state.object_center.x - state.ee_pos.x;
    let centred = dx.abs() <= (config.finger_gap_open - side) / 2.0;
    let overlap = finger_y_overlap(state, config) >= config.overlap_min * side;
    let reaches = state.ee_pos.z <= state.object_center.z + side / 2.0;
    let resting = matches!(
        state.object_status,
        ObjectStatus::OnPlatform | ObjectStatus::Grasped
    );
    if centred && overlap && reaches && resting {
        Closure::Grasped
    } else {
        Closure::Knocked
    }
}

fn clamp_velocity(v: &Vector3<f64>, vmax: f64) -> Vector3<f64> {
    v.map(|c| c.clamp(-vmax, vmax))
}

/// Advance the world by `dt` seconds under `action`.
pub fn step(
    state: &PlantState,
    action: &ControlAction,
    timeline: &MotionTimeline,
    dt: f64,
    config: &PlantConfig,
) -> PlantState {
    let mut next = state.clone();
    next.t = state.t + dt;
    next.platform_pos = timeline.position_at_time(next.t);

    let cmd = clamp_velocity(&action.v, config.vmax_axis);
    let alpha = if config.lateral_response_time > 0.0 {
        1.0 - (-dt / config.lateral_response_time).exp()
    } else {
        1.0
    };
    let mut v = state.ee_vel + (cmd - state.ee_vel) * alpha;
    v.z = cmd.z;
    next.ee_vel = v;
    next.ee_pos = state.ee_pos + v * dt;
    next.ee_pos.z = next.ee_pos.z.max(config.platform_top_z);
    let ee_delta = next.ee_pos - state.ee_pos;

    let rest_z = config.platform_top_z + config.cube_side / 2.0;
    match state.object_status {
        ObjectStatus::OnPlatform | ObjectStatus::Knocked => {
            next.object_center = Vector3::new(
                next.platform_pos.x + next.object_offset.x,
                next.platform_pos.y + next.object_offset.y,
                rest_z,
            );
        }
        ObjectStatus::Grasped => next.object_center += ee_delta,
        ObjectStatus::OffPlatform => {}
    }

    if action.close && state.gripper_mode == GripperMode::Open {
        next.gripper_mode = GripperMode::Closing;
    }

    let mut pinched = false;
    if next.gripper_mode == GripperMode::Closing {
        let gap = (state.gripper_gap - config.close_speed * dt).max(0.0);
        next.gripper_gap = gap;
        if next.object_status == ObjectStatus::OnPlatform && in_jaws(state, &next, config) {
            let h = config.cube_side / 2.0;
            if gap <= config.cube_side {
                next.gripper_gap = config.cube_side;
                let dx = next.object_center.x - next.ee_pos.x;
                push(&mut next, Vector2::new(-dx, 0.0), config);
                pinched = true;
            } else {
                let limit = gap / 2.0 - h;
                let dx = next.object_center.x - next.ee_pos.x;
                if dx.abs() > limit {
                    push(&mut next, Vector2::new(dx.signum() * limit - dx, 0.0), config);
                }
            }
        }
        if pinched || next.gripper_gap == 0.0 {
            next.gripper_mode = GripperMode::Closed;
        }
    } else if next.gripper_mode == GripperMode::Open
        && next.object_status == ObjectStatus::OnPlatform
        && in_jaws(state, &next, config)
    {
        // Open fingers still wall the cube in along the closing axis.
        let limit = next.gripper_gap / 2.0 - config.cube_side / 2.0;
        let dx = next.object_center.x - next.ee_pos.x;
        if dx.abs() > limit {
            push(&mut next, Vector2::new(dx.signum() * limit - dx, 0.0), config);
        }
    }

    if !pinched && next.object_status == ObjectStatus::OnPlatform {
        resolve_finger_overlap(&mut next, config);
    }

    if next.object_status == ObjectStatus::OnPlatform {
        let rel = next.object_offset;
        if rel.x.abs() > config.platform_half || rel.y.abs() > config.platform_half {
            next.object_status = ObjectStatus::OffPlatform;
        }
    }

    if next.gripper_mode == GripperMode::Closed && state.gripper_mode != GripperMode::Closed {
        next.object_status = match classify_closure(&next, config) {
            Closure::Grasped => ObjectStatus::Grasped,
            Closure::Knocked if next.object_status == ObjectStatus::OffPlatform => {
                ObjectStatus::OffPlatform
            }
            Closure::Knocked => ObjectStatus::Knocked,
        };
    }
    next
}

/// The cube sat between the finger faces at the start of the tick and still
/// shares height and width with the fingers.
fn in_jaws(prev: &PlantState, next: &PlantState, config: &PlantConfig) -> bool {
    let h = config.cube_side / 2.0;
    let prev_dx = prev.object_center.x - prev.ee_pos.x;
    let between = prev_dx.abs() + h <= prev.gripper_gap / 2.0 + 1e-9;
    between
        && finger_y_overlap(next, config) > 0.0
        && z_overlap(&next.ee_pos, &next.object_center, config) > 0.0
}

/// Translate the cube on the platform; too large a shove knocks it off.
fn push(state: &mut PlantState, delta: Vector2<f64>, config: &PlantConfig) {
    if delta.norm() > config.push_limit {
        state.object_status = ObjectStatus::OffPlatform;
        return;
    }
    state.object_offset += delta;
    state.object_center.x += delta.x;
    state.object_center.y += delta.y;
}

fn resolve_finger_overlap(state: &mut PlantState, config: &PlantConfig) {
    for finger in finger_boxes(&state.ee_pos, state.gripper_gap, config) {
        if state.object_status != ObjectStatus::OnPlatform {
            return;
        }
        let (cmin, cmax) = cube_box(&state.object_center, config.cube_side);
        let (fmin, fmax) = finger;
        let ox = interval_overlap(cmin.x, cmax.x, fmin.x, fmax.x);
        let oy = interval_overlap(cmin.y, cmax.y, fmin.y, fmax.y);
        let oz = interval_overlap(cmin.z, cmax.z, fmin.z, fmax.z);
        if ox <= 0.0 || oy <= 0.0 || oz <= 0.0 {
            continue;
        }
        // Smallest shove along x or y that separates cube and finger.
        let sep = |cmin: f64, cmax: f64, fmin: f64, fmax: f64| {
            let pos = fmax - cmin;
            let neg = fmin - cmax;
            if pos <= -neg {
                pos
            } else {
                neg
            }
        };
        let sx = sep(cmin.x, cmax.x, fmin.x, fmax.x);
        let sy = sep(cmin.y, cmax.y, fmin.y, fmax.y);
        let delta = if sx.abs() <= sy.abs() {
            Vector2::new(sx, 0.0)
        } else {
            Vector2::new(0.0, sy)
        };
        push(state, delta, config);
    }
}
