//! One dynamic grasp attempt, from the home pose to the outcome.
//!
//! 1. The hand starts at its home height with the fingers open.
//! 2. Controller and platform start on the same tick.
//! 3. The hand follows the controller until the fingers are closed.
//! 4. A closed hand lifts.
//! 5. The attempt is classified.
//!
//! Finger closure is only honoured once the hand has finished its descent to
//! the grasp height.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{compute_action, ControllerConfig, ControllerState, ServoTarget};
use crate::gcode::{self, GcodeError, MotionTimeline, PlannerConfig};
use crate::percept::{PerceptError, PerceptionConfig};
use crate::plant::{self, ControlAction, GripperMode, ObjectStatus, PlantConfig, PlantState};
use crate::traj::{generate, TrajError, Trajectory, TrajectoryParams};

#[derive(Debug, Error)]
pub enum TrialError {
    #[error(transparent)]
    Trajectory(#[from] TrajError),
    #[error(transparent)]
    Gcode(#[from] GcodeError),
    #[error(transparent)]
    Perception(#[from] PerceptError),
    #[error("trial: invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrajectorySource {
    Generate(TrajectoryParams),
    Given(Trajectory),
}

impl TrajectorySource {
    pub fn resolve(&self) -> Result<Trajectory, TrajError> {
        match self {
            TrajectorySource::Generate(p) => generate(p),
            TrajectorySource::Given(t) => Ok(t.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialConfig {
    pub trajectory: TrajectorySource,
    /// Platform speed, mm/s.
    pub speed: f64,
    pub plant: PlantConfig,
    pub perception: PerceptionConfig,
    pub controller: ControllerConfig,
    pub planner: PlannerConfig,
    /// Consecutive blind frames before the attempt is abandoned.
    pub loss_frames: usize,
    /// Seconds allowed before the fingers must close.
    pub max_duration: f64,
    /// Lift distance after closure, mm.
    pub lift_height: f64,
    /// When false the cube is hidden from every camera.
    pub object_visible: bool,
    pub record_trace: bool,
}

impl TrialConfig {
    pub fn new(trajectory: TrajectorySource, speed: f64, plant: PlantConfig, perception: PerceptionConfig) -> Self {
        Self {
            trajectory,
            speed,
            plant,
            perception,
            controller: ControllerConfig::default(),
            planner: PlannerConfig::default(),
            loss_frames: 12,
            max_duration: 30.0,
            lift_height: 100.0,
            object_visible: true,
            record_trace: false,
        }
    }

    pub fn validate(&self) -> Result<(), TrialError> {
        if !(self.speed > 0.0 && self.speed <= crate::traj::PLATFORM_MAX_SPEED) {
            return Err(TrialError::Config(format!("speed {} must lie in (0, 250] mm/s", self.speed)));
        }
        if self.loss_frames < 1 {
            return Err(TrialError::Config("loss_frames must be >= 1".into()));
        }
        if !(self.max_duration > 0.0) || !(self.lift_height >= 0.0) {
            return Err(TrialError::Config("max_duration must be > 0 and lift_height >= 0".into()));
        }
        self.plant.validate().map_err(TrialError::Config)?;
        self.controller.validate().map_err(TrialError::Config)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    GraspFailure,
    PerceptionFailure,
    Timeout,
}

impl Outcome {
    pub fn label(self) -> &'static str {
        match self {
            Outcome::Success => "success",
            Outcome::GraspFailure => "grasp_failure",
            Outcome::PerceptionFailure => "perception_failure",
            Outcome::Timeout => "timeout",
        }
    }
}

/// One row of the per-tick plant trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub state: PlantState,
    pub selected: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub outcome: Outcome,
    /// Seconds from the start tick to finger closure, for successes.
    pub grasp_time: Option<f64>,
    /// Controller frames processed before the outcome was decided.
    pub frames: usize,
    /// Longest run of consecutive frames with no camera seeing the cube.
    pub longest_blind_run: usize,
    pub trace: Option<Vec<TraceRow>>,
}

impl TrialResult {
    pub fn to_toml(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "outcome = \"{}\"", self.outcome.label());
        if let Some(t) = self.grasp_time {
            let _ = writeln!(s, "grasp_time_s = {t}");
        }
        let _ = writeln!(s, "frames = {}", self.frames);
        let _ = writeln!(s, "longest_blind_run = {}", self.longest_blind_run);
        s
    }
}

pub const TRACE_HEADER: &str =
    "t,platform_x,platform_y,object_x,object_y,object_z,ee_x,ee_y,ee_z,gripper_gap,mode,object_status,camera";

pub fn trace_csv(rows: &[TraceRow]) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for r in rows {
        let s = &r.state;
        let mode = match s.gripper_mode {
            GripperMode::Open => "open",
            GripperMode::Closing => "closing",
            GripperMode::Closed => "closed",
        };
        let status = match s.object_status {
            ObjectStatus::OnPlatform => "on_platform",
            ObjectStatus::Grasped => "grasped",
            ObjectStatus::Knocked => "knocked",
            ObjectStatus::OffPlatform => "off_platform",
        };
        let _ = writeln!(
            out,
            "{:.4},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{},{},{}",
            s.t,
            s.platform_pos.x,
            s.platform_pos.y,
            s.object_center.x,
            s.object_center.y,
            s.object_center.z,
            s.ee_pos.x,
            s.ee_pos.y,
            s.ee_pos.z,
            s.gripper_gap,
            mode,
            status,
            r.selected.as_deref().unwrap_or("")
        );
    }
    out
}

/// Platform motion for a trial: the trajectory exported to G-code and planned
/// back, exactly as the physical platform would receive it.
pub fn platform_timeline(traj: &Trajectory, speed: f64, planner: &PlannerConfig) -> Result<MotionTimeline, TrialError> {
    let program = traj.emit_gcode(speed)?;
    Ok(gcode::load(&program, planner, crate::geometry::Point::origin())?)
}

pub fn run_trial(config: &TrialConfig) -> Result<TrialResult, TrialError> {
    config.validate()?;
    let traj = config.trajectory.resolve()?;
    let timeline = platform_timeline(&traj, config.speed, &config.planner)?;
    let cameras = config.perception.cameras(&config.plant)?;
    let targets = cameras
        .iter()
        .map(|c| ServoTarget::for_camera(c, &config.plant))
        .collect::<Result<Vec<_>, _>>()?;

    let pc = &config.plant;
    let rate = config.controller.rate;
    let dt = 1.0 / rate;
    let grasp_height = pc.grasp_height();
    let max_ticks = (config.max_duration * rate).round() as usize;

    let mut state = plant::init(pc, &timeline);
    let mut ctrl = ControllerState::new();
    let mut trace = config.record_trace.then(Vec::new);
    let mut blind_run = 0usize;
    let mut longest_blind = 0usize;

    let finish = |outcome, grasp_time, frames, longest_blind_run, trace| TrialResult {
        outcome,
        grasp_time,
        frames,
        longest_blind_run,
        trace,
    };

    for tick in 0..max_ticks {
        let observations: Vec<_> = cameras
            .iter()
            .map(|c| {
                let mut o = c.observe(&state, pc.cube_side);
                if !config.object_visible {
                    o.visible = false;
                    o.centroid = None;
                    o.area = None;
                }
                o
            })
            .collect();
        if observations.iter().any(|o| o.visible) {
            blind_run = 0;
        } else {
            blind_run += 1;
            longest_blind = longest_blind.max(blind_run);
            if blind_run >= config.loss_frames {
                return Ok(finish(Outcome::PerceptionFailure, None, tick + 1, longest_blind, trace));
            }
        }

        let (decision, next_ctrl) = compute_action(
            &ctrl,
            &observations,
            &targets,
            &config.controller,
            state.ee_pos.z,
            grasp_height,
        );
        ctrl = next_ctrl;
        let mut action = decision.action;
        if state.ee_pos.z > grasp_height + 1e-9 {
            action.close = false;
        }

        let was_closed = state.gripper_mode == GripperMode::Closed;
        state = plant::step(&state, &action, &timeline, dt, pc);
        if let Some(tr) = trace.as_mut() {
            tr.push(TraceRow {
                state: state.clone(),
                selected: decision.selected.clone(),
            });
        }

        if state.object_status == ObjectStatus::OffPlatform {
            return Ok(finish(Outcome::GraspFailure, None, tick + 1, longest_blind, trace));
        }
        if !was_closed && state.gripper_mode == GripperMode::Closed {
            let grasp_time = (tick + 1) as f64 / rate;
            if state.object_status != ObjectStatus::Grasped {
                return Ok(finish(Outcome::GraspFailure, None, tick + 1, longest_blind, trace));
            }
            let held = lift(&mut state, &timeline, config, trace.as_mut());
            let outcome = if held { Outcome::Success } else { Outcome::GraspFailure };
            let grasp_time = held.then_some(grasp_time);
            return Ok(finish(outcome, grasp_time, tick + 1, longest_blind, trace));
        }
    }
    Ok(finish(Outcome::Timeout, None, max_ticks, longest_blind, trace))
}

/// Raise the closed hand by the lift height; true if the cube came with it.
fn lift(state: &mut PlantState, timeline: &MotionTimeline, config: &TrialConfig, mut trace: Option<&mut Vec<TraceRow>>) -> bool {
    let pc = &config.plant;
    let dt = config.controller.dt();
    let speed = config.controller.descent * 1000.0;
    let start_z = state.ee_pos.z;
    let target = start_z + config.lift_height;
    let offset_z = state.object_center.z - state.ee_pos.z;
    while state.ee_pos.z < target - 1e-9 {
        let vz = speed.min((target - state.ee_pos.z) / dt);
        let action = ControlAction {
            v: nalgebra::Vector3::new(0.0, 0.0, vz),
            close: true,
        };
        *state = plant::step(state, &action, timeline, dt, pc);
        if let Some(tr) = trace.as_deref_mut() {
            tr.push(TraceRow {
                state: state.clone(),
                selected: None,
            });
        }
    }
    state.object_status == ObjectStatus::Grasped
        && (state.object_center.z - (state.ee_pos.z + offset_z)).abs() < 1e-9
        && state.object_center.z > pc.platform_top_z + pc.cube_side / 2.0
}
