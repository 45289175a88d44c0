//! Image-based visual servoing grasp controller.
//!
//! Every frame, each camera that sees the cube yields an image error
//! `e = goal - centroid` and its finite-difference rate. The camera with the
//! largest visible object area drives a per-axis PD law for the lateral hand
//! velocity while the hand descends at a constant rate. Fingers close once the
//! error lies inside a box that is wide along the closing axis and narrow
//! across it.

use std::collections::BTreeMap;

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::percept::{CameraModel, Observation, PerceptError};
use crate::plant::{ControlAction, PlantConfig};
use crate::polygon::Pt;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    /// Proportional gain, m/s per unit of normalized image error.
    pub kp: f64,
    /// Derivative gain, m/s per unit/s of image error rate.
    pub kd: f64,
    /// Per-axis lateral speed limit, m/s.
    pub vmax: f64,
    /// Descent rate, m/s.
    pub descent: f64,
    pub close_ex: f64,
    pub close_ey: f64,
    /// Frame rate, Hz.
    pub rate: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            kp: 0.3,
            kd: 0.06,
            vmax: 0.3,
            descent: 0.075,
            close_ex: 0.8,
            close_ey: 0.15,
            rate: 25.0,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<(), String> {
        let all = [
            ("kp", self.kp),
            ("kd", self.kd),
            ("vmax", self.vmax),
            ("descent", self.descent),
            ("close_ex", self.close_ex),
            ("close_ey", self.close_ey),
            ("rate", self.rate),
        ];
        if let Some((name, _)) = all.iter().find(|(_, v)| !(*v > 0.0)) {
            return Err(format!("control: {name} must be > 0"));
        }
        if self.close_ex >= 1.0 || self.close_ey >= 1.0 {
            return Err("control: close thresholds must be < 1".into());
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.rate
    }
}

/// Where a camera should see the cube, and how its image axes lie in the
/// workspace.
#[derive(Debug, Clone, PartialEq)]
pub struct ServoTarget {
    pub camera_id: String,
    pub goal: Pt,
    pub u_dir: Vector2<f64>,
    pub v_dir: Vector2<f64>,
}

impl ServoTarget {
    pub fn for_camera(camera: &CameraModel, plant: &PlantConfig) -> Result<Self, PerceptError> {
        let goal = camera.desired_point(plant)?;
        let (u_dir, v_dir) = camera.image_axes_in_workspace();
        Ok(Self {
            camera_id: camera.id.clone(),
            goal,
            u_dir,
            v_dir,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageError {
    pub e: Vector2<f64>,
    pub e_dot: Vector2<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ControllerState {
    /// Last visible centroid and its timestamp, per camera.
    previous: BTreeMap<String, (Pt, f64)>,
    pub last_selected: Option<String>,
}

impl ControllerState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn previous(&self, camera_id: &str) -> Option<(Pt, f64)> {
        self.previous.get(camera_id).copied()
    }
}

/// What the controller decided this frame, for traces and tests.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub action: ControlAction,
    pub selected: Option<String>,
    pub error: Option<ImageError>,
}

pub fn image_error(goal: &Pt, centroid: &Pt, previous: Option<(Pt, f64)>, t: f64) -> ImageError {
    let e = goal - centroid;
    let e_dot = match previous {
        Some((prev, t_prev)) if t > t_prev => -(centroid - prev) / (t - t_prev),
        _ => Vector2::zeros(),
    };
    ImageError { e, e_dot }
}

/// Lateral image-axis command, m/s, clamped per axis.
pub fn pd_command(err: &ImageError, config: &ControllerConfig) -> Vector2<f64> {
    (err.e * config.kp + err.e_dot * config.kd).map(|c| c.clamp(-config.vmax, config.vmax))
}

pub fn close_box(e: &Vector2<f64>, config: &ControllerConfig) -> bool {
    e.x.abs() < config.close_ex && e.y.abs() < config.close_ey
}

/// Index of the observation with the largest visible area; earliest wins ties.
pub fn select_camera(observations: &[Observation]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, o) in observations.iter().enumerate() {
        if let (true, Some(a)) = (o.visible, o.area) {
            if best.is_none_or(|(_, b)| a > b) {
                best = Some((i, a));
            }
        }
    }
    best.map(|(i, _)| i)
}

/// One controller frame. Velocities in the returned action are mm/s.
pub fn compute_action(
    state: &ControllerState,
    observations: &[Observation],
    targets: &[ServoTarget],
    config: &ControllerConfig,
    ee_z: f64,
    grasp_height: f64,
) -> (Decision, ControllerState) {
    let mut next = state.clone();
    let mut errors: Vec<Option<ImageError>> = Vec::with_capacity(observations.len());
    for obs in observations {
        let target = targets.iter().find(|t| t.camera_id == obs.camera_id);
        match (obs.visible, obs.centroid, target) {
            (true, Some(c), Some(target)) => {
                let err = image_error(&target.goal, &c, state.previous(&obs.camera_id), obs.t);
                next.previous.insert(obs.camera_id.clone(), (c, obs.t));
                errors.push(Some(err));
            }
            _ => {
                next.previous.remove(&obs.camera_id);
                errors.push(None);
            }
        }
    }

    let selected = select_camera(observations).filter(|&i| errors[i].is_some());
    let Some(idx) = selected else {
        return (
            Decision {
                action: ControlAction::idle(),
                selected: None,
                error: None,
            },
            next,
        );
    };
    let err = errors[idx].expect("selected camera has an error");
    let target = targets
        .iter()
        .find(|t| t.camera_id == observations[idx].camera_id)
        .expect("selected camera has a target");

    let cmd = pd_command(&err, config) * 1000.0;
    let lateral = -(target.u_dir * cmd.x + target.v_dir * cmd.y);
    let descent = config.descent * 1000.0;
    let vz = if ee_z > grasp_height {
        -descent.min((ee_z - grasp_height) * config.rate)
    } else {
        0.0
    };
    next.last_selected = Some(target.camera_id.clone());
    (
        Decision {
            action: ControlAction {
                v: Vector3::new(lateral.x, lateral.y, vz),
                close: close_box(&err.e, config),
            },
            selected: Some(target.camera_id.clone()),
            error: Some(err),
        },
        next,
    )
}
