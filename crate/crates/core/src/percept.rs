//! Eye-in-hand camera models and synthetic cube observations.
//!
//! Segmentation is replaced by exact geometry: the cube is clipped against
//! the camera's near plane, its vertices are projected through a pinhole into
//! normalized image coordinates (`[-1, 1]` across each field of view), and the
//! convex silhouette is clipped to the image square. Static occluder polygons
//! (the fingers, as seen by a wrist camera) are cut out before the centroid and
//! area are measured.
//!
//! Camera frame convention: +z is the optical axis, +x is image right (`u`),
//! +y is image down (`v`). A camera with zero yaw and pitch looks straight
//! down with `u` along world +x and `v` along world -y.

use std::f64::consts::PI;

use nalgebra::{Isometry3, Matrix3, Point3, Rotation3, Translation3, UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plant::{finger_boxes, PlantConfig, PlantState};
use crate::polygon::{self, Pt};

/// Near clipping distance, mm.
pub const NEAR_PLANE: f64 = 1.0;

/// Smallest visible area (fraction of the image) that counts as a detection.
pub const MIN_VISIBLE_AREA: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum PerceptError {
    #[error("percept: camera '{camera}': grasp centre projects outside the image at ({u:.3}, {v:.3})")]
    GoalOutsideView { camera: String, u: f64, v: f64 },
    #[error("percept: camera '{camera}': {message}")]
    InvalidCamera { camera: String, message: String },
    #[error("percept: dual-hand cameras must have distinct ids (got '{0}' twice)")]
    DuplicateId(String),
}

/// Serializable description of a camera mount, as written in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraSpec {
    pub id: String,
    /// Camera centre in the fingertip frame, mm.
    pub translation: [f64; 3],
    /// Rotation about the descent axis, degrees.
    pub yaw_deg: f64,
    /// Tilt of the optical axis away from straight down, toward the camera's
    /// image-left side (toward -x at zero yaw), degrees.
    pub pitch_deg: f64,
    pub fov_half_x_deg: f64,
    pub fov_half_y_deg: f64,
    /// Cut the open fingers' silhouettes out of the image.
    pub occlude_fingers: bool,
    /// Extra static occluders in normalized image coordinates. Each must be
    /// convex; occluders must not overlap one another.
    pub occluders: Vec<Vec<[f64; 2]>>,
}

impl Default for CameraSpec {
    fn default() -> Self {
        Self {
            id: "camera".into(),
            translation: [0.0; 3],
            yaw_deg: 0.0,
            pitch_deg: 0.0,
            fov_half_x_deg: 35.0,
            fov_half_y_deg: 26.0,
            occlude_fingers: false,
            occluders: Vec::new(),
        }
    }
}

impl CameraSpec {
    pub fn wrist() -> Self {
        Self {
            id: "wrist".into(),
            translation: [-50.0, 0.0, 108.0],
            fov_half_x_deg: 35.0,
            fov_half_y_deg: 26.0,
            occlude_fingers: true,
            ..Self::default()
        }
    }

    pub fn hand_a() -> Self {
        Self {
            id: "hand_a".into(),
            translation: [35.0, 0.0, 75.0],
            yaw_deg: 0.0,
            pitch_deg: 25.0,
            fov_half_x_deg: 31.0,
            fov_half_y_deg: 24.0,
            ..Self::default()
        }
    }

    pub fn hand_b() -> Self {
        Self {
            id: "hand_b".into(),
            translation: [-35.0, 0.0, 75.0],
            yaw_deg: 180.0,
            ..Self::hand_a()
        }
    }

    pub fn build(&self, plant: &PlantConfig) -> Result<CameraModel, PerceptError> {
        let invalid = |message: &str| PerceptError::InvalidCamera {
            camera: self.id.clone(),
            message: message.to_string(),
        };
        let fx = self.fov_half_x_deg.to_radians();
        let fy = self.fov_half_y_deg.to_radians();
        if !(fx > 0.0 && fx < PI / 2.0 && fy > 0.0 && fy < PI / 2.0) {
            return Err(invalid("field-of-view half angles must lie in (0, 90) degrees"));
        }
        let mut occluders = Vec::new();
        for raw in &self.occluders {
            let pts: Vec<Pt> = raw.iter().map(|p| Pt::new(p[0], p[1])).collect();
            let hull = polygon::convex_hull(&pts);
            if hull.len() != pts.len() || hull.len() < 3 {
                return Err(invalid("occluder polygons must be convex with at least 3 vertices"));
            }
            occluders.push(hull);
        }
        let mut camera = CameraModel {
            id: self.id.clone(),
            mount: mount_pose(self.translation, self.yaw_deg, self.pitch_deg),
            fov_half_x: fx,
            fov_half_y: fy,
            occluders,
        };
        if self.occlude_fingers {
            let fingers = camera.finger_silhouettes(plant);
            camera.occluders.extend(fingers);
        }
        Ok(camera)
    }
}

/// Camera-to-fingertip-frame transform for a mount description.
pub fn mount_pose(translation: [f64; 3], yaw_deg: f64, pitch_deg: f64) -> Isometry3<f64> {
    // Columns are the camera axes expressed in the fingertip frame.
    let look_down = Rotation3::from_matrix_unchecked(Matrix3::new(
        1.0, 0.0, 0.0, //
        0.0, -1.0, 0.0, //
        0.0, 0.0, -1.0,
    ));
    let yaw = Rotation3::from_axis_angle(&Vector3::z_axis(), yaw_deg.to_radians());
    let pitch = Rotation3::from_axis_angle(&Vector3::y_axis(), pitch_deg.to_radians());
    let rot = yaw * pitch * look_down;
    Isometry3::from_parts(
        Translation3::new(translation[0], translation[1], translation[2]),
        UnitQuaternion::from_rotation_matrix(&rot),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct CameraModel {
    pub id: String,
    /// Camera pose in the fingertip frame.
    pub mount: Isometry3<f64>,
    pub fov_half_x: f64,
    pub fov_half_y: f64,
    pub occluders: Vec<Vec<Pt>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub camera_id: String,
    pub visible: bool,
    pub centroid: Option<Pt>,
    /// Fraction of the image area covered by the visible silhouette.
    pub area: Option<f64>,
    pub t: f64,
}

impl CameraModel {
    /// Camera pose in the world for a given fingertip position.
    pub fn world_pose(&self, ee: &Vector3<f64>) -> Isometry3<f64> {
        Isometry3::from_parts(Translation3::from(*ee), UnitQuaternion::identity()) * self.mount
    }

    /// Normalized image coordinates of a camera-frame point in front of the lens.
    pub fn project(&self, p: &Point3<f64>) -> Pt {
        Pt::new(
            p.x / p.z / self.fov_half_x.tan(),
            p.y / p.z / self.fov_half_y.tan(),
        )
    }

    /// Image-space silhouette of a world-frame axis-aligned box, before
    /// clipping to the image square.
    pub fn box_silhouette(&self, ee: &Vector3<f64>, min: &Vector3<f64>, max: &Vector3<f64>) -> Vec<Pt> {
        let to_cam = self.world_pose(ee).inverse();
        let corners: Vec<Point3<f64>> = (0..8)
            .map(|k| {
                let p = Point3::new(
                    if k & 1 == 0 { min.x } else { max.x },
                    if k & 2 == 0 { min.y } else { max.y },
                    if k & 4 == 0 { min.z } else { max.z },
                );
                to_cam * p
            })
            .collect();
        let mut kept: Vec<Point3<f64>> = corners.iter().filter(|p| p.z >= NEAR_PLANE).copied().collect();
        // Box edges join corners whose indices differ in one bit.
        for a in 0..8usize {
            for bit in [1usize, 2, 4] {
                let b = a | bit;
                if b == a {
                    continue;
                }
                let (pa, pb) = (corners[a], corners[b]);
                if (pa.z >= NEAR_PLANE) != (pb.z >= NEAR_PLANE) {
                    let t = (NEAR_PLANE - pa.z) / (pb.z - pa.z);
                    kept.push(pa + (pb - pa) * t);
                }
            }
        }
        if kept.len() < 3 {
            return Vec::new();
        }
        let projected: Vec<Pt> = kept.iter().map(|p| self.project(p)).collect();
        polygon::convex_hull(&projected)
    }

    /// Silhouettes of the fully open fingers, clipped to the image.
    pub fn finger_silhouettes(&self, plant: &PlantConfig) -> Vec<Vec<Pt>> {
        let ee = Vector3::zeros();
        let frame = image_square();
        finger_boxes(&ee, plant.finger_gap_open, plant)
            .iter()
            .map(|(min, max)| polygon::clip_convex(&self.box_silhouette(&ee, min, max), &frame))
            .filter(|p| polygon::area_centroid(p).0 > 0.0)
            .collect()
    }

    pub fn observe(&self, plant: &PlantState, cube_side: f64) -> Observation {
        let h = Vector3::repeat(cube_side / 2.0);
        let min = plant.object_center - h;
        let max = plant.object_center + h;
        let hull = self.box_silhouette(&plant.ee_pos, &min, &max);
        let blob = measure(&hull, &self.occluders);
        let (visible, centroid, area) = match blob {
            Some((area, c)) => (true, Some(c), Some(area)),
            None => (false, None, None),
        };
        Observation {
            camera_id: self.id.clone(),
            visible,
            centroid,
            area,
            t: plant.t,
        }
    }

    /// Image position of the cube centre when the cube sits centred between
    /// the fingertips at grasp height.
    pub fn desired_point(&self, config: &PlantConfig) -> Result<Pt, PerceptError> {
        let centre_z = config.platform_top_z + config.cube_side / 2.0 - config.grasp_height();
        let p = self.mount.inverse() * Point3::new(0.0, 0.0, centre_z);
        let outside = |u: f64, v: f64| PerceptError::GoalOutsideView {
            camera: self.id.clone(),
            u,
            v,
        };
        if p.z < NEAR_PLANE {
            return Err(outside(f64::NAN, f64::NAN));
        }
        let g = self.project(&p);
        if g.x.abs() > 1.0 || g.y.abs() > 1.0 {
            return Err(outside(g.x, g.y));
        }
        Ok(g)
    }

    /// Horizontal world directions of the image `u` and `v` axes. Moving the
    /// hand along the `u` direction slides the object image toward negative `u`.
    pub fn image_axes_in_workspace(&self) -> (Vector2<f64>, Vector2<f64>) {
        let r = self.mount.rotation;
        let flat = |axis: Vector3<f64>| {
            let w = r * axis;
            let v = Vector2::new(w.x, w.y);
            let n = v.norm();
            if n > 1e-12 {
                v / n
            } else {
                Vector2::zeros()
            }
        };
        (flat(Vector3::x()), flat(Vector3::y()))
    }
}

fn image_square() -> Vec<Pt> {
    polygon::rect(-1.0, -1.0, 1.0, 1.0)
}

/// Visible area fraction and centroid of a silhouette after clipping to the
/// image and removing occluders.
fn measure(hull: &[Pt], occluders: &[Vec<Pt>]) -> Option<(f64, Pt)> {
    if hull.len() < 3 {
        return None;
    }
    let clipped = polygon::clip_convex(hull, &image_square());
    let (mut area, c) = polygon::area_centroid(&clipped);
    if area <= 0.0 {
        return None;
    }
    let mut mx = c.x * area;
    let mut my = c.y * area;
    for occ in occluders {
        let hidden = polygon::clip_convex(&clipped, occ);
        let (a, oc) = polygon::area_centroid(&hidden);
        if a > 0.0 {
            area -= a;
            mx -= oc.x * a;
            my -= oc.y * a;
        }
    }
    let frac = area / 4.0;
    if frac <= MIN_VISIBLE_AREA {
        return None;
    }
    Some((frac, Pt::new(mx / area, my / area)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PerceptionConfig {
    Wrist { camera: CameraSpec },
    SingleHand { camera: CameraSpec },
    DualHand { camera_a: CameraSpec, camera_b: CameraSpec },
}

impl PerceptionConfig {
    pub fn wrist() -> Self {
        PerceptionConfig::Wrist {
            camera: CameraSpec::wrist(),
        }
    }

    pub fn single_hand() -> Self {
        PerceptionConfig::SingleHand {
            camera: CameraSpec::hand_a(),
        }
    }

    pub fn dual_hand() -> Self {
        PerceptionConfig::DualHand {
            camera_a: CameraSpec::hand_a(),
            camera_b: CameraSpec::hand_b(),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            PerceptionConfig::Wrist { .. } => "wrist",
            PerceptionConfig::SingleHand { .. } => "single_hand",
            PerceptionConfig::DualHand { .. } => "dual_hand",
        }
    }

    pub fn specs(&self) -> Vec<&CameraSpec> {
        match self {
            PerceptionConfig::Wrist { camera } | PerceptionConfig::SingleHand { camera } => vec![camera],
            PerceptionConfig::DualHand { camera_a, camera_b } => vec![camera_a, camera_b],
        }
    }

    pub fn cameras(&self, plant: &PlantConfig) -> Result<Vec<CameraModel>, PerceptError> {
        if let PerceptionConfig::DualHand { camera_a, camera_b } = self {
            if camera_a.id == camera_b.id {
                return Err(PerceptError::DuplicateId(camera_a.id.clone()));
            }
        }
        self.specs().into_iter().map(|s| s.build(plant)).collect()
    }
}
