//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

use nalgebra::{Point3, Vector3};
use rayon::prelude::*;

use dyngrasp::gcode::{load, PlannerConfig};
use dyngrasp::geometry::{wrap_angle, PathElement, Point};
use dyngrasp::percept::{CameraModel, CameraSpec, NEAR_PLANE};
use dyngrasp::plant::{self, PlantConfig, PlantState};
use dyngrasp::polygon::Pt;
use dyngrasp::rng::SimRng;
use dyngrasp::traj::{sweep_to_turn, Trajectory};

/// Slab test: does the ray `o + t d`, `t > 0`, hit the box?
fn ray_hits_box(o: &Point3<f64>, d: &Vector3<f64>, min: &Vector3<f64>, max: &Vector3<f64>) -> bool {
    let mut t0 = 0.0f64;
    let mut t1 = f64::INFINITY;
    for k in 0..3 {
        if d[k].abs() < 1e-15 {
            if o[k] < min[k] || o[k] > max[k] {
                return false;
            }
            continue;
        }
        let a = (min[k] - o[k]) / d[k];
        let b = (max[k] - o[k]) / d[k];
        t0 = t0.max(a.min(b));
        t1 = t1.min(a.max(b));
    }
    t0 <= t1
}

/// Even-odd point-in-polygon.
fn inside_polygon(p: &Pt, poly: &[Pt]) -> bool {
    let mut inside = false;
    let mut j = poly.len() - 1;
    for i in 0..poly.len() {
        let (a, b) = (poly[i], poly[j]);
        if (a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// Rasterize the cube on an `n x n` pixel grid by casting one ray per pixel
/// centre. Returns the covered image fraction and the mean covered pixel.
pub fn raster_observe(cam: &CameraModel, state: &PlantState, side: f64, n: usize) -> Option<(f64, Pt)> {
    let pose = cam.world_pose(&state.ee_pos);
    let origin = pose * Point3::origin();
    let h = Vector3::repeat(side / 2.0);
    let (min, max) = (state.object_center - h, state.object_center + h);
    let (tx, ty) = (cam.fov_half_x.tan(), cam.fov_half_y.tan());
    let step = 2.0 / n as f64;
    let (count, sx, sy) = (0..n)
        .into_par_iter()
        .map(|j| {
            let v = -1.0 + (j as f64 + 0.5) * step;
            let mut acc = (0usize, 0.0, 0.0);
            for i in 0..n {
                let u = -1.0 + (i as f64 + 0.5) * step;
                let px = Pt::new(u, v);
                if cam.occluders.iter().any(|o| inside_polygon(&px, o)) {
                    continue;
                }
                let d = pose.rotation * Vector3::new(u * tx, v * ty, 1.0);
                if ray_hits_box(&origin, &d, &min, &max) {
                    acc.0 += 1;
                    acc.1 += u;
                    acc.2 += v;
                }
            }
            acc
        })
        .reduce(|| (0, 0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
    (count > 0).then(|| {
        let c = count as f64;
        (c / (n * n) as f64, Pt::new(sx / c, sy / c))
    })
}

pub fn still_state(plant: &PlantConfig) -> PlantState {
    let tl = load("G21\nG90\n", &PlannerConfig::default(), Point::origin()).unwrap();
    plant::init(plant, &tl)
}

/// A random camera, cube and hand placement with the whole cube in front of
/// the camera.
pub fn random_pose(rng: &mut SimRng, plant: &PlantConfig) -> (CameraModel, PlantState, f64) {
    loop {
        let spec = match (rng.unit() * 4.0) as usize {
            0 => CameraSpec::wrist(),
            1 => CameraSpec::hand_a(),
            2 => CameraSpec::hand_b(),
            _ => CameraSpec {
                id: "random".into(),
                translation: [rng.range(-60.0, 60.0), rng.range(-60.0, 60.0), rng.range(40.0, 150.0)],
                yaw_deg: rng.range(0.0, 360.0),
                pitch_deg: rng.range(0.0, 40.0),
                fov_half_x_deg: rng.range(25.0, 40.0),
                fov_half_y_deg: rng.range(18.0, 30.0),
                ..CameraSpec::default()
            },
        };
        let cam = spec.build(plant).unwrap();
        let side = if rng.unit() < 0.5 { 30.0 } else { 40.0 };
        let mut state = still_state(plant);
        state.object_center = Vector3::new(rng.range(-40.0, 40.0), rng.range(-40.0, 40.0), side / 2.0);
        state.ee_pos = Vector3::new(rng.range(-60.0, 60.0), rng.range(-60.0, 60.0), rng.range(side + 10.0, 300.0));
        let to_cam = cam.world_pose(&state.ee_pos).inverse();
        let h = side / 2.0;
        let in_front = (0..8).all(|k| {
            let p = state.object_center
                + Vector3::new(
                    if k & 1 == 0 { -h } else { h },
                    if k & 2 == 0 { -h } else { h },
                    if k & 4 == 0 { -h } else { h },
                );
            (to_cam * Point3::from(p)).z > 10.0 * NEAR_PLANE
        });
        if in_front {
            return (cam, state, side);
        }
    }
}

/// Check every geometric invariant of a generated walk; returns a message on
/// the first violation.
pub fn check_walk(t: &Trajectory) -> Result<(), String> {
    let p = t.params();
    let els = t.elements();
    let lines = els.iter().filter(|e| matches!(e, PathElement::Line { .. })).count();
    if lines != p.n_segments {
        return Err(format!("{lines} lines for {} segments", p.n_segments));
    }
    for (i, e) in els.iter().enumerate() {
        match *e {
            PathElement::Line { .. } => {
                if (e.length() - p.segment_length).abs() > 1e-9 {
                    return Err(format!("element {i}: line length {}", e.length()));
                }
            }
            PathElement::Arc { radius, sweep, .. } => {
                if (radius - p.fillet_radius).abs() > 1e-9 {
                    return Err(format!("element {i}: radius {radius}"));
                }
                let turn = sweep_to_turn(sweep);
                if !(p.turn_min - 1e-9..=p.turn_max + 1e-9).contains(&turn) {
                    return Err(format!("element {i}: turn {turn} deg"));
                }
                let before = matches!(els.get(i.wrapping_sub(1)), Some(PathElement::Line { .. }));
                let after = matches!(els.get(i + 1), Some(PathElement::Line { .. }));
                if !(before && after) {
                    return Err(format!("element {i}: arc not between two lines"));
                }
            }
        }
    }
    for (i, w) in els.windows(2).enumerate() {
        let gap = (w[0].end() - w[1].start()).norm();
        if gap > 1e-9 {
            return Err(format!("junction {i}: position gap {gap}"));
        }
        let kink = wrap_angle(w[1].heading_at(0.0) - w[0].heading_at(w[0].length())).abs();
        if kink > 1e-9 {
            return Err(format!("junction {i}: heading kink {kink}"));
        }
    }
    if t.elements().first().is_some_and(|e| e.start().coords.norm() > 0.0) {
        return Err("walk does not start at the origin".into());
    }
    let n = 4000;
    for k in 0..=n {
        let s = (t.total_length() * k as f64 / n as f64).min(t.total_length());
        let q = t.position_at(s).unwrap().position;
        if q.x.abs() > p.bounds_half + 1e-9 || q.y.abs() > p.bounds_half + 1e-9 {
            return Err(format!("sample at s={s} outside bounds: {q:?}"));
        }
    }
    Ok(())
}
