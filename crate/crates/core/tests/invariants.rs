mod common;

use nalgebra::{Vector2, Vector3};
use proptest::prelude::*;

use dyngrasp::bench::{cells_to_csv, parse_csv, CellKey, Report, SweepSpec, TrialRecord};
use dyngrasp::control::{close_box, pd_command, select_camera, ControllerConfig, ImageError};
use dyngrasp::percept::Observation;
use dyngrasp::plant::{self, ControlAction, GripperMode, PlantConfig};
use dyngrasp::polygon::Pt;
use dyngrasp::rng::SimRng;
use dyngrasp::trial::{Outcome, TrialResult};

fn obs(id: usize, area: Option<f64>) -> Observation {
    Observation {
        camera_id: format!("cam{id}"),
        visible: area.is_some(),
        centroid: area.map(|_| Pt::origin()),
        area,
        t: 0.0,
    }
}

fn outcome() -> impl Strategy<Value = (Outcome, Option<f64>)> {
    prop_oneof![
        (5.0f64..9.0).prop_map(|t| (Outcome::Success, Some(t))),
        Just((Outcome::GraspFailure, None)),
        Just((Outcome::PerceptionFailure, None)),
        Just((Outcome::Timeout, None)),
    ]
}

fn records() -> impl Strategy<Value = Vec<TrialRecord>> {
    let speeds = [100.0, 150.0];
    let cubes = [30.0, 40.0];
    let systems = ["wrist", "dual_hand"];
    prop::collection::vec((0usize..2, 0usize..2, 0usize..2, 1u64..6, outcome()), 1..40).prop_map(move |v| {
        v.into_iter()
            .map(|(s, c, p, seed, (o, t))| TrialRecord {
                key: CellKey::new(speeds[s], cubes[c], systems[p]),
                seed,
                result: TrialResult {
                    outcome: o,
                    grasp_time: t,
                    frames: 1,
                    longest_blind_run: 0,
                    trace: None,
                },
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn pd_is_linear_below_clamp(ex in -0.5f64..0.5, ey in -0.5f64..0.5, k in 0.0f64..1.0) {
        let cfg = ControllerConfig::default();
        let e = ImageError { e: Vector2::new(ex, ey), e_dot: Vector2::zeros() };
        let scaled = ImageError { e: e.e * k, e_dot: Vector2::zeros() };
        let a = pd_command(&e, &cfg);
        let b = pd_command(&scaled, &cfg);
        prop_assert!((b - a * k).norm() < 1e-12);
        prop_assert!((a - e.e * cfg.kp).norm() < 1e-12);
    }

    #[test]
    fn pd_never_exceeds_clamp(ex in -100.0f64..100.0, ey in -100.0f64..100.0, dx in -100.0f64..100.0, dy in -100.0f64..100.0) {
        let cfg = ControllerConfig::default();
        let c = pd_command(&ImageError { e: Vector2::new(ex, ey), e_dot: Vector2::new(dx, dy) }, &cfg);
        prop_assert!(c.x.abs() <= cfg.vmax && c.y.abs() <= cfg.vmax);
    }

    #[test]
    fn close_box_is_a_product_of_intervals(ex in -1.0f64..1.0, ey in -1.0f64..1.0) {
        let cfg = ControllerConfig::default();
        prop_assert_eq!(close_box(&Vector2::new(ex, ey), &cfg), ex.abs() < 0.8 && ey.abs() < 0.15);
    }

    #[test]
    fn arbitration_ignores_common_scale(
        areas in prop::collection::vec(prop::option::of(1e-4f64..1.0), 1..5),
        scale in 1e-3f64..1e3,
    ) {
        let a: Vec<_> = areas.iter().enumerate().map(|(i, &x)| obs(i, x)).collect();
        let b: Vec<_> = areas.iter().enumerate().map(|(i, &x)| obs(i, x.map(|v| v * scale))).collect();
        let pick = select_camera(&a);
        prop_assert_eq!(pick, select_camera(&b));
        if let Some(i) = pick {
            let best = a[i].area.unwrap();
            prop_assert!(a.iter().all(|o| o.area.is_none_or(|v| v <= best)));
        } else {
            prop_assert!(areas.iter().all(|x| x.is_none()));
        }
    }

    #[test]
    fn report_is_order_independent(recs in records(), rot in 0usize..40) {
        let spec = SweepSpec::default();
        let a = Report::from_records(spec.clone(), recs.clone());
        let mut shuffled = recs.clone();
        shuffled.reverse();
        let len = shuffled.len();
        shuffled.rotate_left(rot % len);
        let b = Report::from_records(spec, shuffled);
        prop_assert_eq!(a.to_csv(), b.to_csv());
        prop_assert_eq!(&a.cells, &b.cells);
    }

    #[test]
    fn report_rates_partition_and_round_trip(recs in records()) {
        let r = Report::from_records(SweepSpec::default(), recs.clone());
        prop_assert_eq!(r.cells.iter().map(|c| c.n).sum::<usize>(), recs.len());
        for c in &r.cells {
            let sum = c.success_rate + c.grasp_failure_rate + c.perception_failure_rate + c.timeout_rate;
            prop_assert!((sum - 1.0).abs() <= 1e-12);
            let successes = (c.success_rate * c.n as f64).round() as usize;
            prop_assert_eq!(c.sigma_grasp_time.is_some(), successes >= 2);
            prop_assert_eq!(c.mean_grasp_time.is_some(), successes >= 1);
        }
        prop_assert_eq!(parse_csv(&cells_to_csv(&r.cells)).unwrap(), r.cells);
    }

    #[test]
    fn observations_stay_in_the_image(seed in any::<u64>()) {
        let plant = PlantConfig::default();
        let mut rng = SimRng::new(seed);
        let (cam, state, side) = common::random_pose(&mut rng, &plant);
        let o = cam.observe(&state, side);
        prop_assert_eq!(o.visible, o.area.is_some());
        if let (Some(a), Some(c)) = (o.area, o.centroid) {
            prop_assert!(a > 0.0 && a <= 1.0 + 1e-12);
            prop_assert!(c.x.abs() <= 1.0 + 1e-12 && c.y.abs() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn gripper_gap_never_opens(
        cmds in prop::collection::vec((-400.0f64..400.0, -400.0f64..400.0, -100.0f64..0.0, any::<bool>()), 1..200),
    ) {
        let cfg = PlantConfig::default();
        let tl = dyngrasp::trial::platform_timeline(
            &dyngrasp::traj::generate(&dyngrasp::traj::TrajectoryParams::with_seed(3)).unwrap(),
            150.0,
            &Default::default(),
        ).unwrap();
        let mut s = plant::init(&cfg, &tl);
        for (vx, vy, vz, close) in cmds {
            let next = plant::step(&s, &ControlAction { v: Vector3::new(vx, vy, vz), close }, &tl, 0.04, &cfg);
            prop_assert!(next.gripper_gap <= s.gripper_gap);
            prop_assert!(next.gripper_gap >= 0.0);
            prop_assert!(next.ee_vel.x.abs() <= cfg.vmax_axis && next.ee_vel.y.abs() <= cfg.vmax_axis);
            prop_assert!(next.ee_pos.z >= cfg.platform_top_z);
            if s.gripper_mode != GripperMode::Open {
                prop_assert!(next.gripper_mode != GripperMode::Open);
            }
            s = next;
        }
    }
}

#[test]
fn analytic_observation_matches_raster() {
    // lighter version of the acceptance check: fewer poses, coarser grid
    let plant = PlantConfig::default();
    let mut rng = SimRng::new(99);
    let mut checked = 0;
    while checked < 12 {
        let (cam, state, side) = common::random_pose(&mut rng, &plant);
        let analytic = cam.observe(&state, side);
        let raster = common::raster_observe(&cam, &state, side, 1024);
        match (analytic.area, analytic.centroid, raster) {
            (Some(a), Some(c), Some((ra, rc))) => {
                assert!((a - ra).abs() < 2e-3, "area {a} vs {ra}");
                if ra > 1e-3 {
                    assert!((c - rc).norm() < 2e-3, "centroid {c:?} vs {rc:?}");
                }
                checked += 1;
            }
            (None, None, r) => assert!(r.is_none_or(|(ra, _)| ra < 1e-4), "raster saw {r:?}"),
            other => panic!("{other:?}"),
        }
    }
}
