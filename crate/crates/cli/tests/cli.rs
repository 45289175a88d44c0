use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use dyngrasp::bench::{parse_csv, CSV_HEADER};
use dyngrasp::traj::{generate, Trajectory, TrajectoryParams};

fn dyngrasp(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dyngrasp"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = dyngrasp(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

#[test]
fn traj_gen_is_reloadable_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["traj", "gen", "--seed", "7", "--segments", "15", "--out", "t7.traj"]);
    let text = fs::read_to_string(dir.path().join("t7.traj")).unwrap();
    let loaded = Trajectory::from_toml(&text).unwrap();
    let fresh = generate(&TrajectoryParams {
        n_segments: 15,
        ..TrajectoryParams::with_seed(7)
    })
    .unwrap();
    assert_eq!(loaded, fresh);

    ok(dir.path(), &["traj", "gen", "--seed", "7", "--segments", "15", "--out", "again.traj"]);
    assert_eq!(text, fs::read_to_string(dir.path().join("again.traj")).unwrap());
}

#[test]
fn gcode_sim_reproduces_trajectory_geometry() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["traj", "gen", "--seed", "7", "--out", "t7.traj"]);
    ok(dir.path(), &["traj", "gcode", "--seed", "7", "--speed", "100", "--out", "t7.gcode"]);
    ok(dir.path(), &["gcode", "sim", "t7.gcode", "--dt", "0.05", "--out", "motion.csv"]);

    let traj = Trajectory::from_toml(&fs::read_to_string(dir.path().join("t7.traj")).unwrap()).unwrap();
    let csv = fs::read_to_string(dir.path().join("motion.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,x,y"));
    let mut rows = 0;
    let mut worst: f64 = 0.0;
    for line in lines {
        let v: Vec<f64> = line.split(',').map(|f| f.parse().unwrap()).collect();
        let p = traj.position_at_time(100.0, v[0]);
        worst = worst.max((p.x - v[1]).hypot(p.y - v[2]));
        rows += 1;
    }
    assert!(rows > 100, "{rows} rows");
    assert!(worst <= 1e-6, "max deviation {worst} mm");
}

#[test]
fn traj_gcode_from_file_matches_seed() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["traj", "gen", "--seed", "11", "--out", "t.traj"]);
    let a = ok(dir.path(), &["traj", "gcode", "--traj", "t.traj", "--speed", "150"]).stdout;
    let b = ok(dir.path(), &["traj", "gcode", "--seed", "11", "--speed", "150"]).stdout;
    assert_eq!(a, b);
}

#[test]
fn bench_run_small_sweep() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &["-q", "bench", "run", "--speeds", "100", "--cubes", "30", "--perception", "wrist", "--seeds", "3", "--out-dir", "out"],
    );
    let out = dir.path().join("out");
    let csv = fs::read_to_string(out.join("report.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some(CSV_HEADER));
    let cells = parse_csv(&csv).unwrap();
    assert_eq!(cells.len(), 1);
    assert_eq!(cells[0].n, 3);
    assert_eq!(fs::read_to_string(out.join("trials.csv")).unwrap().lines().count(), 4);
    let meta = fs::read_to_string(out.join("metadata.toml")).unwrap();
    assert!(meta.contains("n_trials = 3"));
    assert!(meta.contains("trajectory_seeds = [1, 2, 3]"));
    assert!(out.join("report_cube30mm.svg").exists());
}

#[test]
fn bench_plot_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &["-q", "bench", "run", "--speeds", "100,150", "--cubes", "30,40", "--perception", "wrist,dual-hand", "--seeds", "1", "--out-dir", "out"],
    );
    ok(dir.path(), &["-q", "bench", "plot", "out/report.csv", "--out-dir", "plots"]);
    for cube in [30, 40] {
        let name = format!("report_cube{cube}mm.svg");
        let plotted = fs::read_to_string(dir.path().join("plots").join(&name)).unwrap();
        assert!(plotted.starts_with("<svg"));
        assert_eq!(plotted, fs::read_to_string(dir.path().join("out").join(&name)).unwrap());
    }
}

#[test]
fn trial_run_prints_result_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(
        dir.path(),
        &["trial", "run", "--seed", "3", "--speed", "150", "--perception", "dual-hand", "--trace", "trace.csv"],
    );
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("outcome = "), "{text}");
    let trace = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert!(trace.starts_with("t,platform_x"));
    assert!(trace.lines().count() > 10);
}

#[test]
fn config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("cfg.toml"), "[trajectory]\nn_segments = 4\n").unwrap();
    ok(dir.path(), &["-c", "cfg.toml", "traj", "gen", "--seed", "2", "--out", "a.traj"]);
    let t = Trajectory::from_toml(&fs::read_to_string(dir.path().join("a.traj")).unwrap()).unwrap();
    assert_eq!(t.params().n_segments, 4);

    ok(dir.path(), &["-c", "cfg.toml", "--set", "trajectory.n_segments=6", "traj", "gen", "--seed", "2", "--out", "b.traj"]);
    let t = Trajectory::from_toml(&fs::read_to_string(dir.path().join("b.traj")).unwrap()).unwrap();
    assert_eq!(t.params().n_segments, 6);
}

#[test]
fn config_errors_cite_lines() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "speeds = [100]\n[plant]\nwhat = 3\n").unwrap();
    let out = dyngrasp(dir.path(), &["-c", "bad.toml", "traj", "gen", "--seed", "1", "--out", "x"]);
    assert_eq!(code(&out), 1);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");
    assert!(err.contains("config:"), "{err}");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&dyngrasp(dir.path(), &["bench", "run", "--bogus"])), 1);
    assert_eq!(code(&dyngrasp(dir.path(), &["traj"])), 1);
    assert_eq!(code(&dyngrasp(dir.path(), &["--set", "plant.nope=1", "traj", "gen", "--seed", "1", "--out", "x"])), 1);
    assert_eq!(code(&dyngrasp(dir.path(), &["gcode", "sim", "missing.gcode"])), 2);
    fs::write(dir.path().join("bad.gcode"), "G1 X10 Q5\n").unwrap();
    let out = dyngrasp(dir.path(), &["gcode", "sim", "bad.gcode"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("gcode:"));
    assert_eq!(code(&dyngrasp(dir.path(), &["--help"])), 0);
}

#[test]
fn every_subcommand_has_help() {
    let dir = tempfile::tempdir().unwrap();
    for sub in [
        vec!["traj", "gen"],
        vec!["traj", "gcode"],
        vec!["gcode", "sim"],
        vec!["trial", "run"],
        vec!["bench", "run"],
        vec!["bench", "plot"],
    ] {
        let mut args = sub.clone();
        args.push("--help");
        let out = ok(dir.path(), &args);
        let text = String::from_utf8(out.stdout).unwrap();
        assert!(text.contains("Usage:"), "{sub:?}");
        assert!(text.contains("--config"), "{sub:?}");
    }
}

#[test]
fn bench_run_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &'static str| {
        ["-q", "bench", "run", "--speeds", "100,200", "--cubes", "30", "--seeds", "4", "--out-dir", out]
    };
    ok(dir.path(), &args("a"));
    ok(dir.path(), &[&args("b")[..], &["--jobs", "1"]].concat());
    for file in ["report.csv", "trials.csv", "metadata.toml", "report_cube30mm.svg"] {
        let a = fs::read(dir.path().join("a").join(file)).unwrap();
        let b = fs::read(dir.path().join("b").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs");
    }
}
