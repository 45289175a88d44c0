//! Sweep harness: one trial per (trajectory seed, speed, cube size,
//! perception system), aggregated per (speed, cube, perception) cell.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::ControllerConfig;
use crate::gcode::PlannerConfig;
use crate::percept::PerceptionConfig;
use crate::plant::PlantConfig;
use crate::trial::{run_trial, Outcome, TrajectorySource, TrialConfig, TrialError, TrialResult};
use crate::traj::TrajectoryParams;

pub mod svg;

pub const REPORT_SCHEMA: u32 = 1;

pub const TRIALS_CSV_HEADER: &str = "speed_mm_s,cube_mm,perception,seed,outcome,grasp_time_s,frames,longest_blind_run";

pub const CSV_HEADER: &str = "speed_mm_s,cube_mm,perception,n,success_rate,grasp_failure_rate,perception_failure_rate,timeout_rate,mean_grasp_time_s,sigma_grasp_time_s";

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("bench: invalid sweep: {0}")]
    InvalidSpec(String),
    #[error("bench: trial for trajectory seed {seed}: {source}")]
    Trial {
        seed: u64,
        #[source]
        source: TrialError,
    },
    #[error("bench: {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("bench: report CSV line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error("bench: nothing to render: report is empty")]
    EmptyReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub trajectory_seeds: Vec<u64>,
    pub speeds: Vec<f64>,
    pub cube_sides: Vec<f64>,
    pub perception: Vec<PerceptionConfig>,
    /// Base trajectory parameters; the seed is replaced per trial.
    pub trajectory: TrajectoryParams,
    /// Base plant; the cube side is replaced per cell.
    pub plant: PlantConfig,
    pub controller: ControllerConfig,
    pub planner: PlannerConfig,
    pub loss_frames: usize,
    pub max_duration: f64,
    pub lift_height: f64,
    /// Runs per (seed, cell). The simulator is deterministic, so values above
    /// one only repeat identical records.
    pub repeats: usize,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            trajectory_seeds: (1..=20).collect(),
            speeds: vec![100.0, 125.0, 150.0, 175.0, 200.0],
            cube_sides: vec![30.0, 40.0],
            perception: vec![
                PerceptionConfig::wrist(),
                PerceptionConfig::single_hand(),
                PerceptionConfig::dual_hand(),
            ],
            trajectory: TrajectoryParams::default(),
            plant: PlantConfig::default(),
            controller: ControllerConfig::default(),
            planner: PlannerConfig::default(),
            loss_frames: 12,
            max_duration: 30.0,
            lift_height: 100.0,
            repeats: 1,
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: &str| Err(BenchError::InvalidSpec(m.to_string()));
        if self.trajectory_seeds.is_empty() || self.speeds.is_empty() || self.cube_sides.is_empty() || self.perception.is_empty() {
            return bad("seed, speed, cube and perception lists must all be non-empty");
        }
        if self.trajectory_seeds.iter().any(|&s| i64::try_from(s).is_err()) {
            return bad("seeds must be at most 2^63 - 1");
        }
        if self.repeats == 0 {
            return bad("repeats must be >= 1");
        }
        if self.speeds.iter().any(|&s| !(s > 0.0 && s <= crate::traj::PLATFORM_MAX_SPEED)) {
            return bad("speeds must lie in (0, 250] mm/s");
        }
        let mut labels: Vec<_> = self.perception.iter().map(|p| p.label()).collect();
        labels.sort_unstable();
        labels.dedup();
        if labels.len() != self.perception.len() {
            return bad("each perception system may appear once");
        }
        Ok(())
    }

    pub fn trial_count(&self) -> usize {
        self.trajectory_seeds.len() * self.speeds.len() * self.cube_sides.len() * self.perception.len() * self.repeats
    }

    /// Trial configuration for one sweep element, with every shared setting
    /// taken from the sweep.
    pub fn trial_config(&self, seed: u64, speed: f64, cube: f64, perception: &PerceptionConfig) -> TrialConfig {
        let mut plant = self.plant.clone();
        plant.cube_side = cube;
        let mut config = TrialConfig::new(
            TrajectorySource::Generate(TrajectoryParams {
                seed,
                ..self.trajectory.clone()
            }),
            speed,
            plant,
            perception.clone(),
        );
        config.controller = self.controller.clone();
        config.planner = self.planner;
        config.loss_frames = self.loss_frames;
        config.max_duration = self.max_duration;
        config.lift_height = self.lift_height;
        config
    }

    /// Every trial of the sweep, in report order.
    pub fn trials(&self) -> Vec<TrialSpec> {
        let mut out = Vec::with_capacity(self.trial_count());
        for &cube in &self.cube_sides {
            for perception in &self.perception {
                for &speed in &self.speeds {
                    for &seed in &self.trajectory_seeds {
                        let config = self.trial_config(seed, speed, cube, perception);
                        for _ in 0..self.repeats {
                            out.push(TrialSpec {
                                key: CellKey::new(speed, cube, perception.label()),
                                seed,
                                config: config.clone(),
                            });
                        }
                    }
                }
            }
        }
        out
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("sweep spec serializes")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialSpec {
    pub key: CellKey,
    pub seed: u64,
    pub config: TrialConfig,
}

/// Sweep cell identity. Floats are stored as bit patterns so keys order and
/// compare exactly.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellKey {
    cube_bits: u64,
    perception: String,
    speed_bits: u64,
}

impl CellKey {
    pub fn new(speed: f64, cube: f64, perception: &str) -> Self {
        Self {
            cube_bits: cube.to_bits(),
            perception: perception.to_string(),
            speed_bits: speed.to_bits(),
        }
    }

    pub fn speed(&self) -> f64 {
        f64::from_bits(self.speed_bits)
    }

    pub fn cube(&self) -> f64 {
        f64::from_bits(self.cube_bits)
    }

    pub fn perception(&self) -> &str {
        &self.perception
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub key: CellKey,
    pub seed: u64,
    pub result: TrialResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub speed: f64,
    pub cube: f64,
    pub perception: String,
    pub n: usize,
    pub success_rate: f64,
    pub grasp_failure_rate: f64,
    pub perception_failure_rate: f64,
    pub timeout_rate: f64,
    pub mean_grasp_time: Option<f64>,
    pub sigma_grasp_time: Option<f64>,
}

impl CellSummary {
    pub fn key(&self) -> CellKey {
        CellKey::new(self.speed, self.cube, &self.perception)
    }

    pub fn rate(&self, outcome: Outcome) -> f64 {
        match outcome {
            Outcome::Success => self.success_rate,
            Outcome::GraspFailure => self.grasp_failure_rate,
            Outcome::PerceptionFailure => self.perception_failure_rate,
            Outcome::Timeout => self.timeout_rate,
        }
    }

    /// Aggregate one cell's trial results.
    pub fn from_results<'a>(key: &CellKey, results: impl IntoIterator<Item = &'a TrialResult>) -> Self {
        let mut counts: BTreeMap<Outcome, usize> = BTreeMap::new();
        let mut times = Vec::new();
        let mut n = 0usize;
        for r in results {
            n += 1;
            *counts.entry(r.outcome).or_default() += 1;
            if let (Outcome::Success, Some(t)) = (r.outcome, r.grasp_time) {
                times.push(t);
            }
        }
        let rate = |o: Outcome| {
            if n == 0 {
                0.0
            } else {
                counts.get(&o).copied().unwrap_or(0) as f64 / n as f64
            }
        };
        let (mean, sigma) = mean_sigma(&times);
        Self {
            speed: key.speed(),
            cube: key.cube(),
            perception: key.perception().to_string(),
            n,
            success_rate: rate(Outcome::Success),
            grasp_failure_rate: rate(Outcome::GraspFailure),
            perception_failure_rate: rate(Outcome::PerceptionFailure),
            timeout_rate: rate(Outcome::Timeout),
            mean_grasp_time: mean,
            sigma_grasp_time: sigma,
        }
    }
}

/// Mean, and sample standard deviation when there are at least two values.
pub fn mean_sigma(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sigma = (values.len() >= 2).then(|| {
        let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
        (ss / (n - 1.0)).sqrt()
    });
    (Some(mean), sigma)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub spec: SweepSpec,
    pub cells: Vec<CellSummary>,
    pub trials: Vec<TrialRecord>,
}

impl Report {
    /// Group trial records by cell and aggregate; result is independent of
    /// record order.
    pub fn from_records(spec: SweepSpec, mut trials: Vec<TrialRecord>) -> Self {
        // Total order, so even duplicate (cell, seed) records aggregate in a
        // fixed order and float sums do not depend on completion order.
        trials.sort_by(|a, b| {
            let tie = |r: &TrialRecord| {
                (
                    r.result.outcome,
                    r.result.grasp_time.map(f64::to_bits),
                    r.result.frames,
                    r.result.longest_blind_run,
                )
            };
            a.key.cmp(&b.key).then(a.seed.cmp(&b.seed)).then_with(|| tie(a).cmp(&tie(b)))
        });
        let mut groups: BTreeMap<&CellKey, Vec<&TrialResult>> = BTreeMap::new();
        for t in &trials {
            groups.entry(&t.key).or_default().push(&t.result);
        }
        let order = cell_order(&spec);
        let mut cells: Vec<CellSummary> = groups
            .iter()
            .map(|(k, rs)| CellSummary::from_results(k, rs.iter().copied()))
            .collect();
        cells.sort_by_key(|c| order.get(&c.key()).copied().unwrap_or(usize::MAX));
        Self { spec, cells, trials }
    }

    pub fn cell(&self, speed: f64, cube: f64, perception: &str) -> Option<&CellSummary> {
        let key = CellKey::new(speed, cube, perception);
        self.cells.iter().find(|c| c.key() == key)
    }

    pub fn to_csv(&self) -> String {
        cells_to_csv(&self.cells)
    }

    /// One row per trial, in cell then seed order.
    pub fn trials_csv(&self) -> String {
        let mut s = String::from(TRIALS_CSV_HEADER);
        s.push('\n');
        for t in &self.trials {
            let time = t.result.grasp_time.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                t.key.speed(),
                t.key.cube(),
                t.key.perception(),
                t.seed,
                t.result.outcome.label(),
                time,
                t.result.frames,
                t.result.longest_blind_run
            );
        }
        s
    }

    /// Effective configuration and seed list, for exact reruns.
    pub fn metadata_toml(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "schema_version = {REPORT_SCHEMA}");
        let _ = writeln!(s, "rng = \"{}\"", crate::rng::ALGORITHM);
        let _ = writeln!(s, "n_trials = {}", self.trials.len());
        let _ = writeln!(s, "n_cells = {}", self.cells.len());
        s.push_str("\n[sweep]\n");
        // Re-root the sweep under [sweep] so the file has a single schema.
        let spec = toml::to_string(&SweepFile { sweep: self.spec.clone() }).expect("spec serializes");
        s.push_str(spec.trim_start_matches("[sweep]\n"));
        s
    }
}

#[derive(Serialize)]
struct SweepFile {
    sweep: SweepSpec,
}

/// Position of each cell in the sweep's list order: cube, perception, speed.
fn cell_order(spec: &SweepSpec) -> BTreeMap<CellKey, usize> {
    let mut order = BTreeMap::new();
    for &cube in &spec.cube_sides {
        for p in &spec.perception {
            for &speed in &spec.speeds {
                let k = CellKey::new(speed, cube, p.label());
                let next = order.len();
                order.entry(k).or_insert(next);
            }
        }
    }
    order
}

/// Run every trial of the sweep on up to `jobs` worker threads (all cores
/// when `None`).
pub fn run_benchmark(spec: &SweepSpec, jobs: Option<usize>) -> Result<Report, BenchError> {
    spec.validate()?;
    let trials = spec.trials();
    let run = || {
        trials
            .par_iter()
            .map(|t| {
                run_trial(&t.config)
                    .map(|result| TrialRecord {
                        key: t.key.clone(),
                        seed: t.seed,
                        result,
                    })
                    .map_err(|source| BenchError::Trial { seed: t.seed, source })
            })
            .collect::<Result<Vec<_>, _>>()
    };
    let records = match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| BenchError::InvalidSpec(format!("thread pool: {e}")))?
            .install(run)?,
        None => run()?,
    };
    Ok(Report::from_records(spec.clone(), records))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn cells_to_csv(cells: &[CellSummary]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for c in cells {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            c.speed,
            c.cube,
            c.perception,
            c.n,
            c.success_rate,
            c.grasp_failure_rate,
            c.perception_failure_rate,
            c.timeout_rate,
            opt(c.mean_grasp_time),
            opt(c.sigma_grasp_time)
        );
    }
    out
}

pub fn parse_csv(text: &str) -> Result<Vec<CellSummary>, BenchError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == CSV_HEADER => {}
        _ => {
            return Err(BenchError::Csv {
                line: 1,
                message: "missing or unexpected header".into(),
            })
        }
    }
    let mut cells = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let lineno = i + 1;
        let err = |m: String| BenchError::Csv { line: lineno, message: m };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 10 {
            return Err(err(format!("expected 10 fields, found {}", f.len())));
        }
        let num = |s: &str, name: &str| s.parse::<f64>().map_err(|_| err(format!("bad {name} '{s}'")));
        let opt_num = |s: &str, name: &str| if s.is_empty() { Ok(None) } else { num(s, name).map(Some) };
        cells.push(CellSummary {
            speed: num(f[0], "speed")?,
            cube: num(f[1], "cube")?,
            perception: f[2].to_string(),
            n: f[3].parse().map_err(|_| err(format!("bad n '{}'", f[3])))?,
            success_rate: num(f[4], "success_rate")?,
            grasp_failure_rate: num(f[5], "grasp_failure_rate")?,
            perception_failure_rate: num(f[6], "perception_failure_rate")?,
            timeout_rate: num(f[7], "timeout_rate")?,
            mean_grasp_time: opt_num(f[8], "mean_grasp_time")?,
            sigma_grasp_time: opt_num(f[9], "sigma_grasp_time")?,
        });
    }
    Ok(cells)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Svg,
}

fn write(path: PathBuf, contents: &str) -> Result<PathBuf, BenchError> {
    fs::write(&path, contents).map_err(|source| BenchError::Io { path: path.clone(), source })?;
    Ok(path)
}

/// Write `report.csv`, or one `report_cube<N>mm.svg` per cube size, into `dir`.
pub fn render_report(report: &Report, format: Format, dir: &Path) -> Result<Vec<PathBuf>, BenchError> {
    render_cells(&report.cells, format, dir)
}

pub fn render_cells(cells: &[CellSummary], format: Format, dir: &Path) -> Result<Vec<PathBuf>, BenchError> {
    if cells.is_empty() {
        return Err(BenchError::EmptyReport);
    }
    fs::create_dir_all(dir).map_err(|source| BenchError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    match format {
        Format::Csv => Ok(vec![write(dir.join("report.csv"), &cells_to_csv(cells))?]),
        Format::Svg => svg::render(cells)
            .into_iter()
            .map(|(cube, doc)| write(dir.join(format!("report_cube{cube}mm.svg")), &doc))
            .collect(),
    }
}
