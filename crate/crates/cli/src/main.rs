//! `dyngrasp` command-line tool.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 when a command fails at
//! runtime.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use dyngrasp::bench::{self, Format, SweepSpec};
use dyngrasp::config;
use dyngrasp::gcode;
use dyngrasp::geometry::Point;
use dyngrasp::percept::PerceptionConfig;
use dyngrasp::traj::{self, Trajectory};
use dyngrasp::trial;

#[derive(Parser, Debug)]
#[command(name = "dyngrasp", version, about = "Dynamic grasping simulator and benchmark harness")]
struct Cli {
    /// TOML config file with [plant], [controller], [trajectory], [planner]
    /// and [[perception]] sections plus sweep lists.
    #[arg(long, short = 'c', global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Override one config value, e.g. `--set plant.push_limit=25`. Repeatable;
    /// applied after the config file, in order.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// More progress output on stderr (repeat for more).
    #[arg(long, short = 'v', global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    /// No progress output on stderr.
    #[arg(long, short = 'q', global = true, conflicts_with = "verbose")]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Random-walk trajectories.
    #[command(subcommand)]
    Traj(TrajCmd),
    /// G-code programs.
    #[command(subcommand)]
    Gcode(GcodeCmd),
    /// Single grasp trials.
    #[command(subcommand)]
    Trial(TrialCmd),
    /// Benchmark sweeps and reports.
    #[command(subcommand)]
    Bench(BenchCmd),
}

#[derive(Subcommand, Debug)]
enum TrajCmd {
    /// Generate a trajectory and write it as a TOML trajectory file.
    Gen {
        #[arg(long)]
        seed: u64,
        /// Number of straight segments (default from config).
        #[arg(long)]
        segments: Option<usize>,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Export a trajectory as a Grbl G-code program.
    Gcode {
        #[command(flatten)]
        source: TrajSource,
        /// Platform path speed, mm/s.
        #[arg(long)]
        speed: f64,
        /// Output file; stdout when omitted.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
struct TrajSource {
    /// Generate the trajectory from this seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Read a trajectory file written by `traj gen`.
    #[arg(long, value_name = "FILE")]
    traj: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SegmentsArg {
    /// Number of straight segments when generating from a seed (default from config).
    #[arg(long)]
    segments: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum GcodeCmd {
    /// Plan a G-code program and write the platform motion as CSV (t,x,y).
    Sim {
        /// G-code program.
        #[arg(value_name = "FILE")]
        input: PathBuf,
        /// Sampling interval, s.
        #[arg(long, default_value_t = 0.01)]
        dt: f64,
        /// Platform position before the first move, mm.
        #[arg(long, num_args = 2, value_names = ["X", "Y"], allow_negative_numbers = true, default_values_t = [0.0, 0.0])]
        start: Vec<f64>,
        /// Output file; stdout when omitted.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Perception {
    Wrist,
    SingleHand,
    DualHand,
}

impl Perception {
    fn label(self) -> &'static str {
        match self {
            Perception::Wrist => "wrist",
            Perception::SingleHand => "single_hand",
            Perception::DualHand => "dual_hand",
        }
    }

    /// The configured system of this kind, or its default mount.
    fn resolve(self, spec: &SweepSpec) -> PerceptionConfig {
        spec.perception
            .iter()
            .find(|p| p.label() == self.label())
            .cloned()
            .unwrap_or_else(|| match self {
                Perception::Wrist => PerceptionConfig::wrist(),
                Perception::SingleHand => PerceptionConfig::single_hand(),
                Perception::DualHand => PerceptionConfig::dual_hand(),
            })
    }
}

#[derive(Subcommand, Debug)]
enum TrialCmd {
    /// Run one trial and print its result as TOML.
    Run {
        #[command(flatten)]
        source: TrajSource,
        #[command(flatten)]
        segments: SegmentsArg,
        /// Platform path speed, mm/s.
        #[arg(long)]
        speed: f64,
        /// Cube side, mm.
        #[arg(long, default_value_t = 30.0)]
        cube: f64,
        #[arg(long, value_enum)]
        perception: Perception,
        /// Write the per-tick state trace as CSV.
        #[arg(long, value_name = "FILE")]
        trace: Option<PathBuf>,
        /// Result file; stdout when omitted.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
enum BenchCmd {
    /// Run a sweep; writes report.csv, trials.csv, metadata.toml and one SVG
    /// per cube size into the output directory.
    Run {
        /// Speeds, mm/s (default from config).
        #[arg(long, value_delimiter = ',')]
        speeds: Option<Vec<f64>>,
        /// Cube sides, mm (default from config).
        #[arg(long, value_delimiter = ',')]
        cubes: Option<Vec<f64>>,
        /// Perception systems (default from config).
        #[arg(long, value_enum, value_delimiter = ',')]
        perception: Option<Vec<Perception>>,
        /// Use trajectory seeds 1..=N (default from config).
        #[arg(long, value_name = "N")]
        seeds: Option<u64>,
        /// Runs per seed and cell.
        #[arg(long)]
        repeats: Option<usize>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long, value_name = "DIR")]
        out_dir: PathBuf,
    },
    /// Render SVG charts from a report CSV.
    Plot {
        #[arg(value_name = "CSV")]
        input: PathBuf,
        #[arg(long, value_name = "DIR")]
        out_dir: PathBuf,
    },
}

struct Ctx {
    spec: SweepSpec,
    verbosity: i8,
}

impl Ctx {
    fn note(&self, level: i8, msg: impl AsRef<str>) {
        if self.verbosity >= level {
            eprintln!("{}", msg.as_ref());
        }
    }
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("io: writing {}", p.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes()).context("io: writing stdout")?;
            Ok(())
        }
    }
}

fn load_trajectory(ctx: &Ctx, source: &TrajSource, segments: Option<usize>) -> Result<Trajectory> {
    match (&source.seed, &source.traj) {
        (Some(seed), None) => {
            let mut params = ctx.spec.trajectory.clone();
            params.seed = *seed;
            if let Some(n) = segments {
                params.n_segments = n;
            }
            Ok(traj::generate(&params)?)
        }
        (None, Some(path)) => {
            if segments.is_some() {
                bail!("usage: --segments only applies with --seed");
            }
            let text = fs::read_to_string(path).with_context(|| format!("io: reading {}", path.display()))?;
            Ok(Trajectory::from_toml(&text).with_context(|| path.display().to_string())?)
        }
        _ => unreachable!("clap enforces exactly one trajectory source"),
    }
}

fn run_traj(ctx: &Ctx, cmd: TrajCmd) -> Result<()> {
    match cmd {
        TrajCmd::Gen { seed, segments, out } => {
            let t = load_trajectory(ctx, &TrajSource { seed: Some(seed), traj: None }, segments)?;
            write_output(Some(&out), &t.to_toml())?;
            ctx.note(1, format!("wrote {} ({} elements, {:.3} mm)", out.display(), t.elements().len(), t.total_length()));
        }
        TrajCmd::Gcode { source, speed, out } => {
            let t = load_trajectory(ctx, &source, None)?;
            write_output(out.as_deref(), &t.emit_gcode(speed)?)?;
        }
    }
    Ok(())
}

fn run_gcode(ctx: &Ctx, cmd: GcodeCmd) -> Result<()> {
    let GcodeCmd::Sim { input, dt, start, out } = cmd;
    if !(dt > 0.0 && dt.is_finite()) {
        bail!("usage: --dt must be > 0");
    }
    let text = fs::read_to_string(&input).with_context(|| format!("io: reading {}", input.display()))?;
    let timeline = gcode::load(&text, &ctx.spec.planner, Point::new(start[0], start[1]))
        .with_context(|| input.display().to_string())?;
    let total = timeline.total_duration();
    let steps = (total / dt).ceil() as usize;
    let mut csv = String::from("t,x,y\n");
    for i in 0..=steps {
        let t = (i as f64 * dt).min(total);
        let p = timeline.position_at_time(t);
        csv.push_str(&format!("{t},{},{}\n", p.x, p.y));
    }
    write_output(out.as_deref(), &csv)?;
    ctx.note(1, format!("{} moves, {:.3} s", timeline.moves().len(), total));
    Ok(())
}

fn run_trial_cmd(ctx: &Ctx, cmd: TrialCmd) -> Result<()> {
    let TrialCmd::Run {
        source,
        segments,
        speed,
        cube,
        perception,
        trace,
        out,
    } = cmd;
    let t = load_trajectory(ctx, &source, segments.segments)?;
    let mut config = ctx
        .spec
        .trial_config(t.params().seed, speed, cube, &perception.resolve(&ctx.spec));
    config.trajectory = trial::TrajectorySource::Given(t);
    config.record_trace = trace.is_some();
    let result = trial::run_trial(&config)?;
    if let (Some(path), Some(rows)) = (&trace, &result.trace) {
        write_output(Some(path), &trial::trace_csv(rows))?;
    }
    write_output(out.as_deref(), &result.to_toml())?;
    Ok(())
}

fn run_bench(ctx: &Ctx, cmd: BenchCmd) -> Result<()> {
    match cmd {
        BenchCmd::Run {
            speeds,
            cubes,
            perception,
            seeds,
            repeats,
            jobs,
            out_dir,
        } => {
            let mut spec = ctx.spec.clone();
            if let Some(v) = speeds {
                spec.speeds = v;
            }
            if let Some(v) = cubes {
                spec.cube_sides = v;
            }
            if let Some(v) = perception {
                spec.perception = v.iter().map(|p| p.resolve(&ctx.spec)).collect();
            }
            if let Some(n) = seeds {
                spec.trajectory_seeds = (1..=n).collect();
            }
            if let Some(r) = repeats {
                spec.repeats = r;
            }
            if jobs == Some(0) {
                bail!("usage: --jobs must be >= 1");
            }
            spec.validate()?;
            fs::create_dir_all(&out_dir).with_context(|| format!("io: creating {}", out_dir.display()))?;
            ctx.note(0, format!("running {} trials", spec.trial_count()));
            let started = std::time::Instant::now();
            let report = bench::run_benchmark(&spec, jobs)?;
            ctx.note(0, format!("done in {:.1} s", started.elapsed().as_secs_f64()));
            let mut written = bench::render_report(&report, Format::Csv, &out_dir)?;
            let trials = out_dir.join("trials.csv");
            write_output(Some(&trials), &report.trials_csv())?;
            let meta = out_dir.join("metadata.toml");
            write_output(Some(&meta), &report.metadata_toml())?;
            written.extend([trials, meta]);
            written.extend(bench::render_report(&report, Format::Svg, &out_dir)?);
            for c in &report.cells {
                ctx.note(
                    1,
                    format!(
                        "{:>6} mm/s {:>4} mm {:<12} success {:.3} perception-failure {:.3}",
                        c.speed, c.cube, c.perception, c.success_rate, c.perception_failure_rate
                    ),
                );
            }
            for p in written {
                ctx.note(0, format!("wrote {}", p.display()));
            }
        }
        BenchCmd::Plot { input, out_dir } => {
            let text = fs::read_to_string(&input).with_context(|| format!("io: reading {}", input.display()))?;
            let cells = bench::parse_csv(&text).with_context(|| input.display().to_string())?;
            fs::create_dir_all(&out_dir).with_context(|| format!("io: creating {}", out_dir.display()))?;
            for p in bench::render_cells(&cells, Format::Svg, &out_dir)? {
                ctx.note(0, format!("wrote {}", p.display()));
            }
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let spec = config::resolve(cli.config.as_deref(), &cli.overrides)?;
    let ctx = Ctx {
        spec,
        verbosity: if cli.quiet { -1 } else { cli.verbose as i8 },
    };
    match cli.command {
        Command::Traj(c) => run_traj(&ctx, c),
        Command::Gcode(c) => run_gcode(&ctx, c),
        Command::Trial(c) => run_trial_cmd(&ctx, c),
        Command::Bench(c) => run_bench(&ctx, c),
    }
}

/// Bad flags, config files and overrides are usage errors; everything that
/// goes wrong while doing the work is a runtime error.
fn is_usage(e: &anyhow::Error) -> bool {
    e.to_string().starts_with("usage:")
        || e.downcast_ref::<config::ConfigError>().is_some()
        || matches!(e.downcast_ref::<bench::BenchError>(), Some(bench::BenchError::InvalidSpec(_)))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if is_usage(&e) { 1 } else { 2 })
        }
    }
}
