//! Command-line front end: phantom generation, planning, closed-loop
//! experiments and log replay.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use endonav::environment::PhantomSpec;
use endonav::sim::{self, ExperimentSpec};

#[derive(Parser)]
#[command(name = "endonav", version, about = "Image-guided endoscope navigation in simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by `plan` and `run`; each overrides the config file.
#[derive(Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Phantom directory written by `phantom-gen`, or a phantom spec JSON file.
    #[arg(long)]
    phantom: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic phantom (cloud.csv, landmarks.json, manifest.json).
    PhantomGen {
        /// Phantom spec JSON; defaults apply to missing fields.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Plan a nostril-to-target path and write path_P.csv / path_P.json.
    Plan {
        #[command(flatten)]
        common: Common,
    },
    /// Run the closed-loop experiment and write the report.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Check a stored trajectory log against the kinematic model.
    Replay {
        log: PathBuf,
        /// Robot description; the built-in model is used otherwise.
        #[arg(long)]
        robot: Option<PathBuf>,
    },
}

fn load_spec(common: &Common) -> Result<ExperimentSpec> {
    let mut spec = match &common.config {
        Some(p) => ExperimentSpec::load(p).with_context(|| format!("reading config {}", p.display()))?,
        None => ExperimentSpec::default(),
    };
    if let Some(p) = &common.phantom {
        apply_phantom(&mut spec, p)?;
    }
    if let Some(s) = common.seed {
        spec.seed = s;
    }
    if let Some(o) = &common.out {
        spec.out = o.clone();
    }
    Ok(spec)
}

fn apply_phantom(spec: &mut ExperimentSpec, p: &Path) -> Result<()> {
    if p.is_dir() {
        spec.cloud = Some(p.join("cloud.csv"));
        spec.landmarks = Some(p.join("landmarks.json"));
    } else {
        let text = std::fs::read_to_string(p).with_context(|| format!("reading phantom spec {}", p.display()))?;
        spec.phantom = serde_json::from_str(&text).with_context(|| format!("parsing phantom spec {}", p.display()))?;
        spec.cloud = None;
        spec.landmarks = None;
    }
    Ok(())
}

fn phantom_gen(spec: Option<PathBuf>, seed: Option<u64>, out: PathBuf) -> Result<()> {
    let mut ps = match spec {
        Some(p) => {
            serde_json::from_str(&std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?)?
        }
        None => PhantomSpec::default(),
    };
    if let Some(s) = seed {
        ps.seed = s;
    }
    let ph = sim::write_phantom(&ps, &out)?;
    println!("wrote {} cloud points to {}", ph.cloud.len(), out.display());
    Ok(())
}

fn plan(common: Common) -> Result<()> {
    let mut spec = load_spec(&common)?;
    if let Some(s) = common.seed {
        spec.planner.seed = s;
    }
    spec.validate()?;
    let scene = sim::load_scene(&spec)?;
    let path = sim::plan_scene(&scene, &spec.planner)?;
    std::fs::create_dir_all(&spec.out)?;
    path.save_csv(&spec.out.join("path_P.csv"))?;
    path.save_json(&spec.out.join("path_P.json"))?;
    println!(
        "{} waypoints, {:.2} mm, written to {}",
        path.waypoints.len(),
        path.length(),
        spec.out.display()
    );
    Ok(())
}

fn run(common: Common, trials: Option<usize>) -> Result<bool> {
    let mut spec = load_spec(&common)?;
    if let Some(t) = trials {
        spec.trials = t;
    }
    let exp = sim::run_experiment(&spec)?;
    for t in &exp.report.trials {
        match (&t.error, t.rmse_mm) {
            (None, Some(rmse)) => println!("trial {:02}: ok, {} steps, rmse {:.3} mm", t.trial, t.steps, rmse),
            (err, _) => println!(
                "trial {:02}: failed after {} steps: {}",
                t.trial,
                t.steps,
                err.as_deref().unwrap_or("unknown")
            ),
        }
    }
    let r = &exp.report;
    match r.mean_rmse_mm {
        Some(m) => println!(
            "{}/{} trials succeeded, mean rmse {:.3} mm",
            r.succeeded,
            r.trials.len(),
            m
        ),
        None => println!("{}/{} trials succeeded", r.succeeded, r.trials.len()),
    }
    println!("report written to {}", spec.out.join("report.json").display());
    Ok(r.succeeded > 0)
}

fn replay(log: PathBuf, robot: Option<PathBuf>) -> Result<()> {
    let model = match robot {
        Some(p) => endonav::kinematics::RobotModel::load_config(&p)?,
        None => endonav::kinematics::RobotModel::default(),
    };
    let summary = sim::replay(&log, &model)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::PhantomGen { spec, seed, out } => phantom_gen(spec, seed, out).map(|_| true),
        Command::Plan { common } => plan(common).map(|_| true),
        Command::Run { common, trials } => run(common, trials),
        Command::Replay { log, robot } => replay(log, robot).map(|_| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
