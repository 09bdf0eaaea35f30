//! End-to-end experiment: phantom, registration, planning, image-guided
//! path following and error reporting.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{Matrix3, Matrix3x4, Vector3};
use serde::{Deserialize, Serialize};

use crate::controller::{follow_path, ControlState, ControllerConfig, ImagingLoop, TrajectoryLog};
use crate::environment::{
    fit_plane, load_cloud, save_cloud, synth_phantom, Environment, Landmarks, PhantomSpec, PlaneModel, PointCloud,
};
use crate::error::{Error, Result};
use crate::imaging::{tips_csv, ImagingConfig, ProjectionModel};
use crate::kinematics::{ArmConfig, EndoConfig, RobotModel};
use crate::planner::{plan, PathP, PlannerConfig};
use crate::registration::{compose_chain, estimate_rigid, MarkerSet, RegistrationSet};
use crate::transform::RigidTransform;

/// Number of evaluation waypoints per trial.
pub const EVAL_WAYPOINTS: usize = 7;

/// Placement of the phantom and C-arm relative to the robot.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SetupConfig {
    /// Arm configuration at registration time, rad.
    pub initial_arm: [f64; 7],
    /// Distance of the C-arm frame origin from the path plane, mm.
    pub c_arm_height: f64,
    /// Rotation of the detector about the viewing axis, rad.
    pub c_arm_roll: f64,
    /// Marker measurement noise, mm.
    pub marker_noise: f64,
}

impl Default for SetupConfig {
    fn default() -> Self {
        Self {
            initial_arm: [0.871, 0.042, 1.504, -0.324, -0.448, 1.431, -1.781],
            c_arm_height: 100.0,
            c_arm_roll: 0.35,
            marker_noise: 0.0,
        }
    }
}

/// A complete experiment description, read from one JSON document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSpec {
    /// Synthetic phantom; ignored when `cloud` is set.
    pub phantom: PhantomSpec,
    /// External obstacle cloud (CSV, `{O_P}`).
    pub cloud: Option<PathBuf>,
    /// Landmarks for an external cloud.
    pub landmarks: Option<PathBuf>,
    /// Robot description in the `key = value` format.
    pub robot: Option<PathBuf>,
    pub planner: PlannerConfig,
    pub controller: ControllerConfig,
    pub imaging: ImagingConfig,
    pub setup: SetupConfig,
    pub trials: usize,
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            phantom: PhantomSpec::default(),
            cloud: None,
            landmarks: None,
            robot: None,
            planner: PlannerConfig::default(),
            controller: ControllerConfig::default(),
            imaging: ImagingConfig::default(),
            setup: SetupConfig::default(),
            trials: 5,
            seed: 0,
            out: PathBuf::from("out"),
        }
    }
}

impl ExperimentSpec {
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    /// Launch-time checks: counts, referenced files and sub-configs.
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidArgument("trials must be at least 1".into()));
        }
        for p in [&self.cloud, &self.landmarks, &self.robot].into_iter().flatten() {
            if !p.exists() {
                return Err(Error::MissingFile(p.clone()));
            }
        }
        if self.cloud.is_some() && self.landmarks.is_none() {
            return Err(Error::InvalidArgument("an external cloud needs a landmark file".into()));
        }
        self.planner.validate()?;
        self.controller.validate()?;
        Ok(())
    }

    pub fn robot_model(&self) -> Result<RobotModel> {
        match &self.robot {
            Some(p) => RobotModel::load_config(p),
            None => Ok(RobotModel::default()),
        }
    }
}

/// Obstacles, landmarks and path plane in `{O_P}`.
#[derive(Clone, Debug)]
pub struct Scene {
    pub env: Environment,
    pub landmarks: Landmarks,
    pub plane: PlaneModel,
}

pub fn load_scene(spec: &ExperimentSpec) -> Result<Scene> {
    let (env, landmarks) = match (&spec.cloud, &spec.landmarks) {
        (Some(cloud), Some(lm)) => (Environment::from_cloud(load_cloud(cloud)?), Landmarks::load(lm)?),
        (Some(_), None) => return Err(Error::InvalidArgument("an external cloud needs a landmark file".into())),
        (None, _) => {
            let ph = synth_phantom(&spec.phantom)?;
            (Environment::from_phantom(&ph), ph.landmarks)
        }
    };
    landmarks.validate()?;
    let plane = fit_plane(&landmarks)?;
    Ok(Scene { env, landmarks, plane })
}

/// Plans the nostril-to-target path for one trial seed.
pub fn plan_scene(scene: &Scene, cfg: &PlannerConfig) -> Result<PathP> {
    plan(
        &scene.env,
        &scene.plane,
        &scene.landmarks.start,
        &scene.landmarks.target,
        cfg,
    )
}

/// Ground truth and registered estimates for one trial.
#[derive(Clone, Debug)]
pub struct TrialSetup {
    pub truth: RegistrationSet,
    pub estimate: RegistrationSet,
    pub render_model: ProjectionModel,
    pub projection: ProjectionModel,
    pub plane_b: PlaneModel,
    pub cloud_b: PointCloud,
    pub initial: ControlState,
}

/// In-plane direction from the ostium to the target, along which the
/// endoscope is aligned at the start.
fn heading(plane: &PlaneModel, landmarks: &Landmarks) -> Vector3<f64> {
    (plane.project(&landmarks.target) - plane.project(&landmarks.ostium))
        .try_normalize(1e-9)
        .unwrap_or(plane.axes[0])
}

/// Places the phantom so that `start` sits at the tip, `heading` runs
/// along the tip's z axis and the plane normal along its y axis.
fn phantom_placement(
    plane: &PlaneModel,
    heading: &Vector3<f64>,
    start: &Vector3<f64>,
    tip: &RigidTransform,
) -> RigidTransform {
    let n = plane.normal;
    let src = Matrix3::from_columns(&[*heading, n.cross(heading), n]);
    let r = &tip.rotation;
    let dst = Matrix3::from_columns(&[
        r.column(2).into_owned(),
        r.column(0).into_owned(),
        r.column(1).into_owned(),
    ]);
    let rotation = dst * src.transpose();
    RigidTransform::new(rotation, tip.translation - rotation * start)
}

fn phantom_markers(scene: &Scene) -> MarkerSet {
    let (lo, hi) = scene.env.cloud.bounds();
    let mut m = MarkerSet::new("O_P");
    m.insert("p1", lo);
    m.insert("p2", Vector3::new(hi.x, lo.y, lo.z));
    m.insert("p3", Vector3::new(lo.x, hi.y, lo.z));
    m.insert("p4", Vector3::new(lo.x, lo.y, hi.z));
    m.insert("p5", hi);
    m
}

fn c_arm_markers() -> MarkerSet {
    let mut m = MarkerSet::new("O_A");
    m.insert("a1", Vector3::zeros());
    m.insert("a2", Vector3::new(30.0, 0.0, 0.0));
    m.insert("a3", Vector3::new(0.0, 30.0, 0.0));
    m.insert("a4", Vector3::new(0.0, 0.0, 30.0));
    m
}

/// Orthographic C-arm image map in `{B}`: `K_A · (T_A^B)⁻¹`.
fn projection_in_base(t_a_b: &RigidTransform, cfg: &ImagingConfig) -> Result<ProjectionModel> {
    let s = 1.0 / cfg.pixel_pitch;
    let k_a = Matrix3x4::new(
        s,
        0.0,
        0.0,
        0.5 * (cfg.image_width as f64 - 1.0),
        0.0,
        s,
        0.0,
        0.5 * (cfg.image_height as f64 - 1.0),
        0.0,
        0.0,
        0.0,
        1.0,
    );
    ProjectionModel::new(
        k_a * t_a_b.inverse().to_homogeneous(),
        cfg.image_width,
        cfg.image_height,
        cfg.pixel_pitch,
    )
}

/// Places phantom and C-arm, synthesizes marker observations and derives
/// the registered quantities the controller works with.
pub fn setup_trial(
    model: &RobotModel,
    scene: &Scene,
    path_p: &PathP,
    spec: &ExperimentSpec,
    seed: u64,
) -> Result<TrialSetup> {
    let q_r = ArmConfig::from_slice(&spec.setup.initial_arm);
    let q_e = EndoConfig::zeros();
    let t_e_b = model.full_fk(&q_r, &q_e)?;
    let heading = heading(&scene.plane, &scene.landmarks);
    let t_p_b = phantom_placement(&scene.plane, &heading, &scene.landmarks.start, &t_e_b);
    let t_p_e = t_e_b.inverse() * t_p_b;

    // C-arm above the middle of the path and the trailing endoscope body.
    let start = path_p.waypoints[0];
    let end = *path_p.waypoints.last().expect("non-empty path");
    let centre = 0.5 * (start - heading * model.geometry.backbone_length() + end);
    let [e1, e2] = scene.plane.axes;
    let n = scene.plane.normal;
    let t_a_p = RigidTransform::new(
        Matrix3::from_columns(&[e1, -e2, -n]),
        scene.plane.project(&centre) + n * spec.setup.c_arm_height,
    ) * RigidTransform::rot_z(spec.setup.c_arm_roll);
    let truth = compose_chain(t_a_p, t_p_e, t_e_b);

    let noise = spec.setup.marker_noise;
    let observe = |m: &MarkerSet, t: &RigidTransform, frame: &str, s: u64| -> Result<MarkerSet> {
        let seen = m.transformed(t, frame);
        if noise > 0.0 {
            seen.with_noise(noise, s)
        } else {
            Ok(seen)
        }
    };
    let pm = phantom_markers(scene);
    let p_in_e = observe(&pm, &t_p_e, "O_E", seed ^ 0x0e)?;
    let am = c_arm_markers();
    let a_in_p = observe(&am, &t_a_p, "O_P", seed ^ 0x0a)?;
    let estimate = compose_chain(
        estimate_rigid(&am, &a_in_p)?.transform,
        estimate_rigid(&pm, &p_in_e)?.transform,
        t_e_b,
    );

    let render_model = projection_in_base(&truth.t_a_b(), &spec.imaging)?;
    let projection = projection_in_base(&estimate.t_a_b(), &spec.imaging)?;
    let plane_b = scene.plane.transformed(&estimate.t_p_b());
    let cloud_b = scene.env.cloud.transformed(&truth.t_p_b(), "O_B");
    Ok(TrialSetup {
        truth,
        estimate,
        render_model,
        projection,
        plane_b,
        cloud_b,
        initial: ControlState {
            q_r,
            q_e,
            waypoint_index: 0,
            tip_estimate: t_e_b.translation,
        },
    })
}

/// Distance from `p` to the polyline through `pts`.
pub fn distance_to_polyline(p: &Vector3<f64>, pts: &[Vector3<f64>]) -> f64 {
    match pts {
        [] => f64::INFINITY,
        [only] => (p - only).norm(),
        _ => pts
            .windows(2)
            .map(|w| {
                let d = w[1] - w[0];
                let len2 = d.norm_squared();
                let t = if len2 > 0.0 {
                    ((p - w[0]).dot(&d) / len2).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                (p - (w[0] + d * t)).norm()
            })
            .fold(f64::INFINITY, f64::min),
    }
}

/// Evaluation waypoints at arc-length fractions `k/8`, `k = 1..=7`.
pub fn eval_waypoints(path: &PathP) -> Vec<Vector3<f64>> {
    (1..=EVAL_WAYPOINTS)
        .map(|k| path.point_at_fraction(k as f64 / (EVAL_WAYPOINTS + 1) as f64))
        .collect()
}

/// Per-waypoint error (mm) of the actual tip trace against the planned path,
/// both in `{O_P}`.
pub fn waypoint_errors(path: &PathP, actual_p: &[Vector3<f64>]) -> Vec<f64> {
    eval_waypoints(path)
        .iter()
        .map(|w| distance_to_polyline(w, actual_p))
        .collect()
}

pub fn rms(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub trial: usize,
    pub seed: u64,
    pub success: bool,
    pub error: Option<String>,
    /// Control steps taken.
    pub steps: usize,
    pub path_length_mm: Option<f64>,
    pub rmse_mm: Option<f64>,
    pub waypoint_errors_mm: Vec<f64>,
    pub waypoint_errors_px: Vec<f64>,
    /// Smallest body-point clearance over the run, against the true cloud.
    pub min_margin_mm: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub pixel_pitch: f64,
    pub trials: Vec<TrialReport>,
    pub succeeded: usize,
    /// Mean of the per-trial RMSE over successful trials.
    pub mean_rmse_mm: Option<f64>,
    /// RMS over successful trials of each evaluation waypoint's error.
    pub waypoint_rmse_mm: Vec<f64>,
}

/// Wall-clock measurements, kept apart from the deterministic report.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub trial_seconds: Vec<f64>,
}

/// Raw products of one trial.
#[derive(Clone, Debug)]
pub struct TrialData {
    pub trial: usize,
    pub path_p: Option<PathP>,
    pub log: TrajectoryLog,
    pub t_p_b: RigidTransform,
}

impl TrialData {
    /// True tip trace in `{O_P}`.
    pub fn actual_p(&self) -> Vec<Vector3<f64>> {
        let inv = self.t_p_b.inverse();
        self.log.rows.iter().map(|r| inv.transform_point(&r.tip_true)).collect()
    }
}

pub fn trial_seed(spec: &ExperimentSpec, trial: usize) -> u64 {
    spec.seed.wrapping_add(trial as u64)
}

fn trial_dir(out: &Path, trial: usize) -> PathBuf {
    out.join(format!("trial_{trial:02}"))
}

/// Runs one trial and writes its raw outputs into `dir`.
pub fn run_trial(
    spec: &ExperimentSpec,
    model: &RobotModel,
    scene: &Scene,
    trial: usize,
    dir: &Path,
) -> (TrialReport, TrialData) {
    let seed = trial_seed(spec, trial);
    let mut report = TrialReport {
        trial,
        seed,
        success: false,
        error: None,
        steps: 0,
        path_length_mm: None,
        rmse_mm: None,
        waypoint_errors_mm: Vec::new(),
        waypoint_errors_px: Vec::new(),
        min_margin_mm: None,
    };
    let mut data = TrialData {
        trial,
        path_p: None,
        log: TrajectoryLog::default(),
        t_p_b: RigidTransform::identity(),
    };
    if let Err(e) = run_trial_inner(spec, model, scene, seed, dir, &mut report, &mut data) {
        report.error = Some(e.to_string());
    }
    (report, data)
}

fn run_trial_inner(
    spec: &ExperimentSpec,
    model: &RobotModel,
    scene: &Scene,
    seed: u64,
    dir: &Path,
    report: &mut TrialReport,
    data: &mut TrialData,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let planner = PlannerConfig {
        seed: spec.planner.seed.wrapping_add(seed),
        ..spec.planner
    };
    let path_p = plan_scene(scene, &planner)?;
    path_p.save_csv(&dir.join("path_P.csv"))?;
    path_p.save_json(&dir.join("path_P.json"))?;
    report.path_length_mm = Some(path_p.length());
    data.path_p = Some(path_p.clone());

    let setup = setup_trial(model, scene, &path_p, spec, seed)?;
    setup.estimate.save(&dir.join("registration.json"))?;
    setup.truth.save(&dir.join("registration_truth.json"))?;
    data.t_p_b = setup.truth.t_p_b();
    let est_p_b = setup.estimate.t_p_b();
    let path_b: Vec<Vector3<f64>> = path_p.waypoints.iter().map(|w| est_p_b.transform_point(w)).collect();
    let imaging = ImagingLoop {
        render_model: setup.render_model,
        model: setup.projection,
        plane_b: setup.plane_b,
        config: spec.imaging,
        seed,
    };
    let controller_cloud = scene.env.cloud.transformed(&est_p_b, "O_B");
    let outcome = follow_path(
        &setup.initial,
        &path_b,
        model,
        &controller_cloud,
        &imaging,
        &spec.controller,
    );
    let (out, failure) = match outcome {
        Ok(out) => (out, None),
        Err(f) => {
            let f = *f;
            if let Some(frame) = &f.frame {
                frame.save_pgm(&dir.join("frame_failure.pgm"))?;
            }
            let partial = crate::controller::FollowOutput {
                log: f.log,
                ..Default::default()
            };
            (partial, Some(f.error))
        }
    };
    out.log.save_csv(&dir.join("trajectory.csv"))?;
    std::fs::write(dir.join("tips.csv"), tips_csv(&out.tips))?;
    if let Some(f) = &out.first_frame {
        f.save_pgm(&dir.join("frame_first.pgm"))?;
    }
    if let Some(f) = &out.last_frame {
        f.save_pgm(&dir.join("frame_last.pgm"))?;
    }
    report.steps = out.log.steps();
    data.log = out.log;
    report.min_margin_mm = true_min_margin(&data.log, model, &setup.cloud_b, spec.controller.delta)?;
    if let Some(e) = failure {
        return Err(e);
    }

    let errors = waypoint_errors(&path_p, &data.actual_p());
    report.rmse_mm = Some(rms(&errors));
    report.waypoint_errors_px = errors.iter().map(|e| e / spec.imaging.pixel_pitch).collect();
    report.waypoint_errors_mm = errors;
    report.success = true;
    Ok(())
}

/// Smallest body-point clearance over all logged configurations.
pub fn true_min_margin(
    log: &TrajectoryLog,
    model: &RobotModel,
    cloud_b: &PointCloud,
    delta: usize,
) -> Result<Option<f64>> {
    let mut best: Option<f64> = None;
    for r in &log.rows {
        for p in model.body_points(&r.q_r, &r.q_e, delta)? {
            let d = cloud_b.min_distance(&p);
            best = Some(best.map_or(d, |b| b.min(d)));
        }
    }
    Ok(best)
}

/// Assembles the report from per-trial results.
pub fn summarize(trials: Vec<TrialReport>, pixel_pitch: f64) -> Report {
    let ok: Vec<&TrialReport> = trials.iter().filter(|t| t.success).collect();
    let mean_rmse_mm = (!ok.is_empty()).then(|| ok.iter().filter_map(|t| t.rmse_mm).sum::<f64>() / ok.len() as f64);
    let waypoint_rmse_mm = if ok.is_empty() {
        Vec::new()
    } else {
        (0..EVAL_WAYPOINTS)
            .map(|j| rms(&ok.iter().map(|t| t.waypoint_errors_mm[j]).collect::<Vec<_>>()))
            .collect()
    };
    Report {
        pixel_pitch,
        succeeded: ok.len(),
        trials,
        mean_rmse_mm,
        waypoint_rmse_mm,
    }
}

/// Result of `run_experiment`: the report plus the in-memory trial data.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub report: Report,
    pub timing: Timing,
    pub trials: Vec<TrialData>,
}

/// Runs every trial, writes `report.json`, `timing.json`, per-trial raw
/// outputs and plot data under `spec.out`.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Experiment> {
    spec.validate()?;
    let model = spec.robot_model()?;
    let scene = load_scene(spec)?;
    std::fs::create_dir_all(&spec.out)?;
    std::fs::write(spec.out.join("spec.json"), serde_json::to_string_pretty(spec)?)?;

    let mut reports = Vec::new();
    let mut trials = Vec::new();
    let mut timing = Timing::default();
    for k in 0..spec.trials {
        let clock = Instant::now();
        let (r, d) = run_trial(spec, &model, &scene, k, &trial_dir(&spec.out, k));
        timing.trial_seconds.push(clock.elapsed().as_secs_f64());
        reports.push(r);
        trials.push(d);
    }
    let report = summarize(reports, spec.imaging.pixel_pitch);
    std::fs::write(spec.out.join("report.json"), serde_json::to_string_pretty(&report)?)?;
    std::fs::write(spec.out.join("timing.json"), serde_json::to_string_pretty(&timing)?)?;
    emit_plots(&report, &trials, &spec.out.join("plots"))?;
    Ok(Experiment { report, timing, trials })
}

pub const PATH_PLOT_HEADER: &str = "step,actual_x,actual_y,actual_z";
pub const PLANNED_PLOT_HEADER: &str = "index,x,y,z";
pub const RMSE_PLOT_HEADER: &str = "waypoint,fraction,rmse_mm";
pub const MARGIN_PLOT_HEADER: &str = "trial,step,min_margin";

/// Writes plot series into `dir`: per-trial planned and actual tip paths in
/// `{O_P}`, per-waypoint RMSE bars and margin-versus-step curves.
pub fn emit_plots(report: &Report, trials: &[TrialData], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut margins = format!("{MARGIN_PLOT_HEADER}\n");
    for t in trials {
        let mut actual = format!("{PATH_PLOT_HEADER}\n");
        for (row, p) in t.log.rows.iter().zip(t.actual_p()) {
            let _ = writeln!(actual, "{},{},{},{}", row.step, p.x, p.y, p.z);
            let _ = writeln!(margins, "{},{},{}", t.trial, row.step, row.min_margin);
        }
        std::fs::write(dir.join(format!("path_actual_{:02}.csv", t.trial)), actual)?;
        let mut planned = format!("{PLANNED_PLOT_HEADER}\n");
        for (i, p) in t.path_p.iter().flat_map(|p| p.waypoints.iter()).enumerate() {
            let _ = writeln!(planned, "{i},{},{},{}", p.x, p.y, p.z);
        }
        std::fs::write(dir.join(format!("path_planned_{:02}.csv", t.trial)), planned)?;
    }
    let mut bars = format!("{RMSE_PLOT_HEADER}\n");
    for (j, v) in report.waypoint_rmse_mm.iter().enumerate() {
        let _ = writeln!(bars, "{},{},{v}", j + 1, (j + 1) as f64 / (EVAL_WAYPOINTS + 1) as f64);
    }
    std::fs::write(dir.join("waypoint_rmse.csv"), bars)?;
    std::fs::write(dir.join("margins.csv"), margins)?;
    Ok(())
}

/// Consistency summary of a stored trajectory log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplaySummary {
    pub rows: usize,
    pub steps: usize,
    pub completed: bool,
    pub final_waypoint: usize,
    pub min_logged_margin: f64,
    /// Largest gap between the logged true tip and forward kinematics of
    /// the logged configuration, mm.
    pub max_fk_residual: f64,
    /// RMS gap between the image-based estimate and the true tip, mm.
    pub estimate_rms_error: f64,
}

/// Re-reads a trajectory log and checks it against the kinematic model.
pub fn replay(path: &Path, model: &RobotModel) -> Result<ReplaySummary> {
    let log = TrajectoryLog::load_csv(path)?;
    let mut max_fk_residual: f64 = 0.0;
    let mut est = Vec::with_capacity(log.len());
    for r in &log.rows {
        let tip = model.full_fk(&r.q_r, &r.q_e)?.translation;
        max_fk_residual = max_fk_residual.max((tip - r.tip_true).norm());
        est.push((r.tip_est - r.tip_true).norm());
    }
    let last = log.rows.last();
    Ok(ReplaySummary {
        rows: log.len(),
        steps: log.steps(),
        completed: last.is_some_and(|r| r.active_constraints.iter().any(|t| t == "done")),
        final_waypoint: last.map_or(0, |r| r.waypoint_index),
        min_logged_margin: log.min_margin(),
        max_fk_residual,
        estimate_rms_error: if est.is_empty() { 0.0 } else { rms(&est) },
    })
}

/// Writes a generated phantom: `cloud.csv`, `landmarks.json`,
/// `manifest.json` and the generator `spec.json`.
pub fn write_phantom(spec: &PhantomSpec, dir: &Path) -> Result<crate::environment::Phantom> {
    let ph = synth_phantom(spec)?;
    std::fs::create_dir_all(dir)?;
    save_cloud(&dir.join("cloud.csv"), &ph.cloud)?;
    ph.landmarks.save(&dir.join("landmarks.json"))?;
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&ph.manifest)?)?;
    std::fs::write(dir.join("spec.json"), serde_json::to_string_pretty(spec)?)?;
    Ok(ph)
}
