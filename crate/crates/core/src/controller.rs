//! Image-guided resolved-rate control of the arm and endoscope.
//!
//! Each step solves
//!
//! ```text
//! min ½ Δqᵀ A Δq   s.t.   J Δq = Δx,   lb ≤ Δq ≤ ub
//! ```
//!
//! where `J` is the translational tip Jacobian, `Δx` points from the
//! image-based tip estimate to the current waypoint and the bounds combine
//! the joint limits with a per-step clip. Obstacle clearance of the body
//! points is then enforced by halving the step.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SMatrix, Vector3};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::environment::{PlaneModel, PointCloud};
use crate::error::{Error, Result};
use crate::imaging::{self, GrayImage, ImagingConfig, PixelPoint, ProjectionModel};
use crate::kinematics::{split, stack, ArmConfig, EndoConfig, JointVector, RobotModel, ARM_DOF, ENDO_DOF, TOTAL_DOF};

pub type WeightMatrix = SMatrix<f64, TOTAL_DOF, TOTAL_DOF>;

/// Line-search step fractions tried against the obstacle constraint.
const LINE_SEARCH: [f64; 7] = [1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125, 0.015625];

/// Singular values below this fraction of the largest are treated as zero.
const RANK_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerConfig {
    /// Weight matrix of the joint-step objective, written as rows.
    #[serde(serialize_with = "ser_rows", deserialize_with = "de_rows")]
    pub a: WeightMatrix,
    /// Control period, s.
    pub dt: f64,
    /// Body-point obstacle clearance, mm.
    pub d_o: f64,
    /// Number of body points.
    pub delta: usize,
    /// Waypoint acceptance radius, mm.
    pub waypoint_tol: f64,
    pub max_steps_per_waypoint: usize,
    /// Per-step joint motion bound, rad.
    pub step_clip: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            a: WeightMatrix::identity(),
            dt: 0.1,
            d_o: 1.5,
            delta: 20,
            waypoint_tol: 1.0,
            max_steps_per_waypoint: 200,
            step_clip: 0.05,
        }
    }
}

fn ser_rows<S: Serializer>(m: &WeightMatrix, s: S) -> std::result::Result<S::Ok, S::Error> {
    let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
    rows.serialize(s)
}

fn de_rows<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<WeightMatrix, D::Error> {
    let rows = Vec::<Vec<f64>>::deserialize(d)?;
    if rows.len() != TOTAL_DOF || rows.iter().any(|r| r.len() != TOTAL_DOF) {
        return Err(serde::de::Error::custom(format!("A must be {TOTAL_DOF}×{TOTAL_DOF}")));
    }
    Ok(WeightMatrix::from_fn(|i, j| rows[i][j]))
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        if (self.a - self.a.transpose()).abs().max() > 1e-12 {
            return Err(Error::InvalidArgument("A must be symmetric".into()));
        }
        if self.a.cholesky().is_none() {
            return Err(Error::InvalidArgument("A must be positive definite".into()));
        }
        if !(self.dt > 0.0) {
            return Err(Error::InvalidArgument("dt must be positive".into()));
        }
        if !(self.d_o > 0.0) {
            return Err(Error::InvalidArgument("d_o must be positive".into()));
        }
        if self.delta < 2 {
            return Err(Error::InvalidArgument("delta must be at least 2".into()));
        }
        if !(self.waypoint_tol > 0.0) || !(self.step_clip > 0.0) || self.max_steps_per_waypoint == 0 {
            return Err(Error::InvalidArgument(
                "waypoint_tol, step_clip and max_steps_per_waypoint must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ControlState {
    pub q_r: ArmConfig,
    /// Raw endoscope angles, before compensation.
    pub q_e: EndoConfig,
    pub waypoint_index: usize,
    /// Image-based tip estimate in `{B}`, mm.
    pub tip_estimate: Vector3<f64>,
}

impl ControlState {
    pub fn q(&self) -> JointVector {
        stack(&self.q_r, &self.q_e)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    /// Joint step actually taken, already scaled by `alpha`.
    pub dq: JointVector,
    pub alpha: f64,
    pub feasible: bool,
    /// Tags: `lower:k`, `upper:k`, `clip:k` for active bounds, `dx_clamp`,
    /// `singular`, `partial` and `obstacle`.
    pub active_constraints: BTreeSet<String>,
    /// Tip position after applying `dq`, `{B}`.
    pub predicted_tip: Vector3<f64>,
    /// Smallest body-point margin after applying `dq`, mm.
    pub min_margin: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Slot {
    Free,
    Lower,
    Upper,
}

/// Solution of a box-constrained equality QP.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxQpSolution {
    pub x: DVector<f64>,
    /// Fraction `t` of the right-hand side that is satisfied: `J x = t b`.
    /// Below 1 when the bounds make the full equality unreachable.
    pub reached: f64,
    pub at_lower: Vec<usize>,
    pub at_upper: Vec<usize>,
}

/// Solves `min ½ xᵀ A x` subject to `J x = b` and `lb ≤ x ≤ ub` with
/// `lb ≤ 0 ≤ ub`.
///
/// The right-hand side is swept from `0` to `b`, starting at the feasible
/// origin. Along the sweep the solution is piecewise affine; the working
/// set changes where a free variable reaches a bound or a bound multiplier
/// changes sign. When the bounds leave `J` without full row rank on the
/// free variables the sweep stops and `reached < 1`.
pub fn solve_box_qp(
    a: &DMatrix<f64>,
    j: &DMatrix<f64>,
    b: &DVector<f64>,
    lb: &DVector<f64>,
    ub: &DVector<f64>,
) -> Result<BoxQpSolution> {
    let n = a.nrows();
    let m = j.nrows();
    if a.ncols() != n || j.ncols() != n || b.len() != m || lb.len() != n || ub.len() != n {
        return Err(Error::InvalidArgument("QP dimensions do not agree".into()));
    }
    for k in 0..n {
        if !(lb[k] <= 0.0 && 0.0 <= ub[k]) {
            return Err(Error::InfeasibleLimits(k));
        }
    }
    let mut slot = vec![Slot::Free; n];
    let mut x = DVector::zeros(n);
    let mut t = 0.0_f64;
    let max_events = 8 * n + 64;

    for _ in 0..max_events {
        let free: Vec<usize> = (0..n).filter(|&k| slot[k] == Slot::Free).collect();
        let fixed: Vec<usize> = (0..n).filter(|&k| slot[k] != Slot::Free).collect();
        let nf = free.len();
        let jf = DMatrix::from_fn(m, nf, |r, c| j[(r, free[c])]);
        if m > 0 && !full_row_rank(&jf) {
            break;
        }

        let mut kkt = DMatrix::zeros(nf + m, nf + m);
        for (r, &i) in free.iter().enumerate() {
            for (c, &k) in free.iter().enumerate() {
                kkt[(r, c)] = a[(i, k)];
            }
            for e in 0..m {
                kkt[(r, nf + e)] = -j[(e, i)];
                kkt[(nf + e, r)] = j[(e, i)];
            }
        }
        let mut rhs = DVector::zeros(nf + m);
        for (r, &i) in free.iter().enumerate() {
            rhs[r] = -fixed.iter().map(|&k| a[(i, k)] * x[k]).sum::<f64>();
        }
        for e in 0..m {
            rhs[nf + e] = t * b[e] - fixed.iter().map(|&k| j[(e, k)] * x[k]).sum::<f64>();
        }
        let mut drhs = DVector::zeros(nf + m);
        drhs.rows_mut(nf, m).copy_from(b);

        let lu = kkt.lu();
        let (Some(sol), Some(dsol)) = (lu.solve(&rhs), lu.solve(&drhs)) else {
            break;
        };
        for (r, &i) in free.iter().enumerate() {
            x[i] = sol[r];
        }
        let nu = sol.rows(nf, m).into_owned();
        let dnu = dsol.rows(nf, m).into_owned();
        let mut dx = DVector::zeros(n);
        for (r, &i) in free.iter().enumerate() {
            dx[i] = dsol[r];
        }
        let grad = a * &x - j.transpose() * &nu;
        let dgrad = a * &dx - j.transpose() * &dnu;

        let mut step = 1.0 - t;
        let mut event: Option<(usize, Slot)> = None;
        for k in 0..n {
            let tau = match slot[k] {
                Slot::Free if dx[k] < 0.0 => Some(((lb[k] - x[k]) / dx[k], Slot::Lower)),
                Slot::Free if dx[k] > 0.0 => Some(((ub[k] - x[k]) / dx[k], Slot::Upper)),
                Slot::Lower if dgrad[k] < 0.0 => Some((-grad[k] / dgrad[k], Slot::Free)),
                Slot::Upper if dgrad[k] > 0.0 => Some((-grad[k] / dgrad[k], Slot::Free)),
                _ => None,
            };
            if let Some((tau, to)) = tau {
                let tau = tau.max(0.0);
                if tau < step {
                    step = tau;
                    event = Some((k, to));
                }
            }
        }
        t += step;
        for &i in &free {
            x[i] += step * dx[i];
        }
        match event {
            None => {
                return Ok(finish(x, 1.0, &slot, lb, ub));
            }
            Some((k, to)) => {
                slot[k] = to;
                match to {
                    Slot::Lower => x[k] = lb[k],
                    Slot::Upper => x[k] = ub[k],
                    Slot::Free => {}
                }
            }
        }
    }
    Ok(finish(x, t, &slot, lb, ub))
}

fn finish(mut x: DVector<f64>, t: f64, slot: &[Slot], lb: &DVector<f64>, ub: &DVector<f64>) -> BoxQpSolution {
    for k in 0..x.len() {
        x[k] = x[k].clamp(lb[k], ub[k]);
    }
    BoxQpSolution {
        x,
        reached: t.min(1.0),
        at_lower: (0..slot.len()).filter(|&k| slot[k] == Slot::Lower).collect(),
        at_upper: (0..slot.len()).filter(|&k| slot[k] == Slot::Upper).collect(),
    }
}

fn full_row_rank(m: &DMatrix<f64>) -> bool {
    if m.ncols() < m.nrows() {
        return false;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let hi = sv.max();
    hi > 0.0 && sv.min() > RANK_TOL * hi
}

/// Minimum obstacle distance of each body point, base to tip.
pub fn obstacle_margins(
    state: &ControlState,
    env: &PointCloud,
    model: &RobotModel,
    cfg: &ControllerConfig,
) -> Result<Vec<f64>> {
    margins_at(&state.q(), env, model, cfg.delta)
}

fn margins_at(q: &JointVector, env: &PointCloud, model: &RobotModel, delta: usize) -> Result<Vec<f64>> {
    let (q_r, q_e) = split(q);
    Ok(model
        .body_points(&q_r, &q_e, delta)?
        .iter()
        .map(|p| env.min_distance(p))
        .collect())
}

fn min_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

/// One control step toward `target_b` from the state's tip estimate.
pub fn qp_step(
    state: &ControlState,
    target_b: &Vector3<f64>,
    model: &RobotModel,
    env: &PointCloud,
    cfg: &ControllerConfig,
) -> Result<StepResult> {
    let q = state.q();
    let limits = &model.limits;
    let lb = DVector::from_fn(TOTAL_DOF, |k, _| (limits.lower[k] - q[k]).max(-cfg.step_clip));
    let ub = DVector::from_fn(TOTAL_DOF, |k, _| (limits.upper[k] - q[k]).min(cfg.step_clip));
    for k in 0..TOTAL_DOF {
        if !(lb[k] <= 0.0 && 0.0 <= ub[k]) {
            return Err(Error::InfeasibleLimits(k));
        }
    }
    let mut tags = BTreeSet::new();
    let tip = model.tip(&q)?;
    let mut dx = target_b - state.tip_estimate;
    if dx.iter().all(|&v| v == 0.0) {
        let margins = margins_at(&q, env, model, cfg.delta)?;
        return Ok(StepResult {
            dq: JointVector::zeros(),
            alpha: 1.0,
            feasible: true,
            active_constraints: tags,
            predicted_tip: tip,
            min_margin: min_of(&margins),
        });
    }

    let (q_r, q_e) = split(&q);
    let jac = model.jacobian(&q_r, &q_e)?;
    if !jac.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidState("non-finite Jacobian".into()));
    }
    let svd = jac.svd(true, false);
    let u = svd.u.expect("requested U");
    let sv = svd.singular_values;
    let hi = sv.max();
    let keep: Vec<usize> = (0..3).filter(|&i| sv[i] > RANK_TOL * hi && sv[i] > 0.0).collect();
    if keep.len() < 3 {
        tags.insert("singular".to_string());
        // Only the part of Δx inside range(J) is achievable.
        dx = keep.iter().map(|&i| u.column(i) * u.column(i).dot(&dx)).sum();
    }
    if let Some(smallest) = keep.iter().map(|&i| sv[i]).reduce(f64::min) {
        let max_dx = cfg.step_clip * smallest;
        let norm = dx.norm();
        if norm > max_dx {
            dx *= max_dx / norm;
            tags.insert("dx_clamp".to_string());
        }
    }
    let (j_eq, b_eq) = if keep.len() == 3 {
        (
            DMatrix::from_fn(3, TOTAL_DOF, |r, c| jac[(r, c)]),
            DVector::from_column_slice(dx.as_slice()),
        )
    } else {
        (
            DMatrix::from_fn(keep.len(), TOTAL_DOF, |r, c| u.column(keep[r]).dot(&jac.column(c))),
            DVector::from_fn(keep.len(), |r, _| u.column(keep[r]).dot(&dx)),
        )
    };
    finish_step(&q, tip, &j_eq, &b_eq, &lb, &ub, model, env, cfg, tags)
}

#[allow(clippy::too_many_arguments)]
fn finish_step(
    q: &JointVector,
    tip: Vector3<f64>,
    j_eq: &DMatrix<f64>,
    b_eq: &DVector<f64>,
    lb: &DVector<f64>,
    ub: &DVector<f64>,
    model: &RobotModel,
    env: &PointCloud,
    cfg: &ControllerConfig,
    mut tags: BTreeSet<String>,
) -> Result<StepResult> {
    let a = DMatrix::from_fn(TOTAL_DOF, TOTAL_DOF, |r, c| cfg.a[(r, c)]);
    let sol = if j_eq.nrows() == 0 {
        BoxQpSolution {
            x: DVector::zeros(TOTAL_DOF),
            reached: 1.0,
            at_lower: vec![],
            at_upper: vec![],
        }
    } else {
        solve_box_qp(&a, j_eq, b_eq, lb, ub)?
    };
    if sol.reached < 1.0 {
        tags.insert("partial".to_string());
    }
    let limits = &model.limits;
    for &k in &sol.at_lower {
        let bound = limits.lower[k] - q[k];
        tags.insert(if bound > -cfg.step_clip {
            format!("lower:{k}")
        } else {
            format!("clip:{k}")
        });
    }
    for &k in &sol.at_upper {
        let bound = limits.upper[k] - q[k];
        tags.insert(if bound < cfg.step_clip {
            format!("upper:{k}")
        } else {
            format!("clip:{k}")
        });
    }
    let dq_full = JointVector::from_column_slice(sol.x.as_slice());

    for &alpha in &LINE_SEARCH {
        let q_new = limits.clamp(&(q + dq_full * alpha));
        let margins = margins_at(&q_new, env, model, cfg.delta)?;
        let min_margin = min_of(&margins);
        if min_margin > cfg.d_o {
            if alpha < 1.0 {
                tags.insert("obstacle".to_string());
            }
            return Ok(StepResult {
                dq: q_new - q,
                alpha,
                feasible: true,
                active_constraints: tags,
                predicted_tip: model.tip(&q_new)?,
                min_margin,
            });
        }
    }
    tags.insert("obstacle".to_string());
    let margins = margins_at(q, env, model, cfg.delta)?;
    Ok(StepResult {
        dq: JointVector::zeros(),
        alpha: 0.0,
        feasible: false,
        active_constraints: tags,
        predicted_tip: tip,
        min_margin: min_of(&margins),
    })
}

/// Everything the controller needs to turn a configuration into an image
/// and an image back into a tip estimate.
#[derive(Clone, Debug)]
pub struct ImagingLoop {
    /// Projection used to render frames (the true C-arm geometry).
    pub render_model: ProjectionModel,
    /// Registered projection used to interpret frames.
    pub model: ProjectionModel,
    /// Path plane in `{B}`.
    pub plane_b: PlaneModel,
    pub config: ImagingConfig,
    /// Base seed for per-frame noise.
    pub seed: u64,
}

impl ImagingLoop {
    fn frame_seed(&self, step: usize) -> u64 {
        self.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(step as u64)
    }
}

/// One row of the trajectory log.
#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    pub step: usize,
    pub waypoint_index: usize,
    pub u: f64,
    pub v: f64,
    pub tip_est: Vector3<f64>,
    pub tip_true: Vector3<f64>,
    pub q_r: ArmConfig,
    pub q_e: EndoConfig,
    pub min_margin: f64,
    /// Step fraction taken after this frame; 0 on the final row.
    pub alpha: f64,
    pub active_constraints: Vec<String>,
}

/// Per-frame record of a closed-loop run. Each row holds the configuration
/// at which the frame was taken and the step that followed it.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrajectoryLog {
    pub rows: Vec<LogRow>,
}

pub const LOG_HEADER: &str = "step,waypoint_index,u,v,tip_est_x,tip_est_y,tip_est_z,tip_true_x,tip_true_y,tip_true_z,\
q_r1,q_r2,q_r3,q_r4,q_r5,q_r6,q_r7,q_e1,q_e2,q_e3,q_e4,min_margin,alpha,active_constraints";

const LOG_COLUMNS: usize = 24;

impl TrajectoryLog {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Number of control steps taken.
    pub fn steps(&self) -> usize {
        self.rows.len().saturating_sub(1)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(LOG_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{},{},{},{}", r.step, r.waypoint_index, r.u, r.v);
            for x in r
                .tip_est
                .iter()
                .chain(r.tip_true.iter())
                .chain(r.q_r.0.iter())
                .chain(r.q_e.0.iter())
            {
                let _ = write!(out, ",{x}");
            }
            let _ = writeln!(out, ",{},{},{}", r.min_margin, r.alpha, r.active_constraints.join(";"));
        }
        out
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn from_csv(text: &str, source: &Path) -> Result<Self> {
        let mut rows = Vec::new();
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == LOG_HEADER => {}
            _ => {
                return Err(Error::MalformedRow {
                    path: source.to_path_buf(),
                    line: 1,
                    reason: "missing trajectory log header".into(),
                })
            }
        }
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |reason: String| Error::MalformedRow {
                path: source.to_path_buf(),
                line: i + 1,
                reason,
            };
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != LOG_COLUMNS {
                return Err(bad(format!("expected {LOG_COLUMNS} columns, got {}", cells.len())));
            }
            let int = |s: &str| s.parse::<usize>().map_err(|e| bad(format!("{s:?}: {e}")));
            let num: Vec<f64> = cells[2..23]
                .iter()
                .map(|s| s.parse::<f64>().map_err(|e| bad(format!("{s:?}: {e}"))))
                .collect::<Result<_>>()?;
            rows.push(LogRow {
                step: int(cells[0])?,
                waypoint_index: int(cells[1])?,
                u: num[0],
                v: num[1],
                tip_est: Vector3::new(num[2], num[3], num[4]),
                tip_true: Vector3::new(num[5], num[6], num[7]),
                q_r: ArmConfig::from_slice(&num[8..8 + ARM_DOF]),
                q_e: EndoConfig(nalgebra::Vector4::from_column_slice(&num[15..15 + ENDO_DOF])),
                min_margin: num[19],
                alpha: num[20],
                active_constraints: cells[23]
                    .split(';')
                    .filter(|s| !s.is_empty())
                    .map(str::to_string)
                    .collect(),
            });
        }
        Ok(Self { rows })
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::from_csv(&std::fs::read_to_string(path)?, path)
    }

    pub fn true_tips(&self) -> Vec<Vector3<f64>> {
        self.rows.iter().map(|r| r.tip_true).collect()
    }

    pub fn min_margin(&self) -> f64 {
        self.rows.iter().map(|r| r.min_margin).fold(f64::INFINITY, f64::min)
    }
}

/// Why a closed-loop run stopped early, with everything logged so far.
#[derive(Debug)]
pub struct FollowError {
    pub error: Error,
    pub log: TrajectoryLog,
    /// The frame that could not be processed, for imaging failures.
    pub frame: Option<GrayImage>,
}

impl std::fmt::Display for FollowError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} after {} logged frames", self.error, self.log.len())
    }
}

impl std::error::Error for FollowError {}

/// Frames kept for inspection while following a path.
#[derive(Clone, Debug, Default)]
pub struct FollowOutput {
    pub log: TrajectoryLog,
    pub first_frame: Option<GrayImage>,
    pub last_frame: Option<GrayImage>,
    pub tips: Vec<(usize, PixelPoint)>,
}

/// Drives the tip through `path_b` using image feedback only.
pub fn follow_path(
    initial: &ControlState,
    path_b: &[Vector3<f64>],
    model: &RobotModel,
    env: &PointCloud,
    imaging: &ImagingLoop,
    cfg: &ControllerConfig,
) -> std::result::Result<FollowOutput, Box<FollowError>> {
    let fail = |error: Error, out: &FollowOutput, frame: Option<GrayImage>| {
        Box::new(FollowError {
            error,
            log: out.log.clone(),
            frame,
        })
    };
    let mut out = FollowOutput::default();
    if let Err(e) = cfg.validate() {
        return Err(fail(e, &out, None));
    }
    if path_b.is_empty() {
        return Err(fail(Error::InvalidArgument("empty path".into()), &out, None));
    }
    let mut state = *initial;
    let mut on_waypoint = 0usize;
    let mut step = 0usize;
    loop {
        let q = state.q();
        let frame_data = model
            .body_points(&state.q_r, &state.q_e, cfg.delta)
            .and_then(|body| Ok((model.tip(&q)?, body)));
        let (tip_true, body) = match frame_data {
            Ok(v) => v,
            Err(e) => return Err(fail(e, &out, None)),
        };
        let margin = min_of(&body.iter().map(|p| env.min_distance(p)).collect::<Vec<_>>());
        let det = match imaging::detect_tip(&imaging.render_model, &imaging.config, &body, imaging.frame_seed(step)) {
            Ok(d) => d,
            Err((e, frame)) => return Err(fail(e, &out, frame)),
        };
        let estimate = match imaging::tip_to_base(&imaging.model, &imaging.plane_b, &det.tip_px) {
            Ok(p) => p,
            Err(e) => return Err(fail(e, &out, Some(det.frame))),
        };
        state.tip_estimate = estimate;
        out.tips.push((step, det.tip_px));
        if out.first_frame.is_none() {
            out.first_frame = Some(det.frame.clone());
        }

        while state.waypoint_index < path_b.len()
            && (estimate - path_b[state.waypoint_index]).norm() <= cfg.waypoint_tol
        {
            state.waypoint_index += 1;
            on_waypoint = 0;
        }
        let mut row = LogRow {
            step,
            waypoint_index: state.waypoint_index.min(path_b.len() - 1),
            u: det.tip_px.u,
            v: det.tip_px.v,
            tip_est: estimate,
            tip_true,
            q_r: state.q_r,
            q_e: state.q_e,
            min_margin: margin,
            alpha: 0.0,
            active_constraints: Vec::new(),
        };
        if state.waypoint_index == path_b.len() {
            row.active_constraints.push("done".into());
            out.log.rows.push(row);
            out.last_frame = Some(det.frame);
            return Ok(out);
        }
        if on_waypoint >= cfg.max_steps_per_waypoint {
            out.log.rows.push(row);
            out.last_frame = Some(det.frame);
            let e = Error::StepBudget {
                waypoint: state.waypoint_index,
                steps: on_waypoint,
            };
            return Err(fail(e, &out, None));
        }

        let res = match qp_step(&state, &path_b[state.waypoint_index], model, env, cfg) {
            Ok(r) => r,
            Err(e) => {
                out.log.rows.push(row);
                return Err(fail(e, &out, None));
            }
        };
        row.alpha = res.alpha;
        row.active_constraints = res.active_constraints.iter().cloned().collect();
        if !res.feasible {
            row.active_constraints.push("infeasible".into());
        }
        out.log.rows.push(row);
        out.last_frame = Some(det.frame);

        let q_new = model.limits.clamp(&(q + res.dq));
        let (q_r, q_e) = split(&q_new);
        state.q_r = q_r;
        state.q_e = q_e;
        on_waypoint += 1;
        step += 1;
    }
}
