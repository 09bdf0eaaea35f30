//! Plane-constrained RRT for the tip path.
//!
//! Sampling happens in the 2-D chart of the path plane, so every waypoint
//! lies on the plane by construction. A waypoint is admissible when it is
//! inside the cavity and at least `d_o` from every obstacle point; edges
//! are checked by resampling at `check_resolution`.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::environment::{Environment, PlaneModel};
use crate::error::{Error, Result};

/// Waypoints may sit this far off the plane and still count as on it.
pub const PLANE_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    /// RRT extension length and maximum waypoint spacing, mm.
    pub step_size: f64,
    pub goal_bias: f64,
    pub max_iters: usize,
    /// Obstacle clearance, mm.
    pub d_o: f64,
    pub seed: u64,
    pub shortcut_passes: usize,
    /// Sample spacing for edge checks, mm.
    pub check_resolution: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            step_size: 2.0,
            goal_bias: 0.1,
            max_iters: 20_000,
            d_o: 1.5,
            seed: 0,
            shortcut_passes: 100,
            check_resolution: 0.1,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0) {
            return Err(Error::InvalidArgument("step_size must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.goal_bias) {
            return Err(Error::InvalidArgument("goal_bias must lie in [0, 1]".into()));
        }
        if !(self.d_o > 0.0) {
            return Err(Error::InvalidArgument("d_o must be positive".into()));
        }
        if !(self.check_resolution > 0.0) {
            return Err(Error::InvalidArgument("check_resolution must be positive".into()));
        }
        Ok(())
    }
}

/// Ordered tip waypoints in `{O_P}`, start first and target last.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PathP {
    pub waypoints: Vec<Vector3<f64>>,
}

impl PathP {
    pub fn length(&self) -> f64 {
        polyline_length(&self.waypoints)
    }

    /// Point at arc-length fraction `f ∈ [0, 1]` along the polyline.
    pub fn point_at_fraction(&self, f: f64) -> Vector3<f64> {
        point_at_fraction(&self.waypoints, f)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,z\n");
        for p in &self.waypoints {
            let _ = writeln!(out, "{},{},{}", p.x, p.y, p.z);
        }
        out
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path)?;
        let mut waypoints = Vec::new();
        for (i, line) in text.lines().enumerate().skip(1) {
            let v: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse(format!("{}:{}: {e}", path.display(), i + 1)))?;
            if v.len() != 3 {
                return Err(Error::Parse(format!("{}:{}: expected x,y,z", path.display(), i + 1)));
            }
            waypoints.push(Vector3::new(v[0], v[1], v[2]));
        }
        Ok(Self { waypoints })
    }
}

pub fn polyline_length(points: &[Vector3<f64>]) -> f64 {
    points.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
}

pub fn point_at_fraction(points: &[Vector3<f64>], f: f64) -> Vector3<f64> {
    let total = polyline_length(points);
    let goal = f.clamp(0.0, 1.0) * total;
    let mut acc = 0.0;
    for w in points.windows(2) {
        let len = (w[1] - w[0]).norm();
        if acc + len >= goal && len > 0.0 {
            return w[0] + (w[1] - w[0]) * ((goal - acc) / len);
        }
        acc += len;
    }
    *points.last().expect("non-empty polyline")
}

/// Evenly spaced samples on `[a, b]`, both ends included, spacing ≤ `resolution`.
pub fn segment_samples(a: &Vector3<f64>, b: &Vector3<f64>, resolution: f64) -> Vec<Vector3<f64>> {
    let n = ((b - a).norm() / resolution).ceil().max(1.0) as usize;
    (0..=n).map(|i| a + (b - a) * (i as f64 / n as f64)).collect()
}

/// Points after `a` up to and including `b`, spaced at most `step` apart.
pub fn densify(a: &Vector3<f64>, b: &Vector3<f64>, step: f64) -> Vec<Vector3<f64>> {
    let n = ((b - a).norm() / step).ceil().max(1.0) as usize;
    (1..=n).map(|i| a + (b - a) * (i as f64 / n as f64)).collect()
}

/// True iff every sample along `[a, b]` is in the cavity and at least `d_o`
/// from the obstacles.
pub fn edge_clear(env: &Environment, a: &Vector3<f64>, b: &Vector3<f64>, d_o: f64, resolution: f64) -> bool {
    segment_samples(a, b, resolution).iter().all(|p| env.is_free(p, d_o))
}

/// Straight replacement for `a → b`, densified to `step`, if every
/// sub-segment is clear.
fn clear_chord(
    env: &Environment,
    a: &Vector3<f64>,
    b: &Vector3<f64>,
    cfg: &PlannerConfig,
) -> Option<Vec<Vector3<f64>>> {
    let pts = densify(a, b, cfg.step_size);
    let mut prev = *a;
    for p in &pts {
        if !edge_clear(env, &prev, p, cfg.d_o, cfg.check_resolution) {
            return None;
        }
        prev = *p;
    }
    Some(pts)
}

/// Random chord shortcutting. Endpoints are kept and the length never grows.
pub fn shortcut(path: &PathP, env: &Environment, cfg: &PlannerConfig) -> PathP {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_c0de);
    let mut pts = path.waypoints.clone();
    for _ in 0..cfg.shortcut_passes {
        if pts.len() < 3 {
            break;
        }
        let i = rng.random_range(0..pts.len() - 2);
        let j = rng.random_range(i + 2..pts.len());
        let old = polyline_length(&pts[i..=j]);
        if (pts[j] - pts[i]).norm() >= old - 1e-9 {
            continue;
        }
        if let Some(chord) = clear_chord(env, &pts[i], &pts[j], cfg) {
            pts.splice(i + 1..=j, chord);
        }
    }
    PathP { waypoints: pts }
}

/// Plans a clear path on `plane` from `start` to `target`.
pub fn plan(
    env: &Environment,
    plane: &PlaneModel,
    start: &Vector3<f64>,
    target: &Vector3<f64>,
    cfg: &PlannerConfig,
) -> Result<PathP> {
    cfg.validate()?;
    let on_plane = |p: &Vector3<f64>, name: &str| -> Result<Vector3<f64>> {
        let d = plane.signed_distance(p);
        if d.abs() > PLANE_TOLERANCE {
            return Err(Error::InvalidArgument(format!("{name} is {d:e} mm off the path plane")));
        }
        Ok(plane.project(p))
    };
    let start = on_plane(start, "start")?;
    let target = on_plane(target, "target")?;
    for (name, p) in [("start", &start), ("target", &target)] {
        if !env.is_free(p, cfg.d_o) {
            return Err(Error::InfeasibleEndpoint(format!(
                "{name} {:?} is in collision or outside the cavity",
                p.as_slice()
            )));
        }
    }
    if (target - start).norm() < 1e-12 {
        return Ok(PathP { waypoints: vec![start] });
    }

    let s2 = plane.to_chart(&start);
    let g2 = plane.to_chart(&target);
    let (mut lo, mut hi) = (s2.inf(&g2), s2.sup(&g2));
    for p in env.cloud.points() {
        let uv = plane.to_chart(p);
        lo = lo.inf(&uv);
        hi = hi.sup(&uv);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut nodes: Vec<Vector2<f64>> = vec![s2];
    let mut lifted: Vec<Vector3<f64>> = vec![start];
    let mut parent: Vec<usize> = vec![0];
    let reach = |from: &Vector3<f64>, to: &Vector3<f64>| edge_clear(env, from, to, cfg.d_o, cfg.check_resolution);

    let mut goal_parent = None;
    if (g2 - s2).norm() <= cfg.step_size && reach(&start, &target) {
        goal_parent = Some(0);
    }
    let mut iter = 0;
    while goal_parent.is_none() && iter < cfg.max_iters {
        iter += 1;
        let sample = if rng.random::<f64>() < cfg.goal_bias {
            g2
        } else {
            Vector2::new(rng.random_range(lo.x..=hi.x), rng.random_range(lo.y..=hi.y))
        };
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (k, n) in nodes.iter().enumerate() {
            let d = (n - sample).norm_squared();
            if d < best_d {
                best_d = d;
                best = k;
            }
        }
        let dist = best_d.sqrt();
        if dist < 1e-12 {
            continue;
        }
        let new2 = if dist <= cfg.step_size {
            sample
        } else {
            nodes[best] + (sample - nodes[best]) * (cfg.step_size / dist)
        };
        let new3 = plane.from_chart(&new2);
        if !reach(&lifted[best], &new3) {
            continue;
        }
        nodes.push(new2);
        lifted.push(new3);
        parent.push(best);
        let k = nodes.len() - 1;
        if (g2 - new2).norm() <= cfg.step_size && reach(&new3, &target) {
            goal_parent = Some(k);
        }
    }
    let Some(mut k) = goal_parent else {
        return Err(Error::NoPathFound {
            iterations: cfg.max_iters,
            seed: cfg.seed,
        });
    };

    let mut rev = vec![target];
    loop {
        rev.push(lifted[k]);
        if k == 0 {
            break;
        }
        k = parent[k];
    }
    rev.reverse();
    let raw = PathP { waypoints: rev };
    Ok(shortcut(&raw, env, cfg))
}

/// Checks every path invariant: endpoints, clearance, cavity membership,
/// planarity and spacing.
pub fn check_path(
    path: &PathP,
    env: &Environment,
    plane: &PlaneModel,
    start: &Vector3<f64>,
    target: &Vector3<f64>,
    cfg: &PlannerConfig,
) -> std::result::Result<(), String> {
    let w = &path.waypoints;
    let (Some(first), Some(last)) = (w.first(), w.last()) else {
        return Err("empty path".into());
    };
    if (first - start).norm() > PLANE_TOLERANCE || (last - target).norm() > PLANE_TOLERANCE {
        return Err("path does not join start to target".into());
    }
    for (i, p) in w.iter().enumerate() {
        if plane.signed_distance(p).abs() > PLANE_TOLERANCE {
            return Err(format!("waypoint {i} is off the plane"));
        }
        if !env.is_free(p, cfg.d_o) {
            return Err(format!("waypoint {i} violates clearance or containment"));
        }
    }
    for (i, pair) in w.windows(2).enumerate() {
        if (pair[1] - pair[0]).norm() > cfg.step_size + 1e-9 {
            return Err(format!("segment {i} is longer than the step size"));
        }
    }
    Ok(())
}
