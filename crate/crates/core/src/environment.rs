//! Obstacle point clouds, anatomical landmarks, the path plane and the
//! synthetic sinus phantom.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transform::RigidTransform;

/// Voxel size used when no clearance hint is given.
pub const DEFAULT_CELL_SIZE: f64 = 1.5;
const MAX_CELLS: usize = 1 << 22;

/// Uniform voxel grid over the cloud's bounding box; cell contents are
/// stored contiguously (CSR layout).
#[derive(Clone, Debug)]
struct VoxelGrid {
    origin: Vector3<f64>,
    cell: f64,
    dims: [usize; 3],
    starts: Vec<u32>,
    items: Vec<u32>,
}

impl VoxelGrid {
    fn build(points: &[Vector3<f64>], cell_hint: f64) -> Self {
        let mut lo = points[0];
        let mut hi = points[0];
        for p in points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        let extent = hi - lo;
        let mut cell = cell_hint.max(1e-6);
        let dims = loop {
            let d = [0, 1, 2].map(|i| ((extent[i] / cell).floor() as usize + 1).max(1));
            if d[0] * d[1] * d[2] <= MAX_CELLS {
                break d;
            }
            cell *= 2.0;
        };
        let mut grid = Self {
            origin: lo,
            cell,
            dims,
            starts: Vec::new(),
            items: Vec::new(),
        };
        let n_cells = dims[0] * dims[1] * dims[2];
        let keys: Vec<usize> = points.iter().map(|p| grid.flat(grid.cell_of(p))).collect();
        let mut counts = vec![0u32; n_cells + 1];
        for &k in &keys {
            counts[k + 1] += 1;
        }
        for i in 0..n_cells {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut items = vec![0u32; points.len()];
        for (idx, &k) in keys.iter().enumerate() {
            items[fill[k] as usize] = idx as u32;
            fill[k] += 1;
        }
        grid.starts = counts;
        grid.items = items;
        grid
    }

    fn cell_of(&self, p: &Vector3<f64>) -> [usize; 3] {
        [0, 1, 2].map(|i| {
            let f = ((p[i] - self.origin[i]) / self.cell).floor();
            if f.is_nan() || f < 0.0 {
                0
            } else {
                (f as usize).min(self.dims[i] - 1)
            }
        })
    }

    fn flat(&self, c: [usize; 3]) -> usize {
        (c[2] * self.dims[1] + c[1]) * self.dims[0] + c[0]
    }

    fn cell_items(&self, c: [usize; 3]) -> &[u32] {
        let f = self.flat(c);
        &self.items[self.starts[f] as usize..self.starts[f + 1] as usize]
    }

    /// True if some point lies strictly closer than `r` to `p`; only the
    /// cells overlapping the ball's bounding box are visited.
    fn any_within(&self, points: &[Vector3<f64>], p: &Vector3<f64>, r: f64) -> bool {
        let span = Vector3::repeat(r.max(0.0));
        let lo = self.cell_of(&(p - span));
        let hi = self.cell_of(&(p + span));
        for z in lo[2]..=hi[2] {
            for y in lo[1]..=hi[1] {
                for x in lo[0]..=hi[0] {
                    for &idx in self.cell_items([x, y, z]) {
                        if (points[idx as usize] - p).norm_squared().sqrt() < r {
                            return true;
                        }
                    }
                }
            }
        }
        false
    }

    /// Exact nearest squared distance, visiting Chebyshev shells around the
    /// query cell until no unvisited cell can hold a closer point.
    fn nearest_sq(&self, points: &[Vector3<f64>], p: &Vector3<f64>) -> f64 {
        let c = self.cell_of(p);
        let mut best = f64::INFINITY;
        let mut r = 0usize;
        loop {
            let lo = [0, 1, 2].map(|i| c[i].saturating_sub(r));
            let hi = [0, 1, 2].map(|i| (c[i] + r).min(self.dims[i] - 1));
            for z in lo[2]..=hi[2] {
                for y in lo[1]..=hi[1] {
                    let on_shell = z.abs_diff(c[2]) == r || y.abs_diff(c[1]) == r;
                    let mut visit = |x: usize| {
                        for &idx in self.cell_items([x, y, z]) {
                            let d2 = (points[idx as usize] - p).norm_squared();
                            if d2 < best {
                                best = d2;
                            }
                        }
                    };
                    if on_shell {
                        (lo[0]..=hi[0]).for_each(&mut visit);
                    } else {
                        // only the two x-faces of the shell
                        if c[0] >= r {
                            visit(c[0] - r);
                        }
                        if r > 0 && c[0] + r < self.dims[0] {
                            visit(c[0] + r);
                        }
                    }
                }
            }
            // Lower bound on the distance to any cell outside the visited cube.
            let mut bound = f64::INFINITY;
            for i in 0..3 {
                let box_lo = self.origin[i] + (c[i] as f64 - r as f64) * self.cell;
                let box_hi = self.origin[i] + (c[i] + r + 1) as f64 * self.cell;
                if c[i] > r {
                    bound = bound.min((p[i] - box_lo).max(0.0));
                }
                if c[i] + r < self.dims[i] - 1 {
                    bound = bound.min((box_hi - p[i]).max(0.0));
                }
            }
            if bound.is_infinite() {
                return best;
            }
            let bound = (bound - 1e-9).max(0.0);
            if best <= bound * bound {
                return best;
            }
            r += 1;
        }
    }
}

/// Non-empty set of obstacle points (mm) tagged with the frame they live in.
#[derive(Clone, Debug)]
pub struct PointCloud {
    points: Vec<Vector3<f64>>,
    frame: String,
    grid: VoxelGrid,
}

impl PointCloud {
    pub fn new(points: Vec<Vector3<f64>>, frame: impl Into<String>) -> Result<Self> {
        Self::with_cell_size(points, frame, DEFAULT_CELL_SIZE)
    }

    /// Builds the spatial index with cells of `max(cell, 1 mm)`.
    pub fn with_cell_size(points: Vec<Vector3<f64>>, frame: impl Into<String>, cell: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        if let Some(p) = points.iter().find(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(Error::InvalidArgument(format!("non-finite cloud point {p:?}")));
        }
        let grid = VoxelGrid::build(&points, cell.max(1.0));
        Ok(Self {
            points,
            frame: frame.into(),
            grid,
        })
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    pub fn frame(&self) -> &str {
        &self.frame
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Exact Euclidean distance from `p` to the nearest cloud point.
    pub fn min_distance(&self, p: &Vector3<f64>) -> f64 {
        self.grid.nearest_sq(&self.points, p).sqrt()
    }

    /// Same as `min_distance(p) >= r`, but cost is bounded by `r`.
    pub fn is_clear(&self, p: &Vector3<f64>, r: f64) -> bool {
        !self.grid.any_within(&self.points, p, r)
    }

    pub fn bounds(&self) -> (Vector3<f64>, Vector3<f64>) {
        let mut lo = self.points[0];
        let mut hi = self.points[0];
        for p in &self.points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        (lo, hi)
    }

    /// The same cloud expressed in another frame.
    pub fn transformed(&self, t: &RigidTransform, frame: impl Into<String>) -> Self {
        let points: Vec<_> = self.points.iter().map(|p| t.transform_point(p)).collect();
        Self::with_cell_size(points, frame, self.grid.cell).expect("rigid image of a valid cloud")
    }
}

/// Reads a CSV cloud: one `x,y,z` row per point. Blank lines and lines
/// starting with `#` are skipped.
pub fn load_cloud(path: &Path) -> Result<PointCloud> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path)?;
    let mut points = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let malformed = |reason: String| Error::MalformedRow {
            path: path.to_path_buf(),
            line: i + 1,
            reason,
        };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(malformed(format!("expected 3 fields, got {}", fields.len())));
        }
        let mut xyz = [0.0; 3];
        for (slot, f) in xyz.iter_mut().zip(&fields) {
            let v: f64 = f.parse().map_err(|_| malformed(format!("not a number: {f:?}")))?;
            if !v.is_finite() {
                return Err(malformed(format!("non-finite value {f:?}")));
            }
            *slot = v;
        }
        points.push(Vector3::from(xyz));
    }
    if points.is_empty() {
        return Err(Error::EmptyCloud);
    }
    PointCloud::new(points, "O_P")
}

pub fn save_cloud(path: &Path, cloud: &PointCloud) -> Result<()> {
    let mut out = String::with_capacity(cloud.len() * 32);
    for p in cloud.points() {
        let _ = writeln!(out, "{},{},{}", p.x, p.y, p.z);
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Anatomical landmarks in the phantom frame, mm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Landmarks {
    pub ostium: Vector3<f64>,
    pub nostril: Vector3<f64>,
    pub target: Vector3<f64>,
    pub start: Vector3<f64>,
}

impl Landmarks {
    /// Area of the nostril–ostium–target triangle, mm².
    pub fn plane_triangle_area(&self) -> f64 {
        0.5 * (self.ostium - self.nostril).cross(&(self.target - self.nostril)).norm()
    }

    pub fn validate(&self) -> Result<()> {
        let area = self.plane_triangle_area();
        if area.is_nan() || area <= 1.0 {
            return Err(Error::DegenerateGeometry(format!(
                "nostril, ostium and target span only {area:.3} mm²"
            )));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// The plane `n·x = offset` with a right-handed in-plane chart
/// `x = origin + u·axes[0] + v·axes[1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlaneModel {
    pub normal: Vector3<f64>,
    pub offset: f64,
    pub axes: [Vector3<f64>; 2],
    pub origin: Vector3<f64>,
}

impl PlaneModel {
    /// Plane through three points; the first in-plane axis points from `a` to `b`.
    pub fn through(a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> Result<Self> {
        let ab = b - a;
        let ac = c - a;
        let cross = ab.cross(&ac);
        let scale = ab.norm().max(ac.norm());
        if !(cross.norm() > 1e-12 * scale * scale) {
            return Err(Error::DegenerateGeometry("plane points are collinear".into()));
        }
        let normal = cross.normalize();
        let e1 = ab.normalize();
        let e2 = normal.cross(&e1);
        Ok(Self {
            normal,
            offset: normal.dot(a),
            axes: [e1, e2],
            origin: *a,
        })
    }

    pub fn signed_distance(&self, p: &Vector3<f64>) -> f64 {
        self.normal.dot(p) - self.offset
    }

    pub fn project(&self, p: &Vector3<f64>) -> Vector3<f64> {
        p - self.normal * self.signed_distance(p)
    }

    pub fn to_chart(&self, p: &Vector3<f64>) -> Vector2<f64> {
        let d = p - self.origin;
        Vector2::new(d.dot(&self.axes[0]), d.dot(&self.axes[1]))
    }

    pub fn from_chart(&self, uv: &Vector2<f64>) -> Vector3<f64> {
        self.origin + self.axes[0] * uv.x + self.axes[1] * uv.y
    }

    pub fn transformed(&self, t: &RigidTransform) -> Self {
        let normal = t.transform_vector(&self.normal);
        let origin = t.transform_point(&self.origin);
        Self {
            normal,
            offset: normal.dot(&origin),
            axes: self.axes.map(|a| t.transform_vector(&a)),
            origin,
        }
    }
}

/// The path plane through nostril, ostium and target.
pub fn fit_plane(landmarks: &Landmarks) -> Result<PlaneModel> {
    PlaneModel::through(&landmarks.nostril, &landmarks.ostium, &landmarks.target)
}

/// Free-space test used to keep waypoints inside the cavities.
#[derive(Clone, Debug)]
pub enum Cavity {
    /// Known solids of a generated phantom.
    Phantom(PhantomGeometry),
    /// Axis-aligned box, for externally supplied clouds.
    Box { min: Vector3<f64>, max: Vector3<f64> },
}

impl Cavity {
    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        match self {
            Cavity::Phantom(g) => g.contains(p),
            Cavity::Box { min, max } => (0..3).all(|i| p[i] >= min[i] && p[i] <= max[i]),
        }
    }
}

/// Obstacles plus the region the tip is allowed to occupy.
#[derive(Clone, Debug)]
pub struct Environment {
    pub cloud: PointCloud,
    pub cavity: Cavity,
}

impl Environment {
    /// External cloud: the cavity is the cloud's bounding box; clearance
    /// comes from the cloud itself.
    pub fn from_cloud(cloud: PointCloud) -> Self {
        let (min, max) = cloud.bounds();
        Self {
            cavity: Cavity::Box { min, max },
            cloud,
        }
    }

    pub fn from_phantom(phantom: &Phantom) -> Self {
        Self {
            cloud: phantom.cloud.clone(),
            cavity: Cavity::Phantom(phantom.geometry),
        }
    }

    /// In the cavity and at least `d_o` from every obstacle point.
    pub fn is_free(&self, p: &Vector3<f64>, d_o: f64) -> bool {
        self.cavity.contains(p) && self.cloud.is_clear(p, d_o)
    }
}

/// Generator parameters of the synthetic phantom. All lengths in mm.
///
/// Layout in `{O_P}`: a nasal tube along +x opening at `x = 0`, closed at
/// `x = nasal_length` by a wall pierced by the ostium corridor, which opens
/// into an ellipsoidal maxillary sinus.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhantomSpec {
    pub nasal_radius: f64,
    pub nasal_length: f64,
    /// Corridor width is twice this.
    pub corridor_radius: f64,
    pub corridor_length: f64,
    pub sinus_semi_axes: [f64; 3],
    pub point_spacing: f64,
    /// Depth of nostril/start landmarks inside the tube opening.
    pub nostril_inset: f64,
    /// Lateral (+y) offset of the nostril/start landmarks.
    pub nostril_offset: f64,
    /// Distance of the target beyond the corridor exit, along +x.
    pub target_depth: f64,
    /// Lateral (+y) offset of the target.
    pub target_lateral: f64,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            nasal_radius: 6.0,
            nasal_length: 40.0,
            corridor_radius: 2.0,
            corridor_length: 3.5,
            sinus_semi_axes: [10.0, 8.0, 8.0],
            point_spacing: 0.5,
            nostril_inset: 1.0,
            nostril_offset: 2.5,
            target_depth: 5.0,
            target_lateral: 0.0,
            seed: 1,
        }
    }
}

/// Solids making up the free space of a generated phantom.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhantomGeometry {
    pub nasal_radius: f64,
    pub nasal_length: f64,
    pub corridor_radius: f64,
    /// x where the corridor ends (inside the sinus).
    pub corridor_end: f64,
    pub sinus_center: Vector3<f64>,
    pub sinus_semi_axes: Vector3<f64>,
}

impl PhantomGeometry {
    fn in_tube(&self, p: &Vector3<f64>) -> bool {
        p.x >= 0.0 && p.x <= self.nasal_length && p.y * p.y + p.z * p.z < self.nasal_radius.powi(2)
    }

    fn in_corridor(&self, p: &Vector3<f64>) -> bool {
        p.x >= self.nasal_length && p.x <= self.corridor_end && p.y * p.y + p.z * p.z < self.corridor_radius.powi(2)
    }

    fn ellipsoid_level(&self, p: &Vector3<f64>) -> f64 {
        (p - self.sinus_center)
            .component_div(&self.sinus_semi_axes)
            .norm_squared()
    }

    fn in_sinus(&self, p: &Vector3<f64>) -> bool {
        self.ellipsoid_level(p) < 1.0
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        self.in_tube(p) || self.in_corridor(p) || self.in_sinus(p)
    }

    /// Strictly interior to the free space (by `tol`), used to drop
    /// surface samples that another chamber swallows.
    fn strictly_inside(&self, p: &Vector3<f64>, tol: f64) -> bool {
        let r2 = p.y * p.y + p.z * p.z;
        let tube = p.x > tol && p.x < self.nasal_length - tol && r2.sqrt() < self.nasal_radius - tol;
        let corridor =
            p.x > self.nasal_length + tol && p.x < self.corridor_end - tol && r2.sqrt() < self.corridor_radius - tol;
        let sinus = self.ellipsoid_level(p) < 1.0 - tol;
        tube || corridor || sinus
    }
}

/// Per-surface point counts written alongside a generated cloud.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomManifest {
    pub seed: u64,
    pub tube: usize,
    pub wall: usize,
    pub corridor: usize,
    pub sinus: usize,
    pub total: usize,
}

#[derive(Clone, Debug)]
pub struct Phantom {
    pub spec: PhantomSpec,
    pub geometry: PhantomGeometry,
    pub cloud: PointCloud,
    pub landmarks: Landmarks,
    pub manifest: PhantomManifest,
}

/// Generates the phantom cloud by stratified jittered sampling of the
/// free-space boundary. Deterministic in `spec.seed`.
pub fn synth_phantom(spec: &PhantomSpec) -> Result<Phantom> {
    let s = spec;
    let positive = [
        ("nasal_radius", s.nasal_radius),
        ("nasal_length", s.nasal_length),
        ("corridor_radius", s.corridor_radius),
        ("corridor_length", s.corridor_length),
        ("point_spacing", s.point_spacing),
        ("sinus_semi_axes[0]", s.sinus_semi_axes[0]),
        ("sinus_semi_axes[1]", s.sinus_semi_axes[1]),
        ("sinus_semi_axes[2]", s.sinus_semi_axes[2]),
    ];
    for (name, v) in positive {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
        }
    }
    let lateral_min = s.sinus_semi_axes[1].min(s.sinus_semi_axes[2]);
    if s.corridor_radius >= s.nasal_radius || s.corridor_radius >= lateral_min {
        return Err(Error::InvalidArgument(format!(
            "corridor radius {} must be smaller than both chambers",
            s.corridor_radius
        )));
    }
    let a = s.sinus_semi_axes[0];
    let corridor_end = s.nasal_length + s.corridor_length;
    // Place the sinus so its wall crosses the corridor radius exactly at the corridor end.
    let recess = a * (1.0 - (s.corridor_radius / lateral_min).powi(2)).sqrt();
    if a - recess >= s.corridor_length {
        return Err(Error::InvalidArgument(
            "corridor is too short to reach the sinus wall".into(),
        ));
    }
    let geometry = PhantomGeometry {
        nasal_radius: s.nasal_radius,
        nasal_length: s.nasal_length,
        corridor_radius: s.corridor_radius,
        corridor_end,
        sinus_center: Vector3::new(corridor_end + recess, 0.0, 0.0),
        sinus_semi_axes: Vector3::from(s.sinus_semi_axes),
    };

    let h = s.point_spacing;
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let tol = 1e-9;
    let mut points = Vec::new();
    let keep = |p: Vector3<f64>, points: &mut Vec<Vector3<f64>>| -> usize {
        if geometry.strictly_inside(&p, tol) {
            0
        } else {
            points.push(p);
            1
        }
    };

    // nasal tube wall
    let mut tube = 0;
    let n_theta = (2.0 * PI * s.nasal_radius / h).ceil() as usize;
    let n_x = (s.nasal_length / h).ceil() as usize;
    for j in 0..n_x {
        for i in 0..n_theta {
            let x = (j as f64 + rng.random::<f64>()) * s.nasal_length / n_x as f64;
            let t = (i as f64 + rng.random::<f64>()) * 2.0 * PI / n_theta as f64;
            tube += keep(
                Vector3::new(x, s.nasal_radius * t.cos(), s.nasal_radius * t.sin()),
                &mut points,
            );
        }
    }

    // end wall of the tube, an annulus around the ostium
    let mut wall = 0;
    let n_r = ((s.nasal_radius - s.corridor_radius) / h).ceil() as usize;
    let dr = (s.nasal_radius - s.corridor_radius) / n_r as f64;
    for k in 0..n_r {
        let r_mid = s.corridor_radius + (k as f64 + 0.5) * dr;
        let n_t = (2.0 * PI * r_mid / h).ceil() as usize;
        for i in 0..n_t {
            let r = s.corridor_radius + (k as f64 + rng.random::<f64>()) * dr;
            let t = (i as f64 + rng.random::<f64>()) * 2.0 * PI / n_t as f64;
            wall += keep(Vector3::new(s.nasal_length, r * t.cos(), r * t.sin()), &mut points);
        }
    }

    // ostium corridor
    let mut corridor = 0;
    let n_theta = (2.0 * PI * s.corridor_radius / h).ceil() as usize;
    let n_x = (s.corridor_length / h).ceil() as usize;
    for j in 0..n_x {
        for i in 0..n_theta {
            let x = s.nasal_length + (j as f64 + rng.random::<f64>()) * s.corridor_length / n_x as f64;
            let t = (i as f64 + rng.random::<f64>()) * 2.0 * PI / n_theta as f64;
            corridor += keep(
                Vector3::new(x, s.corridor_radius * t.cos(), s.corridor_radius * t.sin()),
                &mut points,
            );
        }
    }

    // sinus ellipsoid, banded in the polar angle from -x
    let mut sinus = 0;
    let mean = (s.sinus_semi_axes.iter().sum::<f64>()) / 3.0;
    let n_polar = (PI * mean / h).ceil() as usize;
    for k in 0..n_polar {
        let band_mid = (k as f64 + 0.5) * PI / n_polar as f64;
        let n_az = ((2.0 * PI * mean * band_mid.sin() / h).ceil() as usize).max(1);
        for i in 0..n_az {
            let polar = (k as f64 + rng.random::<f64>()) * PI / n_polar as f64;
            let az = (i as f64 + rng.random::<f64>()) * 2.0 * PI / n_az as f64;
            let dir = Vector3::new(-polar.cos(), polar.sin() * az.cos(), polar.sin() * az.sin());
            sinus += keep(
                geometry.sinus_center + dir.component_mul(&geometry.sinus_semi_axes),
                &mut points,
            );
        }
    }

    let nostril = Vector3::new(s.nostril_inset, s.nostril_offset, 0.0);
    let landmarks = Landmarks {
        ostium: Vector3::new(s.nasal_length + 0.5 * s.corridor_length, 0.0, 0.0),
        nostril,
        target: Vector3::new(corridor_end + s.target_depth, s.target_lateral, 0.0),
        start: nostril,
    };
    landmarks.validate()?;
    let manifest = PhantomManifest {
        seed: s.seed,
        tube,
        wall,
        corridor,
        sinus,
        total: points.len(),
    };
    let cloud = PointCloud::new(points, "O_P")?;
    let min_clear = 0.5 * s.corridor_radius;
    for (name, p) in [
        ("nostril", landmarks.nostril),
        ("ostium", landmarks.ostium),
        ("target", landmarks.target),
        ("start", landmarks.start),
    ] {
        if !geometry.contains(&p) || !cloud.is_clear(&p, min_clear) {
            return Err(Error::InvalidArgument(format!(
                "{name} landmark is not in free space for this spec"
            )));
        }
    }
    Ok(Phantom {
        spec: *spec,
        geometry,
        cloud,
        landmarks,
        manifest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn brute(cloud: &PointCloud, p: &Vector3<f64>) -> f64 {
        cloud
            .points()
            .iter()
            .map(|c| (c - p).norm())
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn single_point_distance() {
        let cloud = PointCloud::new(vec![Vector3::zeros()], "O_P").unwrap();
        assert_eq!(cloud.min_distance(&Vector3::new(3.0, 4.0, 0.0)), 5.0);
        assert_eq!(cloud.min_distance(&Vector3::zeros()), 0.0);
    }

    #[test]
    fn empty_and_non_finite_clouds_are_rejected() {
        assert!(matches!(PointCloud::new(vec![], "O_P"), Err(Error::EmptyCloud)));
        assert!(PointCloud::new(vec![Vector3::new(f64::NAN, 0.0, 0.0)], "O_P").is_err());
    }

    #[test]
    fn grid_matches_brute_force_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pts: Vec<_> = (0..1000)
            .map(|_| {
                Vector3::new(
                    rng.random_range(-20.0..20.0),
                    rng.random_range(-5.0..5.0),
                    rng.random_range(0.0..3.0),
                )
            })
            .collect();
        let cloud = PointCloud::new(pts, "O_P").unwrap();
        for _ in 0..100 {
            let p = Vector3::new(
                rng.random_range(-40.0..40.0),
                rng.random_range(-15.0..15.0),
                rng.random_range(-10.0..10.0),
            );
            assert_eq!(cloud.min_distance(&p).to_bits(), brute(&cloud, &p).to_bits());
        }
    }

    #[test]
    fn is_clear_agrees_with_min_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pts: Vec<_> = (0..500)
            .map(|_| {
                Vector3::new(
                    rng.random_range(-20.0..20.0),
                    rng.random_range(-20.0..20.0),
                    rng.random_range(-2.0..2.0),
                )
            })
            .collect();
        let cloud = PointCloud::new(pts, "O_P").unwrap();
        for _ in 0..500 {
            let p = Vector3::new(
                rng.random_range(-30.0..30.0),
                rng.random_range(-30.0..30.0),
                rng.random_range(-8.0..8.0),
            );
            let r = rng.random_range(0.0..6.0);
            assert_eq!(cloud.is_clear(&p, r), cloud.min_distance(&p) >= r);
        }
        let d = cloud.min_distance(&Vector3::zeros());
        assert!(cloud.is_clear(&Vector3::zeros(), d));
    }

    #[test]
    fn plane_through_unit_triangle() {
        let p = PlaneModel::through(&Vector3::zeros(), &Vector3::x(), &Vector3::y()).unwrap();
        assert!((p.normal.z.abs() - 1.0).abs() < 1e-15);
        assert!(p.offset.abs() < 1e-15);
        assert!((p.axes[0].cross(&p.axes[1]) - p.normal).norm() < 1e-15);
        let bad = PlaneModel::through(&Vector3::zeros(), &Vector3::x(), &(Vector3::x() * 2.0));
        assert!(matches!(bad, Err(Error::DegenerateGeometry(_))));
    }

    #[test]
    fn chart_round_trip() {
        let p = PlaneModel::through(
            &Vector3::new(1.0, 2.0, 3.0),
            &Vector3::new(4.0, -1.0, 2.0),
            &Vector3::new(0.0, 5.0, -2.0),
        )
        .unwrap();
        let x = p.from_chart(&Vector2::new(3.5, -7.25));
        assert!(p.signed_distance(&x).abs() < 1e-12);
        assert!((p.to_chart(&x) - Vector2::new(3.5, -7.25)).norm() < 1e-12);
    }

    #[test]
    fn phantom_is_deterministic_and_landmarks_are_clear() {
        let spec = PhantomSpec::default();
        let a = synth_phantom(&spec).unwrap();
        let b = synth_phantom(&spec).unwrap();
        assert_eq!(a.cloud.points(), b.cloud.points());
        assert_eq!(a.manifest.total, a.cloud.len());
        let lm = a.landmarks;
        for p in [lm.nostril, lm.ostium, lm.target, lm.start] {
            assert!(brute(&a.cloud, &p) >= spec.corridor_radius / 2.0);
        }
        assert!(lm.plane_triangle_area() > 1.0);
        let other = synth_phantom(&PhantomSpec { seed: 2, ..spec }).unwrap();
        assert_ne!(other.cloud.points(), a.cloud.points());
    }

    #[test]
    fn corridor_wider_than_chamber_is_rejected() {
        let spec = PhantomSpec {
            corridor_radius: 7.0,
            ..Default::default()
        };
        assert!(matches!(synth_phantom(&spec), Err(Error::InvalidArgument(_))));
        let spec = PhantomSpec {
            corridor_radius: 0.0,
            ..Default::default()
        };
        assert!(synth_phantom(&spec).is_err());
    }

    #[test]
    fn phantom_cavity_membership() {
        let ph = synth_phantom(&PhantomSpec::default()).unwrap();
        let g = ph.geometry;
        assert!(g.contains(&Vector3::new(20.0, 0.0, 0.0)));
        assert!(g.contains(&Vector3::new(41.0, 0.0, 0.0)));
        assert!(!g.contains(&Vector3::new(41.0, 3.0, 0.0)));
        assert!(!g.contains(&Vector3::new(-1.0, 0.0, 0.0)));
        assert!(g.contains(&ph.landmarks.target));
    }

    #[test]
    fn collinear_landmarks_fail_validation() {
        let lm = Landmarks {
            ostium: Vector3::new(10.0, 0.0, 0.0),
            nostril: Vector3::zeros(),
            target: Vector3::new(20.0, 0.0, 0.0),
            start: Vector3::zeros(),
        };
        assert!(lm.validate().is_err());
        assert!(fit_plane(&lm).is_err());
    }
}
