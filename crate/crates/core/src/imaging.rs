//! Simulated fluoroscopy: orthographic projection, endoscope rendering,
//! threshold segmentation, thinning and tip localization.
//!
//! Pixel `(u, v)` has its centre at integer coordinates, `u` to the right
//! and `v` down from the top-left pixel.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix2, Matrix3x4, Vector2, Vector3, Vector4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::environment::PlaneModel;
use crate::error::{Error, Result};

/// Default detector pixel pitch, mm per pixel.
pub const DEFAULT_PIXEL_PITCH: f64 = 0.42;

/// Largest accepted condition number of the plane-to-image map.
const MAX_CONDITION: f64 = 1e8;

/// Affine base-to-image map `[u, v, 1]ᵀ = K [X, Y, Z, 1]ᵀ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionModel {
    /// Rows of `K`; the last row is `(0, 0, 0, 1)`.
    pub k: [[f64; 4]; 3],
    pub width: usize,
    pub height: usize,
    pub pixel_pitch: f64,
}

impl ProjectionModel {
    pub fn new(k: Matrix3x4<f64>, width: usize, height: usize, pixel_pitch: f64) -> Result<Self> {
        let pm = Self {
            k: std::array::from_fn(|i| std::array::from_fn(|j| k[(i, j)])),
            width,
            height,
            pixel_pitch,
        };
        pm.validate()?;
        Ok(pm)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pixel_pitch > 0.0) {
            return Err(Error::InvalidArgument("pixel_pitch must be positive".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidArgument("image size must be non-zero".into()));
        }
        if self.k.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("K has non-finite entries".into()));
        }
        if self.k[2] != [0.0, 0.0, 0.0, 1.0] {
            return Err(Error::InvalidArgument("last row of K must be (0, 0, 0, 1)".into()));
        }
        Ok(())
    }

    pub fn matrix(&self) -> Matrix3x4<f64> {
        Matrix3x4::from_fn(|i, j| self.k[i][j])
    }

    /// The 2×3 linear part and the offset of the image map.
    fn affine(&self) -> (nalgebra::Matrix2x3<f64>, Vector2<f64>) {
        let m = nalgebra::Matrix2x3::from_fn(|i, j| self.k[i][j]);
        (m, Vector2::new(self.k[0][3], self.k[1][3]))
    }

    pub fn in_view(&self, px: &PixelPoint) -> bool {
        px.u >= -0.5 && px.v >= -0.5 && px.u < self.width as f64 - 0.5 && px.v < self.height as f64 - 0.5
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PixelPoint {
    pub u: f64,
    pub v: f64,
}

impl PixelPoint {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn distance(&self, other: &PixelPoint) -> f64 {
        (self.u - other.u).hypot(self.v - other.v)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    /// Row-major intensities.
    pub data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0; width * height],
        }
    }

    pub fn get(&self, u: usize, v: usize) -> u8 {
        self.data[v * self.width + u]
    }

    /// Binary PGM (P5).
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }

    pub fn save_pgm(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_pgm())?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    pub width: usize,
    pub height: usize,
    /// Row-major, `true` for foreground.
    pub data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn get(&self, u: usize, v: usize) -> bool {
        self.data[v * self.width + u]
    }

    pub fn set(&mut self, u: usize, v: usize, value: bool) {
        self.data[v * self.width + u] = value;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// Foreground pixels as `(u, v)` in row-major order.
    pub fn pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| (i % self.width, i / self.width))
    }

    /// Foreground 8-neighbours of `(u, v)`.
    pub fn neighbour_count(&self, u: usize, v: usize) -> usize {
        ring(self, u, v).iter().filter(|&&b| b).count()
    }

    /// Binary PBM (P4), foreground as black.
    pub fn to_pbm(&self) -> Vec<u8> {
        let mut out = format!("P4\n{} {}\n", self.width, self.height).into_bytes();
        let stride = self.width.div_ceil(8);
        for v in 0..self.height {
            let mut row = vec![0u8; stride];
            for u in 0..self.width {
                if self.get(u, v) {
                    row[u / 8] |= 0x80 >> (u % 8);
                }
            }
            out.extend_from_slice(&row);
        }
        out
    }

    pub fn save_pbm(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_pbm())?;
        Ok(())
    }
}

/// `[u, v]` of a base-frame point.
pub fn project(pm: &ProjectionModel, p_b: &Vector3<f64>) -> PixelPoint {
    let uv = pm.matrix() * Vector4::new(p_b.x, p_b.y, p_b.z, 1.0);
    PixelPoint::new(uv[0], uv[1])
}

/// Additive Gaussian intensity noise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub sigma: f64,
    pub seed: u64,
}

fn point_segment_distance(p: Vector2<f64>, a: Vector2<f64>, b: Vector2<f64>) -> f64 {
    let d = b - a;
    let len2 = d.norm_squared();
    let t = if len2 > 0.0 {
        ((p - a).dot(&d) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p - (a + d * t)).norm()
}

/// Draws the projected body polyline as a bright band of the given
/// half-width (pixels) on a dark background.
pub fn render_endoscope(
    pm: &ProjectionModel,
    body: &[Vector3<f64>],
    half_width: f64,
    noise: Option<NoiseModel>,
) -> Result<GrayImage> {
    if body.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 body points, got {}",
            body.len()
        )));
    }
    if !(half_width > 0.0) {
        return Err(Error::InvalidArgument("half_width must be positive".into()));
    }
    let pts: Vec<Vector2<f64>> = body
        .iter()
        .map(|p| {
            let px = project(pm, p);
            Vector2::new(px.u, px.v)
        })
        .collect();
    let mut img = GrayImage::new(pm.width, pm.height);
    let (w, h) = (pm.width as f64, pm.height as f64);
    let mut drawn = false;
    for seg in pts.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let lo_u = (a.x.min(b.x) - half_width).floor().max(0.0);
        let hi_u = (a.x.max(b.x) + half_width).ceil().min(w - 1.0);
        let lo_v = (a.y.min(b.y) - half_width).floor().max(0.0);
        let hi_v = (a.y.max(b.y) + half_width).ceil().min(h - 1.0);
        if !(lo_u <= hi_u && lo_v <= hi_v) {
            continue;
        }
        for v in lo_v as usize..=hi_v as usize {
            for u in lo_u as usize..=hi_u as usize {
                let c = Vector2::new(u as f64, v as f64);
                if point_segment_distance(c, a, b) <= half_width {
                    img.data[v * pm.width + u] = 255;
                    drawn = true;
                }
            }
        }
    }
    if !drawn {
        return Err(Error::EmptyFrame);
    }
    if let Some(n) = noise {
        let normal =
            Normal::new(0.0, n.sigma).map_err(|e| Error::InvalidArgument(format!("noise sigma {}: {e}", n.sigma)))?;
        let mut rng = ChaCha8Rng::seed_from_u64(n.seed);
        for px in img.data.iter_mut() {
            *px = (*px as f64 + normal.sample(&mut rng)).round().clamp(0.0, 255.0) as u8;
        }
    }
    Ok(img)
}

/// Pixels at or above `threshold` become foreground.
pub fn segment(img: &GrayImage, threshold: u8) -> BinaryMask {
    BinaryMask {
        width: img.width,
        height: img.height,
        data: img.data.iter().map(|&x| x >= threshold).collect(),
    }
}

/// Keeps only the largest 8-connected foreground component; ties go to
/// the component found first in row-major order.
pub fn largest_component(mask: &BinaryMask) -> BinaryMask {
    let (w, h) = (mask.width, mask.height);
    let mut label = vec![0u32; w * h];
    let mut best = (0u32, 0usize);
    let mut next = 0u32;
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !mask.data[start] || label[start] != 0 {
            continue;
        }
        next += 1;
        label[start] = next;
        stack.push(start);
        let mut size = 0;
        while let Some(i) = stack.pop() {
            size += 1;
            let (u, v) = (i % w, i / w);
            for y in v.saturating_sub(1)..=(v + 1).min(h - 1) {
                for x in u.saturating_sub(1)..=(u + 1).min(w - 1) {
                    let j = y * w + x;
                    if mask.data[j] && label[j] == 0 {
                        label[j] = next;
                        stack.push(j);
                    }
                }
            }
        }
        if size > best.1 {
            best = (next, size);
        }
    }
    BinaryMask {
        width: w,
        height: h,
        data: label.iter().map(|&l| l != 0 && l == best.0).collect(),
    }
}

/// The 8-neighbourhood `P2..P9`, clockwise from north. Outside pixels are
/// background.
fn ring(m: &BinaryMask, u: usize, v: usize) -> [bool; 8] {
    const OFFSETS: [(isize, isize); 8] = [(0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1)];
    OFFSETS.map(|(du, dv)| {
        let (x, y) = (u as isize + du, v as isize + dv);
        x >= 0 && y >= 0 && (x as usize) < m.width && (y as usize) < m.height && m.get(x as usize, y as usize)
    })
}

/// Number of background-to-foreground transitions around the ring.
fn transitions(n: &[bool; 8]) -> usize {
    (0..8).filter(|&i| !n[i] && n[(i + 1) % 8]).count()
}

/// Yokoi 8-connectivity number; a foreground pixel is simple iff it is 1.
fn connectivity8(n: &[bool; 8]) -> i32 {
    let x = |i: usize| !n[i % 8] as i32;
    [0, 2, 4, 6].iter().map(|&k| x(k) - x(k) * x(k + 1) * x(k + 2)).sum()
}

fn simple_non_end(n: &[bool; 8]) -> bool {
    n.iter().filter(|&&b| b).count() >= 2 && connectivity8(n) == 1
}

/// One thinning sub-iteration: parallel marking with the classic
/// neighbour/transition conditions, then a sequential re-check so that
/// only pixels still simple at deletion time are removed.
fn thin_pass(m: &mut BinaryMask, first: bool) -> bool {
    let mut marked = Vec::new();
    for (u, v) in m.pixels() {
        let n = ring(m, u, v);
        let b = n.iter().filter(|&&x| x).count();
        // b = 2 with a single transition is the end of a staircase line;
        // removing it would erode the line from its end.
        if !(3..=6).contains(&b) || transitions(&n) != 1 {
            continue;
        }
        let [p2, _, p4, _, p6, _, p8, _] = n;
        let ok = if first {
            !(p2 && p4 && p6) && !(p4 && p6 && p8)
        } else {
            !(p2 && p4 && p8) && !(p2 && p6 && p8)
        };
        if ok {
            marked.push((u, v));
        }
    }
    let mut changed = false;
    for (u, v) in marked {
        if simple_non_end(&ring(m, u, v)) {
            m.set(u, v, false);
            changed = true;
        }
    }
    changed
}

/// Removes corner pixels of two-pixel staircases so the result is 8-thin.
fn staircase_pass(m: &mut BinaryMask) -> bool {
    let mut changed = false;
    let pixels: Vec<_> = m.pixels().collect();
    for (u, v) in pixels {
        let n = ring(m, u, v);
        let [p2, _, p4, _, p6, _, p8, _] = n;
        let corner = (p2 && p4) || (p4 && p6) || (p6 && p8) || (p8 && p2);
        if corner && simple_non_end(&n) {
            m.set(u, v, false);
            changed = true;
        }
    }
    changed
}

/// Topology-preserving thinning to a one-pixel-wide centreline.
pub fn skeletonize(mask: &BinaryMask) -> BinaryMask {
    let mut m = mask.clone();
    loop {
        let mut changed = false;
        loop {
            let a = thin_pass(&mut m, true);
            let b = thin_pass(&mut m, false);
            if !(a || b) {
                break;
            }
            changed = true;
        }
        changed |= staircase_pass(&mut m);
        if !changed {
            return m;
        }
    }
}

/// Endpoints lying within this many pixels of the farthest one compete on
/// neighbour count.
const FAR_BAND: f64 = 2.0;

/// The skeleton endpoint farthest from `reference`.
///
/// Candidates are pixels with at most one skeleton neighbour. Among those
/// within `FAR_BAND` of the largest distance, the pixel with the fewest
/// neighbours wins, then the greater distance, then the lowest `(v, u)`.
pub fn find_tip(skel: &BinaryMask, reference: &PixelPoint) -> Result<PixelPoint> {
    if skel.count() == 0 {
        return Err(Error::NoSkeleton);
    }
    let candidates: Vec<(usize, f64, usize, usize)> = skel
        .pixels()
        .filter_map(|(u, v)| {
            let n = skel.neighbour_count(u, v);
            (n <= 1).then(|| (n, PixelPoint::new(u as f64, v as f64).distance(reference), u, v))
        })
        .collect();
    let far = candidates.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
    candidates
        .into_iter()
        .filter(|c| c.1 >= far - FAR_BAND)
        .min_by(|a, b| {
            a.0.cmp(&b.0)
                .then(b.1.total_cmp(&a.1))
                .then((a.3, a.2).cmp(&(b.3, b.2)))
        })
        .map(|(_, _, u, v)| PixelPoint::new(u as f64, v as f64))
        .ok_or(Error::NoEndpoint)
}

/// Radius, pixels, of the neighbourhood used by [`refine_tip`].
const REFINE_RADIUS: f64 = 6.0;

/// Sub-pixel tip from the foreground band around a skeleton endpoint.
///
/// The local axis is the principal direction of the band pixels near the
/// endpoint, oriented away from the nearby skeleton. Across the axis the
/// tip sits at the mean offset of the band pixels behind the endpoint;
/// along it, `half_width − ½` pixels inside the farthest band pixel, the
/// expected inset of a rasterized round cap.
pub fn refine_tip(mask: &BinaryMask, skel: &BinaryMask, tip: &PixelPoint, half_width: f64) -> PixelPoint {
    let t = Vector2::new(tip.u, tip.v);
    let near = |m: &BinaryMask, r: f64| -> Vec<Vector2<f64>> {
        let (lo_u, hi_u) = ((tip.u - r).floor().max(0.0) as usize, (tip.u + r).ceil() as usize);
        let (lo_v, hi_v) = ((tip.v - r).floor().max(0.0) as usize, (tip.v + r).ceil() as usize);
        let mut out = Vec::new();
        for v in lo_v..=hi_v.min(m.height - 1) {
            for u in lo_u..=hi_u.min(m.width - 1) {
                let p = Vector2::new(u as f64, v as f64);
                if m.get(u, v) && (p - t).norm() <= r {
                    out.push(p);
                }
            }
        }
        out
    };
    let spine: Vec<_> = near(skel, REFINE_RADIUS).into_iter().filter(|p| *p != t).collect();
    let band = near(mask, REFINE_RADIUS + half_width);
    if spine.is_empty() || band.len() < 3 {
        return *tip;
    }
    let mean = band.iter().sum::<Vector2<f64>>() / band.len() as f64;
    let cov = band
        .iter()
        .map(|p| (p - mean) * (p - mean).transpose())
        .sum::<Matrix2<f64>>();
    let eig = cov.symmetric_eigen();
    let major = if eig.eigenvalues[0] >= eig.eigenvalues[1] { 0 } else { 1 };
    let mut axis: Vector2<f64> = eig.eigenvectors.column(major).into_owned();
    let centroid = spine.iter().sum::<Vector2<f64>>() / spine.len() as f64;
    if axis.dot(&(t - centroid)) < 0.0 {
        axis = -axis;
    }
    let normal = Vector2::new(-axis.y, axis.x);
    let behind: Vec<f64> = band
        .iter()
        .filter(|p| (*p - t).dot(&axis) <= 0.0)
        .map(|p| (p - t).dot(&normal))
        .collect();
    if behind.is_empty() {
        return *tip;
    }
    let lateral = behind.iter().sum::<f64>() / behind.len() as f64;
    let reach = band
        .iter()
        .filter(|p| ((*p - t).dot(&normal) - lateral).abs() <= half_width)
        .map(|p| (p - t).dot(&axis))
        .fold(0.0_f64, f64::max);
    let axial = reach - (half_width - 0.5).max(0.0);
    let r = t + axis * axial + normal * lateral;
    PixelPoint::new(r.x, r.y)
}

/// The point on `plane_b` (expressed in `{B}`) that projects onto `px`.
pub fn tip_to_base(pm: &ProjectionModel, plane_b: &PlaneModel, px: &PixelPoint) -> Result<Vector3<f64>> {
    let (m, c) = pm.affine();
    let [e1, e2] = plane_b.axes;
    let a = Matrix2::from_columns(&[m * e1, m * e2]);
    let sv = a.singular_values();
    let (hi, lo) = (sv.max(), sv.min());
    let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(cond < MAX_CONDITION) {
        return Err(Error::DegenerateView(cond));
    }
    let rhs = Vector2::new(px.u, px.v) - m * plane_b.origin - c;
    let ab = a.lu().solve(&rhs).ok_or(Error::DegenerateView(cond))?;
    Ok(plane_b.origin + e1 * ab.x + e2 * ab.y)
}

/// Imaging-loop parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImagingConfig {
    pub image_width: usize,
    pub image_height: usize,
    pub pixel_pitch: f64,
    /// Rendered endoscope half-width, pixels.
    pub half_width: f64,
    pub threshold: u8,
    /// Intensity noise standard deviation; 0 disables noise.
    pub noise_sigma: f64,
}

impl Default for ImagingConfig {
    fn default() -> Self {
        Self {
            image_width: 256,
            image_height: 256,
            pixel_pitch: DEFAULT_PIXEL_PITCH,
            half_width: 2.0,
            threshold: 128,
            noise_sigma: 0.0,
        }
    }
}

impl ImagingConfig {
    pub fn noise(&self, seed: u64) -> Option<NoiseModel> {
        (self.noise_sigma > 0.0).then_some(NoiseModel {
            sigma: self.noise_sigma,
            seed,
        })
    }
}

/// One processed frame.
#[derive(Clone, Debug)]
pub struct Detection {
    pub frame: GrayImage,
    /// Skeleton endpoint chosen by [`find_tip`].
    pub endpoint: PixelPoint,
    /// Sub-pixel tip from [`refine_tip`].
    pub tip_px: PixelPoint,
}

/// Render, segment, keep the largest blob, thin, locate and refine the tip
/// for one set of body points. `body[0]` serves as the reference point.
pub fn detect_tip(
    pm: &ProjectionModel,
    cfg: &ImagingConfig,
    body: &[Vector3<f64>],
    noise_seed: u64,
) -> std::result::Result<Detection, (Error, Option<GrayImage>)> {
    let frame = render_endoscope(pm, body, cfg.half_width, cfg.noise(noise_seed)).map_err(|e| (e, None))?;
    let mask = largest_component(&segment(&frame, cfg.threshold));
    let skel = skeletonize(&mask);
    match find_tip(&skel, &project(pm, &body[0])) {
        Ok(endpoint) => Ok(Detection {
            tip_px: refine_tip(&mask, &skel, &endpoint, cfg.half_width),
            endpoint,
            frame,
        }),
        Err(e) => Err((e, Some(frame))),
    }
}

/// Tip detections as CSV: `frame_index,u,v`.
pub fn tips_csv(tips: &[(usize, PixelPoint)]) -> String {
    let mut out = String::from("frame_index,u,v\n");
    for (i, p) in tips {
        let _ = writeln!(out, "{i},{},{}", p.u, p.v);
    }
    out
}
