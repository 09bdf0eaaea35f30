//! Marker-based rigid registration and the C-arm/phantom/endoscope/base
//! transform chain.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transform::RigidTransform;

/// Labelled marker positions (mm) expressed in one frame.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MarkerSet {
    pub frame: String,
    pub markers: BTreeMap<String, Vector3<f64>>,
}

impl MarkerSet {
    pub fn new(frame: impl Into<String>) -> Self {
        Self {
            frame: frame.into(),
            markers: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, label: impl Into<String>, p: Vector3<f64>) {
        self.markers.insert(label.into(), p);
    }

    pub fn len(&self) -> usize {
        self.markers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.markers.is_empty()
    }

    /// The same markers mapped through `t` and tagged with `frame`.
    pub fn transformed(&self, t: &RigidTransform, frame: impl Into<String>) -> Self {
        Self {
            frame: frame.into(),
            markers: self
                .markers
                .iter()
                .map(|(k, p)| (k.clone(), t.transform_point(p)))
                .collect(),
        }
    }

    /// Adds independent isotropic Gaussian noise of standard deviation `sigma` mm.
    pub fn with_noise(&self, sigma: f64, seed: u64) -> Result<Self> {
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::InvalidArgument(format!("marker noise sigma {sigma}")));
        }
        let normal =
            Normal::new(0.0, sigma).map_err(|e| Error::InvalidArgument(format!("marker noise sigma {sigma}: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = self.clone();
        for p in out.markers.values_mut() {
            for k in 0..3 {
                p[k] += normal.sample(&mut rng);
            }
        }
        Ok(out)
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

/// Result of a point-set alignment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidFit {
    /// Maps source coordinates to destination coordinates.
    pub transform: RigidTransform,
    /// RMS of the post-fit correspondence errors, mm.
    pub residual: f64,
}

/// Least-squares rigid transform taking `src` markers onto the
/// identically labelled `dst` markers.
pub fn estimate_rigid(src: &MarkerSet, dst: &MarkerSet) -> Result<RigidFit> {
    if src.len() < 3 || dst.len() < 3 {
        return Err(Error::TooFewMarkers(src.len().min(dst.len())));
    }
    if src.len() != dst.len() || src.markers.keys().ne(dst.markers.keys()) {
        let only_src: Vec<_> = src.markers.keys().filter(|k| !dst.markers.contains_key(*k)).collect();
        let only_dst: Vec<_> = dst.markers.keys().filter(|k| !src.markers.contains_key(*k)).collect();
        return Err(Error::LabelMismatch(format!(
            "only in source: {only_src:?}, only in destination: {only_dst:?}"
        )));
    }
    let a: Vec<Vector3<f64>> = src.markers.values().copied().collect();
    let b: Vec<Vector3<f64>> = dst.markers.values().copied().collect();
    let n = a.len() as f64;
    let ca = a.iter().sum::<Vector3<f64>>() / n;
    let cb = b.iter().sum::<Vector3<f64>>() / n;

    let mut h = Matrix3::zeros();
    for (p, q) in a.iter().zip(&b) {
        h += (p - ca) * (q - cb).transpose();
    }
    if is_collinear(&a, &ca) || is_collinear(&b, &cb) {
        return Err(Error::CollinearMarkers);
    }

    let svd = h.svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested Vᵀ");
    let v = v_t.transpose();
    let sign = (v * u.transpose()).determinant().signum();
    let d = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, sign));
    let rotation = v * d * u.transpose();
    let transform = RigidTransform::new(rotation, cb - rotation * ca);

    let sq: f64 = a
        .iter()
        .zip(&b)
        .map(|(p, q)| (transform.transform_point(p) - q).norm_squared())
        .sum();
    Ok(RigidFit {
        transform,
        residual: (sq / n).sqrt(),
    })
}

/// Collinear (or coincident) when the second singular value of the centred
/// scatter is negligible relative to the first.
fn is_collinear(points: &[Vector3<f64>], centroid: &Vector3<f64>) -> bool {
    let mut s = Matrix3::zeros();
    for p in points {
        let d = p - centroid;
        s += d * d.transpose();
    }
    let mut ev: Vec<f64> = s.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev[0] <= 0.0 || ev[1] <= 1e-12 * ev[0]
}

/// Registered frames and the transforms derived from them. The derived
/// products are recomputed on every access so they always agree with the
/// stored factors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegistrationSet {
    pub t_a_p: RigidTransform,
    pub t_p_e: RigidTransform,
    pub t_e_b: RigidTransform,
}

impl RegistrationSet {
    /// C-arm to base: `T_E^B T_P^E T_A^P`.
    pub fn t_a_b(&self) -> RigidTransform {
        self.t_e_b * self.t_p_e * self.t_a_p
    }

    /// Phantom to base: `T_E^B T_P^E`.
    pub fn t_p_b(&self) -> RigidTransform {
        self.t_e_b * self.t_p_e
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

pub fn compose_chain(t_a_p: RigidTransform, t_p_e: RigidTransform, t_e_b: RigidTransform) -> RegistrationSet {
    RegistrationSet { t_a_p, t_p_e, t_e_b }
}

/// Maps a phantom-frame point into the robot base frame.
pub fn to_base(reg: &RegistrationSet, p_p: &Vector3<f64>) -> Vector3<f64> {
    reg.t_p_b().transform_point(p_p)
}
