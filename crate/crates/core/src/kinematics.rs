//! Forward and differential kinematics of the 7-DOF arm carrying a
//! notched-tube flexible endoscope (2-DOF bending section + 2-DOF wrist).
//!
//! The overall chain from the arm base `{B}` to the endoscope tip `{E}` is
//!
//! ```text
//! T_E^B = T_RE^B(q_r) · T_FB^RE · T_F^FB(θ1, θ2) · T_E^F(θ3, θ4) · R_z(θ_rz)
//! ```
//!
//! where the endoscope angles are first passed through the linear
//! compensation `q_e = q_e' + q_e' · diag(K_c)`.

use std::path::Path;

use nalgebra::{SMatrix, SVector, Vector3, Vector4};

use crate::error::{Error, Result};
use crate::transform::RigidTransform;

pub const ARM_DOF: usize = 7;
pub const ENDO_DOF: usize = 4;
pub const TOTAL_DOF: usize = ARM_DOF + ENDO_DOF;

/// Stacked `(q_r, q_e')` vector.
pub type JointVector = SVector<f64, TOTAL_DOF>;
/// Translational tip Jacobian with respect to [`JointVector`], mm/rad.
pub type TipJacobian = SMatrix<f64, 3, TOTAL_DOF>;

/// Arm joint angles `q_r`, radians.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ArmConfig(pub SVector<f64, ARM_DOF>);

/// Endoscope angles `q_e` (yaw, pitch of the bending section; wrist x, wrist y), radians.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EndoConfig(pub Vector4<f64>);

impl ArmConfig {
    pub fn zeros() -> Self {
        Self(SVector::zeros())
    }

    pub fn from_slice(q: &[f64]) -> Self {
        Self(SVector::from_column_slice(q))
    }
}

impl EndoConfig {
    pub fn zeros() -> Self {
        Self(Vector4::zeros())
    }

    pub fn new(theta1: f64, theta2: f64, theta3: f64, theta4: f64) -> Self {
        Self(Vector4::new(theta1, theta2, theta3, theta4))
    }
}

pub fn stack(q_r: &ArmConfig, q_e: &EndoConfig) -> JointVector {
    let mut q = JointVector::zeros();
    q.fixed_rows_mut::<ARM_DOF>(0).copy_from(&q_r.0);
    q.fixed_rows_mut::<ENDO_DOF>(ARM_DOF).copy_from(&q_e.0);
    q
}

pub fn split(q: &JointVector) -> (ArmConfig, EndoConfig) {
    (
        ArmConfig(q.fixed_rows::<ARM_DOF>(0).into_owned()),
        EndoConfig(q.fixed_rows::<ENDO_DOF>(ARM_DOF).into_owned()),
    )
}

/// One standard Denavit–Hartenberg row. Lengths in mm, angles in rad.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DhRow {
    pub a: f64,
    pub alpha: f64,
    pub d: f64,
    pub theta_offset: f64,
}

impl DhRow {
    pub fn from_degrees(a: f64, alpha_deg: f64, d: f64, theta_offset_deg: f64) -> Self {
        Self {
            a,
            alpha: alpha_deg.to_radians(),
            d,
            theta_offset: theta_offset_deg.to_radians(),
        }
    }

    /// `Rot_z(θ) · Trans_z(d) · Trans_x(a) · Rot_x(α)` in closed form.
    pub fn transform(&self, theta: f64) -> RigidTransform {
        let th = theta + self.theta_offset;
        let (sn, cn) = th.sin_cos();
        let (sa, ca) = self.alpha.sin_cos();
        RigidTransform::new(
            nalgebra::Matrix3::new(cn, -sn * ca, sn * sa, sn, cn * ca, -cn * sa, 0.0, sa, ca),
            Vector3::new(self.a * cn, self.a * sn, self.d),
        )
    }
}

/// D-H table of the 7-DOF arm (a mm, α deg, d mm, θ offset deg).
const ARM_DH_DEG: [[f64; 4]; ARM_DOF] = [
    [0.0, 0.0, 345.0, 0.0],
    [0.0, 90.0, 65.0, 0.0],
    [0.0, -90.0, 395.0, 180.0],
    [20.0, -90.0, -55.0, 180.0],
    [20.0, 90.0, 385.0, 180.0],
    [0.0, 90.0, 100.0, 90.0],
    [110.0, 90.0, 55.0, 0.0],
];

pub fn default_dh() -> [DhRow; ARM_DOF] {
    ARM_DH_DEG.map(|[a, alpha, d, off]| DhRow::from_degrees(a, alpha, d, off))
}

/// Geometry of the flexible endoscope.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EndoGeometry {
    /// Number of orthogonal notch pairs `N`.
    pub notch_pairs: u32,
    /// Length of the bending section `L`, mm.
    pub flexible_length: f64,
    /// Rigid length before the wrist joints `d_c`, mm.
    pub wrist_proximal: f64,
    /// Rigid length after the wrist joints `d_f`, mm.
    pub wrist_distal: f64,
    /// Arm flange to bending-section base, `T_FB^RE`.
    pub mount: RigidTransform,
}

impl Default for EndoGeometry {
    fn default() -> Self {
        Self {
            notch_pairs: 10,
            flexible_length: 20.0,
            wrist_proximal: 5.0,
            wrist_distal: 5.0,
            mount: RigidTransform::trans_z(30.0),
        }
    }
}

impl EndoGeometry {
    pub fn validate(&self) -> Result<()> {
        if self.notch_pairs == 0 {
            return Err(Error::InvalidArgument("notch_pairs must be >= 1".into()));
        }
        for (name, v) in [
            ("flexible_length", self.flexible_length),
            ("wrist_proximal", self.wrist_proximal),
            ("wrist_distal", self.wrist_distal),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Backbone length from bending-section base to tip.
    pub fn backbone_length(&self) -> f64 {
        self.flexible_length + self.wrist_proximal + self.wrist_distal
    }
}

/// Empirical compensation terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CalibrationTerms {
    /// Assembly twist about the tip z-axis, rad.
    pub theta_rz: f64,
    /// Diagonal of `K_c`.
    pub k_c: Vector4<f64>,
}

impl Default for CalibrationTerms {
    fn default() -> Self {
        Self {
            theta_rz: 0.0597,
            k_c: Vector4::new(0.7255, 0.7255, 0.3435, 0.7793),
        }
    }
}

impl CalibrationTerms {
    pub fn none() -> Self {
        Self {
            theta_rz: 0.0,
            k_c: Vector4::zeros(),
        }
    }
}

/// Box limits on the stacked joint vector (raw endoscope angles).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JointLimits {
    pub lower: JointVector,
    pub upper: JointVector,
}

impl Default for JointLimits {
    fn default() -> Self {
        use std::f64::consts::{FRAC_PI_2, PI};
        let mut lower = JointVector::zeros();
        let mut upper = JointVector::zeros();
        for k in 0..TOTAL_DOF {
            let lim = if k < ARM_DOF { PI } else { FRAC_PI_2 };
            lower[k] = -lim;
            upper[k] = lim;
        }
        Self { lower, upper }
    }
}

impl JointLimits {
    pub fn contains(&self, q: &JointVector) -> bool {
        q.iter()
            .zip(self.lower.iter().zip(self.upper.iter()))
            .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    pub fn clamp(&self, q: &JointVector) -> JointVector {
        JointVector::from_fn(|k, _| q[k].clamp(self.lower[k], self.upper[k]))
    }
}

fn check_finite(values: impl IntoIterator<Item = f64>, what: &str) -> Result<()> {
    for v in values {
        if !v.is_finite() {
            return Err(Error::InvalidArgument(format!("non-finite {what} angle {v}")));
        }
    }
    Ok(())
}

/// Arm flange pose `T_RE^B` for joint angles `q_r`.
pub fn arm_fk(dh: &[DhRow], q_r: &ArmConfig) -> Result<RigidTransform> {
    if dh.len() != ARM_DOF {
        return Err(Error::InvalidArgument(format!(
            "expected {ARM_DOF} D-H rows, got {}",
            dh.len()
        )));
    }
    check_finite(q_r.0.iter().copied(), "arm")?;
    Ok(dh
        .iter()
        .zip(q_r.0.iter())
        .fold(RigidTransform::identity(), |acc, (row, &q)| acc * row.transform(q)))
}

/// Yaw half of one notch pair: the sub-bend sits at the middle of its
/// `half_length` segment.
pub fn yaw_notch(angle: f64, half_length: f64) -> RigidTransform {
    RigidTransform::trans_z(0.5 * half_length)
        * RigidTransform::rot_y(angle)
        * RigidTransform::trans_z(0.5 * half_length)
}

/// Pitch half of one notch pair.
pub fn pitch_notch(angle: f64, half_length: f64) -> RigidTransform {
    RigidTransform::trans_z(0.5 * half_length)
        * RigidTransform::rot_x(angle)
        * RigidTransform::trans_z(0.5 * half_length)
}

/// Bending-section transform `T_F^FB = (T_y T_p)^N`. Each notch pair bends
/// `theta1/N` in yaw and `theta2/N` in pitch over a length `L/N`.
pub fn flexible_fk(geom: &EndoGeometry, theta1: f64, theta2: f64) -> Result<RigidTransform> {
    if geom.notch_pairs == 0 {
        return Err(Error::InvalidArgument("notch_pairs must be >= 1".into()));
    }
    check_finite([theta1, theta2], "bending")?;
    let n = geom.notch_pairs as f64;
    let half = geom.flexible_length / (2.0 * n);
    let pair = yaw_notch(theta1 / n, half) * pitch_notch(theta2 / n, half);
    Ok((0..geom.notch_pairs).fold(RigidTransform::identity(), |acc, _| acc * pair))
}

/// Wrist transform `T_E^F = Trans_z(d_c) Rot_x(θ3) Rot_y(θ4) Trans_z(d_f)`.
pub fn wrist_fk(geom: &EndoGeometry, theta3: f64, theta4: f64) -> RigidTransform {
    RigidTransform::trans_z(geom.wrist_proximal)
        * RigidTransform::rot_x(theta3)
        * RigidTransform::rot_y(theta4)
        * RigidTransform::trans_z(geom.wrist_distal)
}

/// `q_e = q_e' + q_e' · diag(K_c)`.
pub fn compensate(q_e_raw: &EndoConfig, cal: &CalibrationTerms) -> EndoConfig {
    EndoConfig(q_e_raw.0 + q_e_raw.0.component_mul(&cal.k_c))
}

/// Complete arm + endoscope model.
#[derive(Clone, Debug, PartialEq)]
pub struct RobotModel {
    pub dh: [DhRow; ARM_DOF],
    pub geometry: EndoGeometry,
    pub calibration: CalibrationTerms,
    pub limits: JointLimits,
}

impl Default for RobotModel {
    fn default() -> Self {
        Self {
            dh: default_dh(),
            geometry: EndoGeometry::default(),
            calibration: CalibrationTerms::default(),
            limits: JointLimits::default(),
        }
    }
}

impl RobotModel {
    /// Pose of the bending-section base `{FB}` in `{B}`.
    pub fn section_base(&self, q_r: &ArmConfig) -> Result<RigidTransform> {
        Ok(arm_fk(&self.dh, q_r)? * self.geometry.mount)
    }

    /// Tip pose `T_E^B`; the endoscope angles are compensated first.
    pub fn full_fk(&self, q_r: &ArmConfig, q_e_raw: &EndoConfig) -> Result<RigidTransform> {
        check_finite(q_e_raw.0.iter().copied(), "endoscope")?;
        let q_e = compensate(q_e_raw, &self.calibration);
        let base = self.section_base(q_r)?;
        let flex = flexible_fk(&self.geometry, q_e.0[0], q_e.0[1])?;
        let wrist = wrist_fk(&self.geometry, q_e.0[2], q_e.0[3]);
        Ok(base * flex * wrist * RigidTransform::rot_z(self.calibration.theta_rz))
    }

    pub fn tip(&self, q: &JointVector) -> Result<Vector3<f64>> {
        let (q_r, q_e) = split(q);
        Ok(self.full_fk(&q_r, &q_e)?.translation)
    }

    /// Vertices of the piecewise-linear backbone, bending-section base first,
    /// tip last, with the cumulative arc length at each vertex.
    fn backbone(&self, q_r: &ArmConfig, q_e_raw: &EndoConfig) -> Result<Vec<(f64, Vector3<f64>)>> {
        self.geometry.validate()?;
        check_finite(q_e_raw.0.iter().copied(), "endoscope")?;
        let q_e = compensate(q_e_raw, &self.calibration);
        let g = &self.geometry;
        let n = g.notch_pairs as f64;
        let quarter = g.flexible_length / (4.0 * n);
        let yaw = RigidTransform::rot_y(q_e.0[0] / n);
        let pitch = RigidTransform::rot_x(q_e.0[1] / n);

        let mut frame = self.section_base(q_r)?;
        let mut arc = 0.0;
        let mut out = vec![(arc, frame.translation)];
        let mut advance = |frame: &mut RigidTransform, d: f64, out: &mut Vec<(f64, Vector3<f64>)>| {
            *frame = *frame * RigidTransform::trans_z(d);
            arc += d;
            out.push((arc, frame.translation));
        };
        for _ in 0..g.notch_pairs {
            advance(&mut frame, quarter, &mut out);
            frame = frame * yaw;
            advance(&mut frame, 2.0 * quarter, &mut out);
            frame = frame * pitch;
            advance(&mut frame, quarter, &mut out);
        }
        advance(&mut frame, g.wrist_proximal, &mut out);
        frame = frame * RigidTransform::rot_x(q_e.0[2]) * RigidTransform::rot_y(q_e.0[3]);
        advance(&mut frame, g.wrist_distal, &mut out);
        Ok(out)
    }

    /// `delta` points spaced evenly in arc length along the backbone, from
    /// the bending-section base to the tip, in `{B}`.
    pub fn body_points(&self, q_r: &ArmConfig, q_e_raw: &EndoConfig, delta: usize) -> Result<Vec<Vector3<f64>>> {
        if delta < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 body points, got {delta}"
            )));
        }
        let verts = self.backbone(q_r, q_e_raw)?;
        let total = verts.last().map(|v| v.0).unwrap_or(0.0);
        let mut points = Vec::with_capacity(delta);
        let mut seg = 0;
        for k in 0..delta - 1 {
            let s = total * k as f64 / (delta - 1) as f64;
            while seg + 2 < verts.len() && verts[seg + 1].0 < s {
                seg += 1;
            }
            let (s0, p0) = verts[seg];
            let (s1, p1) = verts[seg + 1];
            let w = if s1 > s0 {
                ((s - s0) / (s1 - s0)).clamp(0.0, 1.0)
            } else {
                0.0
            };
            points.push(p0 + (p1 - p0) * w);
        }
        points.push(self.full_fk(q_r, q_e_raw)?.translation);
        Ok(points)
    }

    /// Translational tip Jacobian by central differences (h = 1e-6 rad).
    pub fn jacobian(&self, q_r: &ArmConfig, q_e_raw: &EndoConfig) -> Result<TipJacobian> {
        const H: f64 = 1e-6;
        let q = stack(q_r, q_e_raw);
        let mut jac = TipJacobian::zeros();
        for k in 0..TOTAL_DOF {
            let mut qp = q;
            let mut qm = q;
            qp[k] += H;
            qm[k] -= H;
            let col = (self.tip(&qp)? - self.tip(&qm)?) / (2.0 * H);
            jac.set_column(k, &col);
        }
        Ok(jac)
    }

    /// Parses a `key = value` model description; unspecified keys keep
    /// their defaults. Units are part of the key name.
    ///
    /// ```text
    /// notch_pairs = 10
    /// flexible_length_mm = 20
    /// wrist_proximal_mm = 5
    /// wrist_distal_mm = 5
    /// mount_offset_mm = 30
    /// theta_rz_rad = 0.0597
    /// k_c = 0.7255, 0.7255, 0.3435, 0.7793
    /// dh3 = 0, -90, 395, 180        # a mm, alpha deg, d mm, theta offset deg
    /// arm_lower_rad = -3.14, ...    # 7 values; also arm_upper_rad
    /// endo_lower_rad = -1.57, ...   # 4 values; also endo_upper_rad
    /// ```
    pub fn from_config_str(text: &str) -> Result<Self> {
        let mut model = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected key = value", lineno + 1)))?;
            let key = key.trim();
            let nums = parse_list(value, lineno + 1)?;
            let one = || -> Result<f64> {
                match nums.as_slice() {
                    [v] => Ok(*v),
                    _ => Err(Error::Parse(format!("line {}: {key} takes one value", lineno + 1))),
                }
            };
            let want = |n: usize| -> Result<()> {
                if nums.len() == n {
                    Ok(())
                } else {
                    Err(Error::Parse(format!("line {}: {key} takes {n} values", lineno + 1)))
                }
            };
            match key {
                "notch_pairs" => {
                    let v = one()?;
                    if v.fract() != 0.0 || v < 0.0 {
                        return Err(Error::Parse(format!(
                            "line {}: notch_pairs must be a count",
                            lineno + 1
                        )));
                    }
                    model.geometry.notch_pairs = v as u32;
                }
                "flexible_length_mm" => model.geometry.flexible_length = one()?,
                "wrist_proximal_mm" => model.geometry.wrist_proximal = one()?,
                "wrist_distal_mm" => model.geometry.wrist_distal = one()?,
                "mount_offset_mm" => model.geometry.mount = RigidTransform::trans_z(one()?),
                "theta_rz_rad" => model.calibration.theta_rz = one()?,
                "theta_rz_deg" => model.calibration.theta_rz = one()?.to_radians(),
                "k_c" => {
                    want(4)?;
                    model.calibration.k_c = Vector4::from_column_slice(&nums);
                }
                "arm_lower_rad" | "arm_upper_rad" | "endo_lower_rad" | "endo_upper_rad" => {
                    let (offset, n) = if key.starts_with("arm") {
                        (0, ARM_DOF)
                    } else {
                        (ARM_DOF, ENDO_DOF)
                    };
                    want(n)?;
                    let target = if key.contains("lower") {
                        &mut model.limits.lower
                    } else {
                        &mut model.limits.upper
                    };
                    for (k, v) in nums.iter().enumerate() {
                        target[offset + k] = *v;
                    }
                }
                _ if key.starts_with("dh") => {
                    let idx: usize = key[2..]
                        .parse()
                        .ok()
                        .filter(|i| (1..=ARM_DOF).contains(i))
                        .ok_or_else(|| Error::Parse(format!("line {}: unknown D-H row {key}", lineno + 1)))?;
                    want(4)?;
                    model.dh[idx - 1] = DhRow::from_degrees(nums[0], nums[1], nums[2], nums[3]);
                }
                _ => return Err(Error::Parse(format!("line {}: unknown key {key}", lineno + 1))),
            }
        }
        model.geometry.validate()?;
        Ok(model)
    }

    pub fn load_config(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::from_config_str(&std::fs::read_to_string(path)?)
    }
}

fn parse_list(value: &str, line: usize) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("line {line}: {e}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn table_rows_are_converted_to_radians() {
        let dh = default_dh();
        assert_eq!(dh[0].d, 345.0);
        assert!((dh[1].alpha - FRAC_PI_2).abs() < 1e-15);
        assert!((dh[2].theta_offset - PI).abs() < 1e-15);
        assert!((dh[5].theta_offset - FRAC_PI_2).abs() < 1e-15);
        assert_eq!(dh[6].a, 110.0);
    }

    #[test]
    fn base_rotation_mirrors_x_and_y() {
        let dh = default_dh();
        let p0 = arm_fk(&dh, &ArmConfig::zeros()).unwrap().translation;
        let mut q = ArmConfig::zeros();
        q.0[0] = PI;
        let p1 = arm_fk(&dh, &q).unwrap().translation;
        assert!((p1 - Vector3::new(-p0.x, -p0.y, p0.z)).norm() < 1e-9);
    }

    #[test]
    fn arm_fk_rejects_bad_input() {
        let dh = default_dh();
        let mut q = ArmConfig::zeros();
        q.0[3] = f64::NAN;
        assert!(matches!(arm_fk(&dh, &q), Err(Error::InvalidArgument(_))));
        assert!(arm_fk(&dh[..6], &ArmConfig::zeros()).is_err());
    }

    #[test]
    fn straight_section_is_pure_translation() {
        let g = EndoGeometry::default();
        let t = flexible_fk(&g, 0.0, 0.0).unwrap();
        assert!(t.rotation_error(&RigidTransform::identity()) < 1e-12);
        assert!((t.translation - Vector3::new(0.0, 0.0, 20.0)).norm() < 1e-12);
    }

    #[test]
    fn zero_notch_pairs_is_rejected() {
        let g = EndoGeometry {
            notch_pairs: 0,
            ..Default::default()
        };
        assert!(matches!(flexible_fk(&g, 0.1, 0.1), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn single_notch_pair_matches_closed_form() {
        let g = EndoGeometry {
            notch_pairs: 1,
            ..Default::default()
        };
        let (a, b) = (0.4_f64, -0.25_f64);
        let q = g.flexible_length / 4.0;
        // Tz(q) Ry(a) Tz(2q) Rx(b) Tz(q), multiplied out by hand.
        let (sa, ca) = a.sin_cos();
        let (sb, cb) = b.sin_cos();
        let r = nalgebra::Matrix3::new(ca, sa * sb, sa * cb, 0.0, cb, -sb, -sa, ca * sb, ca * cb);
        let p = Vector3::new(0.0, 0.0, q) + Vector3::new(sa, 0.0, ca) * (2.0 * q) + r * Vector3::new(0.0, 0.0, q);
        let t = flexible_fk(&g, a, b).unwrap();
        assert!((t.rotation - r).norm() < 1e-14);
        assert!((t.translation - p).norm() < 1e-12);
    }

    #[test]
    fn wrist_quarter_turn() {
        let g = EndoGeometry {
            wrist_proximal: 10.0,
            wrist_distal: 10.0,
            ..Default::default()
        };
        let t = wrist_fk(&g, FRAC_PI_2, 0.0);
        assert!((t.translation - Vector3::new(0.0, -10.0, 10.0)).norm() < 1e-12);
        assert!(t.rotation_error(&RigidTransform::rot_x(FRAC_PI_2)) < 1e-12);
        let straight = wrist_fk(&g, 0.0, 0.0);
        assert!((straight.translation - Vector3::new(0.0, 0.0, 20.0)).norm() < 1e-12);
    }

    #[test]
    fn wrist_factorises() {
        let g = EndoGeometry::default();
        let (t3, t4) = (0.3, -0.8);
        let lhs = wrist_fk(&g, t3, t4);
        let rhs = wrist_fk(&g, t3, 0.0)
            * RigidTransform::trans_z(-g.wrist_distal)
            * RigidTransform::rot_y(t4)
            * RigidTransform::trans_z(g.wrist_distal);
        assert!(lhs.rotation_error(&rhs) < 1e-12);
        assert!(lhs.translation_error(&rhs) < 1e-12);
    }

    #[test]
    fn compensation_uses_calibrated_gains() {
        let cal = CalibrationTerms::default();
        assert_eq!(compensate(&EndoConfig::zeros(), &cal), EndoConfig::zeros());
        let q = compensate(&EndoConfig::new(1.0, 0.0, 0.0, 0.0), &cal);
        assert!((q.0 - Vector4::new(1.7255, 0.0, 0.0, 0.0)).norm() < 1e-12);
        let q = compensate(&EndoConfig::new(0.0, 0.0, 2.0, 0.0), &cal);
        assert!((q.0 - Vector4::new(0.0, 0.0, 2.687, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn straight_chain_adds_backbone_length() {
        let model = RobotModel {
            geometry: EndoGeometry {
                mount: RigidTransform::identity(),
                ..Default::default()
            },
            calibration: CalibrationTerms::none(),
            ..Default::default()
        };
        let q_r = ArmConfig::from_slice(&[0.1, 0.4, -0.2, 0.9, 0.3, -0.5, 0.2]);
        let tip = model.full_fk(&q_r, &EndoConfig::zeros()).unwrap();
        let expect = arm_fk(&model.dh, &q_r).unwrap() * RigidTransform::trans_z(30.0);
        assert!(tip.translation_error(&expect) < 1e-9);
        assert!(tip.rotation_error(&expect) < 1e-12);
    }

    #[test]
    fn twist_only_rotates_the_tip() {
        let mut model = RobotModel::default();
        let q_r = ArmConfig::from_slice(&[0.2, 0.5, 0.1, -1.0, 0.3, 0.7, -0.4]);
        let q_e = EndoConfig::new(0.2, -0.1, 0.3, 0.1);
        let with = model.full_fk(&q_r, &q_e).unwrap();
        model.calibration.theta_rz = 0.0;
        let without = model.full_fk(&q_r, &q_e).unwrap();
        assert!(with.translation_error(&without) < 1e-12);
        let expect = without * RigidTransform::rot_z(0.0597);
        assert!(with.rotation_error(&expect) < 1e-12);
    }

    #[test]
    fn body_points_span_base_to_tip() {
        let model = RobotModel::default();
        let q_r = ArmConfig::from_slice(&[0.0, 0.3, 0.0, -0.8, 0.0, 0.4, 0.0]);
        let pts = model.body_points(&q_r, &EndoConfig::zeros(), 2).unwrap();
        assert_eq!(pts.len(), 2);
        assert!(((pts[1] - pts[0]).norm() - 30.0).abs() < 1e-9);
        let base = model.section_base(&q_r).unwrap().translation;
        assert!((pts[0] - base).norm() < 1e-12);

        let q_e = EndoConfig::new(0.6, -0.4, 0.5, 0.2);
        let pts = model.body_points(&q_r, &q_e, 20).unwrap();
        let tip = model.full_fk(&q_r, &q_e).unwrap().translation;
        assert!((pts[19] - tip).norm() < 1e-9);
        assert!(model.body_points(&q_r, &q_e, 1).is_err());
    }

    #[test]
    fn jacobian_of_zero_motion_is_zero() {
        let model = RobotModel::default();
        let j = model.jacobian(&ArmConfig::zeros(), &EndoConfig::zeros()).unwrap();
        assert_eq!(j * JointVector::zeros(), Vector3::zeros());
    }

    #[test]
    fn config_file_overrides_defaults() {
        let text = "\
# endoscope
notch_pairs = 12
flexible_length_mm = 24   # longer section
theta_rz_deg = 0
k_c = 0, 0, 0, 0
dh7 = 100, 90, 50, 0
endo_upper_rad = 1, 1, 1, 1
";
        let m = RobotModel::from_config_str(text).unwrap();
        assert_eq!(m.geometry.notch_pairs, 12);
        assert_eq!(m.geometry.flexible_length, 24.0);
        assert_eq!(m.calibration, CalibrationTerms::none());
        assert_eq!(m.dh[6].a, 100.0);
        assert_eq!(m.limits.upper[ARM_DOF], 1.0);
        assert!(RobotModel::from_config_str("notch_pairs = 0").is_err());
        assert!(RobotModel::from_config_str("bogus = 1").is_err());
        assert!(RobotModel::from_config_str("k_c = 1, 2").is_err());
    }
}
