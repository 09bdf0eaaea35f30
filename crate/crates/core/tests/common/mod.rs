//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{Matrix4, Rotation3, Unit, Vector3};

/// Arm table as printed: a (mm), alpha (deg), d (mm), theta offset (deg).
pub const DH: [[f64; 4]; 7] = [
    [0.0, 0.0, 345.0, 0.0],
    [0.0, 90.0, 65.0, 0.0],
    [0.0, -90.0, 395.0, 180.0],
    [20.0, -90.0, -55.0, 180.0],
    [20.0, 90.0, 385.0, 180.0],
    [0.0, 90.0, 100.0, 90.0],
    [110.0, 90.0, 55.0, 0.0],
];

pub const MOUNT: f64 = 30.0;
pub const NOTCH_PAIRS: u32 = 10;
pub const FLEX_LEN: f64 = 20.0;
pub const D_C: f64 = 5.0;
pub const D_F: f64 = 5.0;
pub const THETA_RZ: f64 = 0.0597;
pub const K_C: [f64; 4] = [0.7255, 0.7255, 0.3435, 0.7793];

pub fn tz(d: f64) -> Matrix4<f64> {
    Matrix4::new_translation(&Vector3::new(0.0, 0.0, d))
}

pub fn rot(axis: Vector3<f64>, angle: f64) -> Matrix4<f64> {
    Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle).to_homogeneous()
}

/// Standard D-H link matrix written out entry by entry.
pub fn dh_link(a: f64, alpha: f64, d: f64, theta: f64) -> Matrix4<f64> {
    let (st, ct) = theta.sin_cos();
    let (sa, ca) = alpha.sin_cos();
    Matrix4::new(
        ct,
        -st * ca,
        st * sa,
        a * ct, //
        st,
        ct * ca,
        -ct * sa,
        a * st, //
        0.0,
        sa,
        ca,
        d, //
        0.0,
        0.0,
        0.0,
        1.0,
    )
}

pub fn arm(q: &[f64]) -> Matrix4<f64> {
    let mut t = Matrix4::identity();
    for (row, &qi) in DH.iter().zip(q) {
        t *= dh_link(row[0], row[1].to_radians(), row[2], qi + row[3].to_radians());
    }
    t
}

/// Bending section with `n` notch pairs; each half-pair bends at its middle.
pub fn flex(n: u32, length: f64, yaw: f64, pitch: f64) -> Matrix4<f64> {
    let q = length / (4.0 * n as f64);
    let pair = tz(q) * rot(Vector3::y(), yaw / n as f64) * tz(2.0 * q) * rot(Vector3::x(), pitch / n as f64) * tz(q);
    (0..n).fold(Matrix4::identity(), |acc, _| acc * pair)
}

/// Full arm + endoscope tip pose from raw (uncompensated) endoscope angles.
pub fn full(q: &[f64; 11]) -> Matrix4<f64> {
    let e: Vec<f64> = (0..4).map(|k| q[7 + k] * (1.0 + K_C[k])).collect();
    arm(&q[..7])
        * tz(MOUNT)
        * flex(NOTCH_PAIRS, FLEX_LEN, e[0], e[1])
        * tz(D_C)
        * rot(Vector3::x(), e[2])
        * rot(Vector3::y(), e[3])
        * tz(D_F)
        * rot(Vector3::z(), THETA_RZ)
}

pub fn translation(m: &Matrix4<f64>) -> Vector3<f64> {
    Vector3::new(m[(0, 3)], m[(1, 3)], m[(2, 3)])
}

/// Exact point-to-cloud distance by linear scan.
pub fn brute_distance(p: &Vector3<f64>, cloud: &[Vector3<f64>]) -> f64 {
    cloud.iter().map(|c| (c - p).norm()).fold(f64::INFINITY, f64::min)
}

/// Points every `step` along `a → b`, both ends included.
pub fn resample(a: &Vector3<f64>, b: &Vector3<f64>, step: f64) -> Vec<Vector3<f64>> {
    let n = ((b - a).norm() / step).ceil().max(1.0) as usize;
    (0..=n).map(|i| a + (b - a) * (i as f64 / n as f64)).collect()
}

/// Tip of a planar constant-curvature arc of length `l` bent by `theta`
/// about y, starting along +z.
pub fn arc_tip(l: f64, theta: f64) -> Vector3<f64> {
    let r = l / theta;
    Vector3::new(r * (1.0 - theta.cos()), 0.0, r * theta.sin())
}
