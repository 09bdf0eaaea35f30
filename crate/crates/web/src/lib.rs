//! Browser demo bindings: endoscope bending, the fluoroscopy tip detector
//! and the phantom path planner.

use endonav::environment::{fit_plane, synth_phantom, Environment, PhantomSpec};
use endonav::imaging::{self, ImagingConfig, NoiseModel, ProjectionModel};
use endonav::kinematics::{ArmConfig, EndoConfig, RobotModel};
use endonav::planner::PlannerConfig;
use endonav::sim::{plan_scene, Scene};
use nalgebra::{Matrix3x4, Vector3};
use wasm_bindgen::prelude::*;

/// Side of the square demo image, pixels.
const VIEW: usize = 160;

fn js_err(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

/// Backbone points in the bending-section base frame.
fn local_body(theta: [f64; 4], delta: usize) -> Result<Vec<Vector3<f64>>, JsValue> {
    let model = RobotModel::default();
    let q_r = ArmConfig::zeros();
    let q_e = EndoConfig::new(theta[0], theta[1], theta[2], theta[3]);
    let inv = model.section_base(&q_r).map_err(js_err)?.inverse();
    let body = model.body_points(&q_r, &q_e, delta).map_err(js_err)?;
    Ok(body.iter().map(|p| inv.transform_point(p)).collect())
}

/// Side view looking along section-base `y`: image `u` follows `x`,
/// image `v` follows `-z`, base of the section near the bottom edge.
fn side_view(pitch: f64) -> Result<ProjectionModel, JsValue> {
    let s = 1.0 / pitch;
    let c = (VIEW as f64 - 1.0) / 2.0;
    let k = Matrix3x4::new(
        s,
        0.0,
        0.0,
        c, //
        0.0,
        0.0,
        -s,
        VIEW as f64 - 8.0, //
        0.0,
        0.0,
        0.0,
        1.0,
    );
    ProjectionModel::new(k, VIEW, VIEW, pitch).map_err(js_err)
}

/// Body points of the endoscope for the four angles (rad), flattened as
/// `[x0, y0, z0, x1, ...]` in mm, section base at the origin.
#[wasm_bindgen]
pub fn bend(theta1: f64, theta2: f64, theta3: f64, theta4: f64, delta: usize) -> Result<Vec<f64>, JsValue> {
    let body = local_body([theta1, theta2, theta3, theta4], delta)?;
    Ok(body.iter().flat_map(|p| [p.x, p.y, p.z]).collect())
}

/// One simulated fluoroscopy frame and what the detector made of it.
#[wasm_bindgen]
pub struct Frame {
    rgba: Vec<u8>,
    tip: [f64; 2],
    truth: [f64; 2],
}

#[wasm_bindgen]
impl Frame {
    pub fn width(&self) -> usize {
        VIEW
    }

    pub fn height(&self) -> usize {
        VIEW
    }

    /// Image pixels; foreground grey, skeleton orange.
    pub fn rgba(&self) -> Vec<u8> {
        self.rgba.clone()
    }

    /// Detected tip `[u, v]`.
    pub fn tip(&self) -> Vec<f64> {
        self.tip.to_vec()
    }

    /// Projected true tip `[u, v]`.
    pub fn truth(&self) -> Vec<f64> {
        self.truth.to_vec()
    }

    /// Detection error, pixels.
    pub fn error_px(&self) -> f64 {
        (self.tip[0] - self.truth[0]).hypot(self.tip[1] - self.truth[1])
    }
}

/// Renders the endoscope in side view with intensity noise `sigma`, then
/// segments, keeps the largest blob, thins and locates the tip.
#[wasm_bindgen]
pub fn detect(theta1: f64, theta2: f64, sigma: f64, seed: u64) -> Result<Frame, JsValue> {
    let cfg = ImagingConfig::default();
    let pm = side_view(cfg.pixel_pitch)?;
    let body = local_body([theta1, theta2, 0.0, 0.0], 20)?;
    let noise = (sigma > 0.0).then_some(NoiseModel { sigma, seed });
    let img = imaging::render_endoscope(&pm, &body, cfg.half_width, noise).map_err(js_err)?;
    let mask = imaging::largest_component(&imaging::segment(&img, cfg.threshold));
    let skel = imaging::skeletonize(&mask);
    let reference = imaging::project(&pm, &body[0]);
    let raw = imaging::find_tip(&skel, &reference).map_err(js_err)?;
    let tip = imaging::refine_tip(&mask, &skel, &raw, cfg.half_width);
    let truth = imaging::project(&pm, body.last().expect("non-empty body"));

    let mut rgba = Vec::with_capacity(VIEW * VIEW * 4);
    for v in 0..VIEW {
        for u in 0..VIEW {
            let px = if skel.get(u, v) {
                [255, 140, 0, 255]
            } else {
                let g = img.get(u, v);
                [g, g, g, 255]
            };
            rgba.extend_from_slice(&px);
        }
    }
    Ok(Frame {
        rgba,
        tip: [tip.u, tip.v],
        truth: [truth.u, truth.v],
    })
}

/// A planned path over a generated phantom, in the path-plane chart (mm).
#[wasm_bindgen]
pub struct PlanView {
    path: Vec<f64>,
    walls: Vec<f64>,
    length: f64,
}

#[wasm_bindgen]
impl PlanView {
    /// Waypoints `[u0, v0, u1, v1, ...]`.
    pub fn path(&self) -> Vec<f64> {
        self.path.clone()
    }

    /// Cloud points within 0.5 mm of the plane, same layout.
    pub fn walls(&self) -> Vec<f64> {
        self.walls.clone()
    }

    pub fn length(&self) -> f64 {
        self.length
    }
}

/// Generates the phantom with the given target lateral offset and plans a
/// path with the given planner seed.
#[wasm_bindgen]
pub fn plan_phantom(target_lateral: f64, seed: u64) -> Result<PlanView, JsValue> {
    let spec = PhantomSpec {
        target_lateral,
        ..Default::default()
    };
    let ph = synth_phantom(&spec).map_err(js_err)?;
    let plane = fit_plane(&ph.landmarks).map_err(js_err)?;
    let scene = Scene {
        env: Environment::from_phantom(&ph),
        landmarks: ph.landmarks,
        plane,
    };
    let cfg = PlannerConfig {
        seed,
        ..Default::default()
    };
    let path = plan_scene(&scene, &cfg).map_err(js_err)?;
    let chart = |p: &Vector3<f64>| {
        let c = plane.to_chart(p);
        [c.x, c.y]
    };
    let walls = ph
        .cloud
        .points()
        .iter()
        .filter(|p| plane.signed_distance(p).abs() < 0.5)
        .flat_map(chart)
        .collect();
    Ok(PlanView {
        path: path.waypoints.iter().flat_map(chart).collect(),
        walls,
        length: path.length(),
    })
}
