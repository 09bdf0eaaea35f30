mod common;

use endonav::environment::{fit_plane, synth_phantom, Environment, PhantomSpec, PlaneModel, PointCloud};
use endonav::planner::{check_path, plan, PathP, PlannerConfig};
use endonav::Error;
use nalgebra::Vector3;

fn phantom(
    spec: PhantomSpec,
) -> (
    Environment,
    endonav::environment::Landmarks,
    PlaneModel,
    Vec<Vector3<f64>>,
) {
    let ph = synth_phantom(&spec).unwrap();
    let plane = fit_plane(&ph.landmarks).unwrap();
    let cloud = ph.cloud.points().to_vec();
    (Environment::from_phantom(&ph), ph.landmarks, plane, cloud)
}

fn brute_clearance(path: &PathP, cloud: &[Vector3<f64>]) -> f64 {
    path.waypoints
        .windows(2)
        .flat_map(|w| common::resample(&w[0], &w[1], 0.1))
        .map(|p| common::brute_distance(&p, cloud))
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn phantom_paths_keep_clearance_by_brute_force() {
    for lateral in [-3.0, 0.0, 3.0] {
        let (env, lm, plane, cloud) = phantom(PhantomSpec {
            target_lateral: lateral,
            ..Default::default()
        });
        for seed in 0..5 {
            let cfg = PlannerConfig {
                seed,
                ..Default::default()
            };
            let path = plan(&env, &plane, &lm.start, &lm.target, &cfg).unwrap();
            check_path(&path, &env, &plane, &lm.start, &lm.target, &cfg).unwrap();
            let c = brute_clearance(&path, &cloud);
            assert!(c >= cfg.d_o, "lateral {lateral}, seed {seed}: clearance {c}");
            // The path must thread the corridor.
            let spec = PhantomSpec::default();
            let gate = spec.nasal_length + 0.5 * spec.corridor_length;
            assert!(path.waypoints.iter().any(|p| p.x > gate));
        }
    }
}

#[test]
fn same_seed_same_path() {
    let (env, lm, plane, _) = phantom(PhantomSpec::default());
    let cfg = PlannerConfig {
        seed: 17,
        ..Default::default()
    };
    let a = plan(&env, &plane, &lm.start, &lm.target, &cfg).unwrap();
    let b = plan(&env, &plane, &lm.start, &lm.target, &cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn clear_line_of_sight_is_nearly_straight() {
    // A sparse wall far from the segment.
    let mut pts = Vec::new();
    for i in -30..=30 {
        for k in -30..=30 {
            pts.push(Vector3::new(i as f64 * 2.0, 60.0, k as f64 * 2.0));
            pts.push(Vector3::new(i as f64 * 2.0, -60.0, k as f64 * 2.0));
        }
    }
    let env = Environment::from_cloud(PointCloud::new(pts, "O_P").unwrap());
    let plane = PlaneModel::through(&Vector3::zeros(), &Vector3::x(), &Vector3::y()).unwrap();
    let (s, t) = (Vector3::new(-25.0, -10.0, 0.0), Vector3::new(25.0, 12.0, 0.0));
    for seed in 0..5 {
        let cfg = PlannerConfig {
            seed,
            ..Default::default()
        };
        let path = plan(&env, &plane, &s, &t, &cfg).unwrap();
        assert!(path.length() <= 1.05 * (t - s).norm(), "seed {seed}: {}", path.length());
    }
}

#[test]
fn blocked_corridor_reports_no_path() {
    let (env, lm, plane, _) = phantom(PhantomSpec {
        corridor_radius: 1.2,
        ..Default::default()
    });
    let cfg = PlannerConfig {
        max_iters: 3000,
        ..Default::default()
    };
    assert!(matches!(
        plan(&env, &plane, &lm.start, &lm.target, &cfg),
        Err(Error::NoPathFound { iterations: 3000, .. })
    ));
}

#[test]
fn path_files_round_trip() {
    let (env, lm, plane, _) = phantom(PhantomSpec::default());
    let path = plan(&env, &plane, &lm.start, &lm.target, &PlannerConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    path.save_csv(&dir.path().join("p.csv")).unwrap();
    path.save_json(&dir.path().join("p.json")).unwrap();
    let back = PathP::load_csv(&dir.path().join("p.csv")).unwrap();
    assert_eq!(back.waypoints.len(), path.waypoints.len());
    for (a, b) in back.waypoints.iter().zip(&path.waypoints) {
        assert!((a - b).norm() < 1e-12);
    }
    let json: PathP = serde_json::from_str(&std::fs::read_to_string(dir.path().join("p.json")).unwrap()).unwrap();
    assert_eq!(json, path);
}
