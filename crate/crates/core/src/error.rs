use std::path::PathBuf;

/// Errors produced anywhere in the navigation pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("{path}:{line}: malformed row: {reason}")]
    MalformedRow { path: PathBuf, line: usize, reason: String },

    #[error("point cloud is empty")]
    EmptyCloud,

    #[error("parse error: {0}")]
    Parse(String),

    // planner
    #[error("start or target is not reachable: {0}")]
    InfeasibleEndpoint(String),

    #[error("no path found after {iterations} iterations (seed {seed})")]
    NoPathFound { iterations: usize, seed: u64 },

    // registration
    #[error("need at least 3 markers, got {0}")]
    TooFewMarkers(usize),

    #[error("marker labels do not match: {0}")]
    LabelMismatch(String),

    #[error("markers are collinear")]
    CollinearMarkers,

    // imaging
    #[error("rendered frame is empty: the endoscope projects outside the image")]
    EmptyFrame,

    #[error("skeleton is empty")]
    NoSkeleton,

    #[error("skeleton has no endpoint pixels")]
    NoEndpoint,

    #[error("view is degenerate for the path plane (condition number {0:e})")]
    DegenerateView(f64),

    // controller
    #[error("joint limits are infeasible at joint {0}")]
    InfeasibleLimits(usize),

    #[error("step budget exhausted: {steps} steps on waypoint {waypoint}")]
    StepBudget { waypoint: usize, steps: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
