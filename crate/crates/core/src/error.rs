//! Crate-wide error type.

use thiserror::Error;

#[derive(Error, Debug)]
pub enum Error {
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("mesh is not watertight: {0}")]
    NonWatertight(String),

    #[error("SDF grid has no zero crossing (all values {0})")]
    EmptySurface(&'static str),

    #[error("SDF grids do not share a common grid: {0}")]
    GridMismatch(String),

    #[error("invalid shape class `{0}`")]
    InvalidShapeClass(String),

    #[error("flow time s = 1 reached; velocity undefined")]
    FlowTimeExhausted,

    #[error("flow already at final step {0}")]
    StepPastEnd(usize),

    #[error("guidance hook failed at step {step}: {source}")]
    HookFailed {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("registration step `{step}` failed: {source}")]
    RegistrationStep {
        step: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("map size mismatch: {0}")]
    MapSizeMismatch(String),

    #[error("object outside camera frustum")]
    OutsideFrustum,

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed file {path}: {detail}")]
    MalformedFile { path: String, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
