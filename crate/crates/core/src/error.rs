use thiserror::Error;

use crate::geom::Vec2;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point ({}, {}) lies inside the excluded disk of radius {sigma}", .point.x, .point.y)]
    InteriorPoint { point: Vec2, sigma: f64 },

    #[error("non-finite value while evaluating {what} at ({}, {})", .point.x, .point.y)]
    NonFinite { what: &'static str, point: Vec2 },

    #[error("parse error at column {column}: {message}")]
    Parse { column: usize, message: String },

    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("gradient of the leaf function vanishes at ({}, {})", .point.x, .point.y)]
    VanishingGradient { point: Vec2 },

    #[error("degenerate tangency at parameter {theta}")]
    DegenerateTangency { theta: f64 },

    #[error("winding increment reached {increment} rad even after refinement")]
    StepResolution { increment: f64 },

    #[error("translation search exhausted its budget (best clearance {best_clearance})")]
    SearchFailure { best_clearance: f64 },

    #[error("cannot build the integration region: {0}")]
    RegionConstruction(String),

    #[error("internal inconsistency: {0}")]
    Inconsistency(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit status used by the command-line runner.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } | Error::Unknown { .. } | Error::Config(_) => 1,
            Error::Inconsistency(_) => 3,
            Error::Io(_) | Error::Json(_) => 1,
            _ => 2,
        }
    }
}
