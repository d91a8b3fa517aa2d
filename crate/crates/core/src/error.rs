use thiserror::Error;

/// Errors produced across the imputation toolkit.
#[derive(Debug, Error)]
pub enum MidasError {
    #[error("invalid window: {0}")]
    InvalidWindow(String),

    #[error("unrecognized input format: {0}")]
    Format(String),

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error("degenerate pitch bounds ({length} x {width})")]
    DegenerateBounds { length: f64, width: f64 },

    #[error("invalid missing rate {rate}: {reason}")]
    InvalidRate { rate: f64, reason: String },

    #[error("missing ball track for camera masking")]
    MissingBall,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("segment ({t_s}, {t_e}) outside window of {frames} frames")]
    SegmentOutOfRange { t_s: usize, t_e: usize, frames: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("training diverged at step {step}: {detail}")]
    Diverged { step: usize, detail: String },

    #[error("empty team: {0}")]
    EmptyTeam(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = MidasError> = std::result::Result<T, E>;
