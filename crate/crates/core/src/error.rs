use thiserror::Error;

/// Errors raised by geometric evaluation, integration and walks.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("point {point:?} lies outside the chart domain")]
    OutOfDomain { point: Vec<f64> },

    #[error("frame matrix is singular (condition number {condition:e})")]
    SingularFrame { condition: f64 },

    #[error("vector is not horizontal (complement residual {residual:e})")]
    NotHorizontal { residual: f64 },

    /// Integration or a retraction step left the chart; carries the last valid state.
    #[error("left the chart domain at time {time}")]
    LeftDomain { time: f64, last: Vec<f64> },

    #[error("invalid step size or horizon (dt = {dt}, horizon = {horizon})")]
    StepSizeInvalid { dt: f64, horizon: f64 },

    #[error("reference connection is not compatible (residual {residual:e})")]
    NotCompatibleInput { residual: f64 },

    #[error("requested time {time} exceeds the walk horizon of {steps} steps")]
    HorizonExceeded { time: f64, steps: usize },

    #[error("step {step} was not recorded (record_every = {record_every})")]
    StepNotRecorded { step: usize, record_every: usize },

    #[error("point is within the polar exclusion band (t = {t})")]
    PoleProximity { t: f64 },

    #[error("symmetric square root failed: eigenvalue {eigenvalue:e} below floor")]
    NotPositiveDefinite { eigenvalue: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("retraction {kind} does not transport frames")]
    FrameNotSupported { kind: &'static str },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("not enough data: {0}")]
    InsufficientData(String),
}

pub type Result<T> = std::result::Result<T, Error>;
