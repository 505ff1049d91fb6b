use thiserror::Error;

/// Violations of value-type invariants.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("box coordinates must be finite")]
    NonFiniteCoordinate,
    #[error("non-positive width {0}")]
    NonPositiveWidth(f64),
    #[error("non-positive height {0}")]
    NonPositiveHeight(f64),
    #[error("confidence {0} outside [0, 1]")]
    ConfidenceOutOfRange(f64),
    #[error("entropy {0} must be a non-negative number")]
    NegativeEntropy(f64),
    #[error("payload_bytes must be positive")]
    ZeroPayload,
    #[error("fps must be positive, got {0}")]
    InvalidFps(f64),
    #[error("frame_stride must be positive")]
    ZeroStride,
    #[error("{name} must be a non-negative rate, got {value}")]
    NegativeRate { name: &'static str, value: f64 },
    #[error("window_s must be positive, got {0}")]
    InvalidWindow(f64),
    #[error("b_video + b_roi = {} exceeds b_total = {b_total}", b_video + b_roi)]
    BudgetExceedsTotal { b_video: f64, b_roi: f64, b_total: f64 },
    #[error("lambda_cls must be non-negative, got {0}")]
    NegativeLambda(f64),
    #[error("duration_s must be positive, got {0}")]
    InvalidDuration(f64),
    #[error("frame {0} is not after the previous frame")]
    FramesNotIncreasing(u64),
    #[error("frame {frame} lies beyond frame_count {frame_count}")]
    FrameBeyondCount { frame: u64, frame_count: u64 },
    #[error("detection tagged frame {detection_frame} stored under frame {frame}")]
    FrameIndexMismatch { frame: u64, detection_frame: u64 },
    #[error("duplicate sidecar key (frame {frame}, track {track})")]
    DuplicateKey { frame: u64, track: i64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrackerError {
    #[error("frame {frame} does not follow previously stepped frame {previous}")]
    OutOfOrderFrame { frame: u64, previous: u64 },
    #[error("track {0} is not active")]
    UnknownTrack(u64),
    #[error("iou_min must lie in [0, 1], got {0}")]
    InvalidIouMin(f64),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BudgetError {
    #[error("invalid parameter: {0}")]
    InvalidParam(&'static str),
    #[error("committing {bits} bits at t={now_s}s would exceed the rolling ROI budget")]
    BudgetViolation { now_s: f64, bits: f64 },
    #[error("time {now_s}s precedes the latest ledger entry at {latest_s}s")]
    TimeWentBackwards { now_s: f64, latest_s: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("invalid parameter: {0}")]
    InvalidParam(&'static str),
    #[error("policy {variant} requires `{param}`")]
    MissingParam { variant: &'static str, param: &'static str },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("invalid parameter: {0}")]
    InvalidParam(&'static str),
}

/// Anything that can stop a simulation run.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Tracker(#[from] TrackerError),
    #[error(transparent)]
    Budget(#[from] BudgetError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("stream clock {stream:?} differs from configured clock {config:?}")]
    ClockMismatch {
        stream: crate::domain::FrameClock,
        config: crate::domain::FrameClock,
    },
    #[error("sweep needs at least one policy variant")]
    EmptySweep,
}
