//! Budgeted scheduling of high-detail ROI stills alongside a low-bitrate
//! video stream.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, configuration
//! files and the command line live in the `roilink` crate.
//!
//! Pipeline of one run ([`engine::run`]): every processed frame is tracked
//! ([`tracker`]), each tracked detection becomes a scored candidate
//! ([`policy`]), the chosen policy picks candidates that fit the rolling ROI
//! budget ([`budget`]), and the resulting [`engine::RunLog`] is summarized by
//! [`metrics`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod budget;
pub mod domain;
pub mod engine;
pub mod error;
pub mod metrics;
pub mod policy;
pub mod semantic;
pub mod tracker;

pub use budget::{BudgetLedger, CostModel};
pub use domain::{BBox, BudgetConfig, Detection, DetectionStream, EvalConfig, Frame, FrameClock};
pub use engine::{run, sweep, ClassSample, RunConfig, RunLog, TransmissionRecord};
pub use error::{BudgetError, DomainError, EngineError, MetricsError, PolicyError, TrackerError};
pub use metrics::{aggregate, aggregate_run, selection_stats, MetricsReport};
pub use policy::{ConfidenceSource, Decision, PolicyConfig, PolicyKind, RoiCandidate, ScoreWeights};
pub use semantic::{SemanticRecord, SemanticSidecar};
pub use tracker::{Association, Track, TrackerConfig, TrackerState};
