//! One simulation run: stride over the stream, track, score, admit against
//! the rolling ROI budget and log every transmission.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::budget::{BudgetLedger, CostModel};
use crate::domain::{BBox, BudgetConfig, DetectionStream, EvalConfig, FrameClock};
use crate::error::{EngineError, PolicyError};
use crate::policy::{self, PolicyConfig, RoiCandidate};
use crate::semantic::{SemanticRecord, SemanticSidecar};
use crate::tracker::{TrackerConfig, TrackerState};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct RunConfig {
    pub clock: FrameClock,
    pub budget: BudgetConfig,
    pub policy: PolicyConfig,
    pub tracker: TrackerConfig,
    pub cost: CostModel,
    pub eval: EvalConfig,
    /// Measured base-stream rate; replaces `budget.b_video` in reporting.
    pub base_bitrate_measured: Option<f64>,
    pub seed: u64,
}

impl RunConfig {
    /// Low-regime hybrid defaults at 15 fps, every fifth frame processed.
    pub fn new(policy: PolicyConfig) -> Self {
        Self {
            clock: FrameClock {
                fps: 15.0,
                frame_stride: 5,
            },
            budget: BudgetConfig::low_hybrid(),
            policy,
            tracker: TrackerConfig::default(),
            cost: CostModel::default(),
            eval: EvalConfig::default(),
            base_bitrate_measured: None,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        FrameClock::new(self.clock.fps, self.clock.frame_stride)?;
        self.budget.validate()?;
        self.eval.validate()?;
        self.tracker.validate()?;
        self.cost.validate()?;
        self.policy.validate()?;
        if let Some(b) = self.base_bitrate_measured {
            if !(b >= 0.0) || !b.is_finite() {
                return Err(PolicyError::InvalidParam("base_bitrate_measured must be non-negative").into());
            }
        }
        Ok(())
    }

    /// Base-stream rate used for totals and shares.
    pub fn base_bitrate(&self) -> f64 {
        self.base_bitrate_measured.unwrap_or(self.budget.b_video)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct TransmissionRecord {
    pub frame_index: u64,
    pub timestamp_s: f64,
    pub track_id: u64,
    pub bbox: BBox,
    /// Bits charged to the ledger for this ROI.
    pub payload_bits: f64,
    pub score: f64,
    pub u_term: f64,
    pub s_small_term: f64,
    pub n_term: f64,
    pub semantic: Option<SemanticRecord>,
}

/// Class estimate of one track on one processed frame, after any refinement
/// arriving on that frame has been applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ClassSample {
    pub frame_index: u64,
    pub track_id: u64,
    /// Class reported by the detector on the base stream.
    pub video_class: i64,
    /// Current estimate: the last still label received, else `video_class`.
    pub current_class: i64,
    pub refined_here: bool,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct RunLog {
    pub config: RunConfig,
    pub frame_count: u64,
    /// Processed frame indices, ascending.
    pub processed_frames: Vec<u64>,
    /// Detections seen on processed frames.
    pub raw_candidate_count: u64,
    /// Sum of detector confidence over those detections.
    pub detection_confidence_sum: f64,
    pub rejected_budget: u64,
    pub rejected_threshold: u64,
    /// Ordered by timestamp.
    pub transmissions: Vec<TransmissionRecord>,
    pub class_timeline: Vec<ClassSample>,
}

impl RunLog {
    pub fn is_processed(&self, frame_index: u64) -> bool {
        self.processed_frames.binary_search(&frame_index).is_ok()
    }

    pub fn total_roi_bits(&self) -> f64 {
        self.transmissions.iter().map(|t| t.payload_bits).fold(0.0, |acc, b| acc + b)
    }

    /// Duration used to turn counts into rates: the configured override,
    /// else the processed span, else one decision interval.
    pub fn duration_s(&self) -> f64 {
        if let Some(d) = self.config.eval.duration_s {
            return d;
        }
        let clock = &self.config.clock;
        match (self.processed_frames.first(), self.processed_frames.last()) {
            (Some(&a), Some(&b)) if b > a => (b - a) as f64 / clock.fps,
            _ => clock.frame_stride as f64 / clock.fps,
        }
    }
}

/// Looks up the semantic record for a detection. Annotation-derived
/// detections are keyed by their ground-truth id, others by engine track id.
fn sidecar_key(track_hint: Option<i64>, track_id: u64) -> i64 {
    track_hint.unwrap_or(track_id as i64)
}

pub fn run(
    stream: &DetectionStream,
    sidecar: Option<&SemanticSidecar>,
    cfg: &RunConfig,
) -> Result<RunLog, EngineError> {
    cfg.validate()?;
    if stream.clock != cfg.clock {
        return Err(EngineError::ClockMismatch {
            stream: stream.clock,
            config: cfg.clock,
        });
    }
    let clock = cfg.clock;
    let mut tracker = TrackerState::new(cfg.tracker)?;
    let mut ledger = BudgetLedger::new(cfg.budget.b_roi, cfg.budget.window_s)?;
    let mut still_class: BTreeMap<u64, i64> = BTreeMap::new();

    let mut log = RunLog {
        config: *cfg,
        frame_count: stream.frame_count,
        processed_frames: Vec::new(),
        raw_candidate_count: 0,
        detection_confidence_sum: 0.0,
        rejected_budget: 0,
        rejected_threshold: 0,
        transmissions: Vec::new(),
        class_timeline: Vec::new(),
    };

    for frame in clock.processed_frames(stream.frame_count) {
        log.processed_frames.push(frame);
        let now_s = clock.timestamp(frame);
        let detections = stream.detections_at(frame);
        let assocs = tracker.step(frame, detections)?;
        log.raw_candidate_count += assocs.len() as u64;
        log.detection_confidence_sum += detections.iter().map(|d| d.confidence).fold(0.0, |acc, c| acc + c);

        let mut candidates: Vec<RoiCandidate> = Vec::with_capacity(assocs.len());
        let mut semantics: Vec<Option<SemanticRecord>> = Vec::with_capacity(assocs.len());
        for a in &assocs {
            let track = tracker.track(a.track_id).expect("associated track is active");
            let record = sidecar
                .and_then(|s| s.get(frame, sidecar_key(a.detection.track_hint, a.track_id)))
                .copied();
            let cost_bits = match record.and_then(|r| r.payload_bytes) {
                Some(bytes) => bytes as f64 * 8.0,
                None => cfg.cost.estimate_cost(&a.detection.bbox),
            };
            candidates.push(RoiCandidate::score(
                a,
                track,
                cost_bits,
                record.map(|r| r.video_conf),
                &cfg.policy,
            )?);
            semantics.push(record);
        }

        let decision = policy::decide(&candidates, &ledger, now_s, &cfg.policy)?;
        log.rejected_threshold += decision.rejected_threshold as u64;
        log.rejected_budget += decision.rejected_budget as u64;

        let mut refined_now: Vec<u64> = Vec::new();
        for chosen in &decision.selected {
            // Re-check at commit time; a policy bug must not breach the budget.
            if !ledger.admits(now_s, chosen.cost_bits)? {
                log.rejected_budget += 1;
                continue;
            }
            ledger.commit(now_s, chosen.cost_bits)?;
            tracker.mark_refined(chosen.track_id, frame)?;
            let idx = candidates
                .iter()
                .position(|c| c.track_id == chosen.track_id)
                .expect("selected candidate comes from this frame");
            let semantic = semantics[idx];
            if let Some(rec) = semantic {
                still_class.insert(chosen.track_id, rec.still_label);
            }
            refined_now.push(chosen.track_id);
            log.transmissions.push(TransmissionRecord {
                frame_index: frame,
                timestamp_s: now_s,
                track_id: chosen.track_id,
                bbox: chosen.bbox,
                payload_bits: chosen.cost_bits,
                score: chosen.score,
                u_term: chosen.u_term,
                s_small_term: chosen.s_small_term,
                n_term: chosen.n_term,
                semantic,
            });
        }

        for a in &assocs {
            let video_class = a.detection.class_id;
            log.class_timeline.push(ClassSample {
                frame_index: frame,
                track_id: a.track_id,
                video_class,
                current_class: still_class.get(&a.track_id).copied().unwrap_or(video_class),
                refined_here: refined_now.contains(&a.track_id),
            });
        }
    }
    Ok(log)
}

/// Runs every variant against the same stream, sidecar and budget regime.
/// Output order follows `variants`.
pub fn sweep(
    stream: &DetectionStream,
    sidecar: Option<&SemanticSidecar>,
    base: &RunConfig,
    variants: &[PolicyConfig],
) -> Result<Vec<(PolicyConfig, RunLog)>, EngineError> {
    if variants.is_empty() {
        return Err(EngineError::EmptySweep);
    }
    variants
        .iter()
        .map(|v| {
            let cfg = RunConfig { policy: *v, ..*base };
            run(stream, sidecar, &cfg).map(|log| (*v, log))
        })
        .collect()
}
