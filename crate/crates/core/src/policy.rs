//! ROI selection policies.
//!
//! Every candidate carries the utility-per-bit score
//! `(w_u·U + w_s·S_small + w_n·N) / C`, with `U = 1 - confidence`,
//! `S_small = clamp(1 - area/area_ref, 0, 1)`, `N ∈ {0, 1}` and `C` the
//! estimated still cost in bits. Each variant then gates and caps the
//! candidates of one processed frame, and whatever survives is admitted
//! against the rolling ROI budget in descending score order.

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::budget::BudgetLedger;
use crate::domain::BBox;
use crate::error::{BudgetError, PolicyError};
use crate::tracker::{Association, Track};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub enum PolicyKind {
    /// Video only, never transmits.
    M0,
    /// Periodic refresh of every active track.
    M1,
    /// First appearance of a track.
    M2,
    /// Low confidence.
    M3,
    /// Small box.
    M4,
    /// Utility per bit with a score threshold.
    M5,
    #[cfg_attr(feature = "serde", serde(rename = "preset_permissive"))]
    PresetPermissive,
    #[cfg_attr(feature = "serde", serde(rename = "preset_conf_size_top1"))]
    PresetConfSizeTop1,
    #[cfg_attr(feature = "serde", serde(rename = "preset_strict_small_only"))]
    PresetStrictSmallOnly,
    #[cfg_attr(feature = "serde", serde(rename = "preset_balanced_top2"))]
    PresetBalancedTop2,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 10] = [
        PolicyKind::M0,
        PolicyKind::M1,
        PolicyKind::M2,
        PolicyKind::M3,
        PolicyKind::M4,
        PolicyKind::M5,
        PolicyKind::PresetPermissive,
        PolicyKind::PresetConfSizeTop1,
        PolicyKind::PresetStrictSmallOnly,
        PolicyKind::PresetBalancedTop2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::M0 => "M0",
            PolicyKind::M1 => "M1",
            PolicyKind::M2 => "M2",
            PolicyKind::M3 => "M3",
            PolicyKind::M4 => "M4",
            PolicyKind::M5 => "M5",
            PolicyKind::PresetPermissive => "preset_permissive",
            PolicyKind::PresetConfSizeTop1 => "preset_conf_size_top1",
            PolicyKind::PresetStrictSmallOnly => "preset_strict_small_only",
            PolicyKind::PresetBalancedTop2 => "preset_balanced_top2",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = PolicyError;

    /// Accepts the canonical names, case-insensitively, and the preset names
    /// without their `preset_` prefix.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        PolicyKind::ALL
            .into_iter()
            .find(|k| {
                let name = k.name();
                name.eq_ignore_ascii_case(s)
                    || name
                        .strip_prefix("preset_")
                        .is_some_and(|short| short.eq_ignore_ascii_case(s))
            })
            .ok_or(PolicyError::InvalidParam("unknown policy variant"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ScoreWeights {
    pub w_u: f64,
    pub w_s: f64,
    pub w_n: f64,
}

impl Default for ScoreWeights {
    fn default() -> Self {
        Self {
            w_u: 0.5,
            w_s: 0.3,
            w_n: 0.2,
        }
    }
}

/// Where the uncertainty term and the M3 gate read confidence from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ConfidenceSource {
    #[default]
    Detector,
    /// Video-crop classifier confidence from the semantic sidecar, falling
    /// back to the detector when no record exists.
    Classifier,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct PolicyConfig {
    pub variant: PolicyKind,
    /// M1 refresh interval in source frames.
    pub period_frames: Option<u64>,
    /// M3 trigger (`conf < threshold`); confidence gate for presets (`conf >= threshold`).
    pub conf_threshold: Option<f64>,
    /// M4 trigger and preset size gate (`area < threshold`), in px².
    pub area_threshold: Option<f64>,
    /// M5 and balanced preset gate (`score > threshold`).
    pub score_threshold: Option<f64>,
    /// Per-frame selection cap. Unset means the variant's own default.
    pub top_k: Option<usize>,
    /// Frames after a refinement during which the novelty term stays 0.
    pub cooldown_frames: u64,
    pub weights: ScoreWeights,
    /// Reference area of the size-priority term, px².
    pub area_ref: f64,
    pub confidence_source: ConfidenceSource,
}

impl PolicyConfig {
    pub const DEFAULT_COOLDOWN_FRAMES: u64 = 30;
    pub const DEFAULT_AREA_REF: f64 = 32.0 * 32.0;
    pub const PRESET_CONF_GATE: f64 = 0.3;
    pub const PERMISSIVE_CONF_GATE: f64 = 0.25;
    pub const PRESET_AREA_GATE: f64 = 32.0 * 32.0;
    pub const RELAXED_SCORE_GATE: f64 = 0.0;

    /// A config for `variant` with no optional parameters set.
    pub fn new(variant: PolicyKind) -> Self {
        Self {
            variant,
            period_frames: None,
            conf_threshold: None,
            area_threshold: None,
            score_threshold: None,
            top_k: None,
            cooldown_frames: Self::DEFAULT_COOLDOWN_FRAMES,
            weights: ScoreWeights::default(),
            area_ref: Self::DEFAULT_AREA_REF,
            confidence_source: ConfidenceSource::Detector,
        }
    }

    pub fn with_variant(&self, variant: PolicyKind) -> Self {
        Self { variant, ..*self }
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        self.rule().map(|_| ())
    }

    fn require<T>(&self, value: Option<T>, param: &'static str) -> Result<T, PolicyError> {
        value.ok_or(PolicyError::MissingParam {
            variant: self.variant.name(),
            param,
        })
    }

    fn rule(&self) -> Result<Rule, PolicyError> {
        let w = self.weights;
        if [w.w_u, w.w_s, w.w_n].iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(PolicyError::InvalidParam("score weights must be non-negative"));
        }
        if !(self.area_ref > 0.0) || !self.area_ref.is_finite() {
            return Err(PolicyError::InvalidParam("area_ref must be positive"));
        }
        if let Some(c) = self.conf_threshold {
            if !(0.0..=1.0).contains(&c) {
                return Err(PolicyError::InvalidParam("conf_threshold must lie in [0, 1]"));
            }
        }
        if self.area_threshold.is_some_and(|a| !(a >= 0.0)) {
            return Err(PolicyError::InvalidParam("area_threshold must be non-negative"));
        }
        if self.score_threshold.is_some_and(f64::is_nan) {
            return Err(PolicyError::InvalidParam("score_threshold must be a number"));
        }
        if self.top_k == Some(0) {
            return Err(PolicyError::InvalidParam("top_k must be positive"));
        }
        let rule = match self.variant {
            PolicyKind::M0 => Rule::Never,
            PolicyKind::M1 => {
                let period = self.require(self.period_frames, "period_frames")?;
                if period == 0 {
                    return Err(PolicyError::InvalidParam("period_frames must be positive"));
                }
                Rule::Gated(Gate::Periodic(period), self.top_k)
            }
            PolicyKind::M2 => Rule::Gated(Gate::FirstAppearance, self.top_k),
            PolicyKind::M3 => Rule::Gated(
                Gate::Uncertain(self.require(self.conf_threshold, "conf_threshold")?),
                self.top_k,
            ),
            PolicyKind::M4 => Rule::Gated(
                Gate::Small(self.require(self.area_threshold, "area_threshold")?),
                self.top_k,
            ),
            PolicyKind::M5 => Rule::Gated(
                Gate::Score(self.require(self.score_threshold, "score_threshold")?),
                Some(self.top_k.unwrap_or(1)),
            ),
            PolicyKind::PresetPermissive => Rule::Gated(
                Gate::Confident(self.conf_threshold.unwrap_or(Self::PERMISSIVE_CONF_GATE)),
                self.top_k,
            ),
            PolicyKind::PresetConfSizeTop1 => Rule::Gated(
                Gate::ConfidentAndSmall(
                    self.conf_threshold.unwrap_or(Self::PRESET_CONF_GATE),
                    self.area_threshold.unwrap_or(Self::PRESET_AREA_GATE),
                ),
                Some(self.top_k.unwrap_or(1)),
            ),
            PolicyKind::PresetStrictSmallOnly => Rule::Gated(
                Gate::Small(self.area_threshold.unwrap_or(Self::PRESET_AREA_GATE)),
                Some(self.top_k.unwrap_or(1)),
            ),
            PolicyKind::PresetBalancedTop2 => Rule::Gated(
                Gate::Score(self.score_threshold.unwrap_or(Self::RELAXED_SCORE_GATE)),
                Some(self.top_k.unwrap_or(2)),
            ),
        };
        Ok(rule)
    }
}

enum Rule {
    Never,
    /// Gate plus optional per-frame cap (`None` = unlimited).
    Gated(Gate, Option<usize>),
}

#[derive(Clone, Copy)]
enum Gate {
    Periodic(u64),
    FirstAppearance,
    Uncertain(f64),
    Small(f64),
    Score(f64),
    Confident(f64),
    ConfidentAndSmall(f64, f64),
}

impl Gate {
    fn passes(self, c: &RoiCandidate) -> bool {
        match self {
            Gate::Periodic(period) => {
                let since = c.last_refined_frame.unwrap_or(c.created_frame);
                c.frame_index.saturating_sub(since) >= period
            }
            Gate::FirstAppearance => c.is_new,
            Gate::Uncertain(t) => c.confidence < t,
            Gate::Small(a) => c.bbox.area() < a,
            Gate::Score(t) => c.score > t,
            Gate::Confident(t) => c.confidence >= t,
            Gate::ConfidentAndSmall(t, a) => c.confidence >= t && c.bbox.area() < a,
        }
    }
}

/// A scored, costed transmission candidate for one tracked detection.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct RoiCandidate {
    pub frame_index: u64,
    pub track_id: u64,
    pub bbox: BBox,
    pub u_term: f64,
    pub s_small_term: f64,
    pub n_term: f64,
    pub cost_bits: f64,
    pub score: f64,
    /// Confidence the uncertainty term and the M3 gate were computed from.
    pub confidence: f64,
    pub is_new: bool,
    pub created_frame: u64,
    pub last_refined_frame: Option<u64>,
}

impl RoiCandidate {
    /// Scores one association. `classifier_conf` is only consulted when the
    /// config asks for classifier confidence.
    pub fn score(
        assoc: &Association,
        track: &Track,
        cost_bits: f64,
        classifier_conf: Option<f64>,
        cfg: &PolicyConfig,
    ) -> Result<Self, PolicyError> {
        let confidence = match cfg.confidence_source {
            ConfidenceSource::Detector => assoc.detection.confidence,
            ConfidenceSource::Classifier => classifier_conf.unwrap_or(assoc.detection.confidence),
        };
        let frame_index = assoc.detection.frame_index;
        let u_term = uncertainty_term(confidence);
        let s_small_term = size_term(&assoc.detection.bbox, cfg.area_ref)?;
        let n_term = novelty_term(track, frame_index, cfg.cooldown_frames);
        let score = score_roi(u_term, s_small_term, n_term, cost_bits, cfg.weights)?;
        Ok(Self {
            frame_index,
            track_id: assoc.track_id,
            bbox: assoc.detection.bbox,
            u_term,
            s_small_term,
            n_term,
            cost_bits,
            score,
            confidence,
            is_new: assoc.is_new,
            created_frame: track.created_frame,
            last_refined_frame: track.last_refined_frame,
        })
    }
}

pub fn uncertainty_term(det_conf: f64) -> f64 {
    (1.0 - det_conf).clamp(0.0, 1.0)
}

/// Small boxes score near 1, boxes at or above `area_ref` score 0.
pub fn size_term(bbox: &BBox, area_ref: f64) -> Result<f64, PolicyError> {
    if !(area_ref > 0.0) {
        return Err(PolicyError::InvalidParam("area_ref must be positive"));
    }
    Ok((1.0 - bbox.area() / area_ref).clamp(0.0, 1.0))
}

/// 1 for a never-refined track or one refined more than `cooldown_frames` ago.
pub fn novelty_term(track: &Track, frame_index: u64, cooldown_frames: u64) -> f64 {
    match track.last_refined_frame {
        None => 1.0,
        Some(last) if frame_index.saturating_sub(last) > cooldown_frames => 1.0,
        Some(_) => 0.0,
    }
}

pub fn score_roi(u: f64, s: f64, n: f64, cost_bits: f64, weights: ScoreWeights) -> Result<f64, PolicyError> {
    if !(cost_bits > 0.0) || !cost_bits.is_finite() {
        return Err(PolicyError::InvalidParam("cost_bits must be positive"));
    }
    Ok((weights.w_u * u + weights.w_s * s + weights.w_n * n) / cost_bits)
}

/// Outcome of one decision step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Decision {
    /// Descending score, ties by ascending track id.
    pub selected: Vec<RoiCandidate>,
    /// Passed the variant's gate but did not fit the rolling budget.
    pub rejected_budget: usize,
    /// Failed the variant's gate.
    pub rejected_threshold: usize,
}

/// Descending score, then ascending track id.
pub fn rank(candidates: &[RoiCandidate]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| {
        let (ca, cb) = (&candidates[a], &candidates[b]);
        cb.score
            .total_cmp(&ca.score)
            .then(ca.track_id.cmp(&cb.track_id))
            .then(a.cmp(&b))
    });
    order
}

/// Picks the ROIs to send for one processed frame at time `now_s`.
///
/// `ledger` is read-only; admission of several ROIs in the same step is
/// checked cumulatively against a scratch copy.
pub fn decide(
    candidates: &[RoiCandidate],
    ledger: &BudgetLedger,
    now_s: f64,
    cfg: &PolicyConfig,
) -> Result<Decision, PolicyError> {
    let (gate, cap) = match cfg.rule()? {
        Rule::Never => return Ok(Decision::default()),
        Rule::Gated(gate, cap) => (gate, cap),
    };
    let mut scratch = ledger.clone();
    let mut decision = Decision::default();
    for i in rank(candidates) {
        let c = &candidates[i];
        if !gate.passes(c) {
            decision.rejected_threshold += 1;
            continue;
        }
        if cap.is_some_and(|k| decision.selected.len() >= k) {
            continue;
        }
        if scratch.admits(now_s, c.cost_bits).map_err(ledger_err)? {
            scratch.commit(now_s, c.cost_bits).map_err(ledger_err)?;
            decision.selected.push(*c);
        } else {
            decision.rejected_budget += 1;
        }
    }
    Ok(decision)
}

fn ledger_err(e: BudgetError) -> PolicyError {
    match e {
        BudgetError::InvalidParam(p) => PolicyError::InvalidParam(p),
        BudgetError::TimeWentBackwards { .. } => PolicyError::InvalidParam("decision time precedes ledger"),
        BudgetError::BudgetViolation { .. } => PolicyError::InvalidParam("ledger rejected an admitted commit"),
    }
}
