//! Run-level metrics: selection sparsity, side-channel rate and share, mean
//! payload, and the video-crop vs still-crop semantic deltas.

use alloc::collections::BTreeSet;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::engine::RunLog;
use crate::error::MetricsError;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct MetricsReport {
    pub selected_rois: u64,
    pub raw_candidates: u64,
    pub processed_frames: u64,
    pub selection_ratio: f64,
    pub frame_coverage: f64,
    pub duration_s: f64,
    pub roi_rate_hz: f64,
    pub roi_bitrate_bps: f64,
    pub base_bitrate_bps: f64,
    pub total_bitrate_bps: f64,
    pub bitrate_share: f64,
    pub mean_payload_bytes: f64,
    /// Transmissions that carried a semantic record.
    pub semantic_covered: u64,
    pub mean_video_conf: Option<f64>,
    pub mean_still_conf: Option<f64>,
    pub mean_conf_gain: Option<f64>,
    pub positive_gain_rate: Option<f64>,
    pub mean_entropy_gain: Option<f64>,
    pub prediction_change_rate: Option<f64>,
    pub tracks_refined: u64,
    /// Mean detector confidence plus `lambda_cls` times the mean confidence
    /// gain. Only present when `lambda_cls` is configured.
    pub combined_utility_proxy: Option<f64>,
}

/// Selected count, selection ratio and processed-frame coverage.
pub fn selection_stats(log: &RunLog) -> (u64, f64, f64) {
    let selected = log.transmissions.len() as u64;
    let covered = covered_frames(log);
    (
        selected,
        ratio(selected, log.raw_candidate_count),
        ratio(covered, log.processed_frames.len() as u64),
    )
}

fn covered_frames(log: &RunLog) -> u64 {
    log.transmissions
        .iter()
        .map(|t| t.frame_index)
        .collect::<BTreeSet<_>>()
        .len() as u64
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn bitrate_share(roi_bps: f64, base_bps: f64) -> f64 {
    let total = roi_bps + base_bps;
    if total > 0.0 {
        roi_bps / total
    } else {
        0.0
    }
}

pub fn aggregate(log: &RunLog, base_bitrate_bps: f64, duration_s: f64) -> Result<MetricsReport, MetricsError> {
    if !(duration_s > 0.0) || !duration_s.is_finite() {
        return Err(MetricsError::InvalidParam("duration_s must be positive"));
    }
    if !(base_bitrate_bps >= 0.0) || !base_bitrate_bps.is_finite() {
        return Err(MetricsError::InvalidParam("base_bitrate_bps must be non-negative"));
    }
    let (selected, selection_ratio, frame_coverage) = selection_stats(log);
    let total_bits = log.total_roi_bits();
    let roi_bitrate_bps = total_bits / duration_s;

    let mut n_sem = 0u64;
    let (mut video, mut still, mut gain, mut ent) = (0.0, 0.0, 0.0, 0.0);
    let (mut positive, mut changed) = (0u64, 0u64);
    for rec in log.transmissions.iter().filter_map(|t| t.semantic.as_ref()) {
        n_sem += 1;
        video += rec.video_conf;
        still += rec.still_conf;
        gain += rec.conf_gain();
        ent += rec.entropy_gain();
        positive += u64::from(rec.conf_gain() > 0.0);
        changed += u64::from(rec.prediction_changed());
    }
    let mean = |sum: f64| (n_sem > 0).then(|| sum / n_sem as f64);
    let share = |count: u64| (n_sem > 0).then(|| ratio(count, n_sem));

    let mean_conf_gain = mean(gain);
    let combined_utility_proxy = log.config.eval.lambda_cls.map(|lambda| {
        let det = ratio_f(log.detection_confidence_sum, log.raw_candidate_count);
        det + lambda * mean_conf_gain.unwrap_or(0.0)
    });

    Ok(MetricsReport {
        selected_rois: selected,
        raw_candidates: log.raw_candidate_count,
        processed_frames: log.processed_frames.len() as u64,
        selection_ratio,
        frame_coverage,
        duration_s,
        roi_rate_hz: selected as f64 / duration_s,
        roi_bitrate_bps,
        base_bitrate_bps,
        total_bitrate_bps: base_bitrate_bps + roi_bitrate_bps,
        bitrate_share: bitrate_share(roi_bitrate_bps, base_bitrate_bps),
        mean_payload_bytes: if selected > 0 {
            total_bits / 8.0 / selected as f64
        } else {
            0.0
        },
        semantic_covered: n_sem,
        mean_video_conf: mean(video),
        mean_still_conf: mean(still),
        mean_conf_gain,
        positive_gain_rate: share(positive),
        mean_entropy_gain: mean(ent),
        prediction_change_rate: share(changed),
        tracks_refined: log
            .transmissions
            .iter()
            .map(|t| t.track_id)
            .collect::<BTreeSet<_>>()
            .len() as u64,
        combined_utility_proxy,
    })
}

fn ratio_f(sum: f64, n: u64) -> f64 {
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// [`aggregate`] with the run's own base rate and duration.
pub fn aggregate_run(log: &RunLog) -> Result<MetricsReport, MetricsError> {
    aggregate(log, log.config.base_bitrate(), log.duration_s())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::BBox;
    use crate::engine::{RunConfig, TransmissionRecord};
    use crate::policy::{PolicyConfig, PolicyKind};
    use crate::semantic::SemanticRecord;
    use alloc::vec::Vec;
    use proptest::prelude::*;

    fn log_with(payloads: &[f64], raw: u64, processed: u64) -> RunLog {
        let transmissions = payloads
            .iter()
            .enumerate()
            .map(|(i, &bits)| TransmissionRecord {
                frame_index: i as u64 * 5,
                timestamp_s: i as f64 / 3.0,
                track_id: i as u64 % 7,
                bbox: BBox::new(0.0, 0.0, 10.0, 10.0).unwrap(),
                payload_bits: bits,
                score: 1.0,
                u_term: 0.0,
                s_small_term: 0.0,
                n_term: 0.0,
                semantic: None,
            })
            .collect();
        RunLog {
            config: RunConfig::new(PolicyConfig::new(PolicyKind::M5)),
            frame_count: processed * 5,
            processed_frames: (0..processed).map(|i| i * 5).collect(),
            raw_candidate_count: raw,
            detection_confidence_sum: 0.0,
            rejected_budget: 0,
            rejected_threshold: 0,
            transmissions,
            class_timeline: Vec::new(),
        }
    }

    #[test]
    fn empty_log() {
        let r = aggregate(&log_with(&[], 0, 0), 0.8e6, 10.0).unwrap();
        assert_eq!(r.selected_rois, 0);
        assert_eq!(r.selection_ratio, 0.0);
        assert_eq!(r.frame_coverage, 0.0);
        assert_eq!(r.bitrate_share, 0.0);
        assert_eq!(r.mean_conf_gain, None);
        assert_eq!(r.combined_utility_proxy, None);
    }

    #[test]
    fn rejects_bad_duration() {
        assert!(aggregate(&log_with(&[], 0, 0), 0.0, 0.0).is_err());
        assert!(aggregate(&log_with(&[], 0, 0), 0.0, -1.0).is_err());
    }

    #[test]
    fn ties_count_as_nonpositive() {
        let mut log = log_with(&[100.0, 100.0], 2, 2);
        for (t, still) in log.transmissions.iter_mut().zip([0.5, 0.6]) {
            t.semantic = Some(SemanticRecord {
                frame_index: t.frame_index,
                track_id: t.track_id as i64,
                video_conf: 0.5,
                still_conf: still,
                video_label: 1,
                still_label: 1,
                video_entropy: 1.0,
                still_entropy: 1.0,
                payload_bytes: None,
            });
        }
        let r = aggregate(&log, 0.0, 1.0).unwrap();
        assert_eq!(r.positive_gain_rate, Some(0.5));
        assert_eq!(r.prediction_change_rate, Some(0.0));
    }

    proptest! {
        #[test]
        fn conservation_and_share(payloads in proptest::collection::vec(1.0..20_000.0f64, 0..40),
                                  base in 0.0..2e6f64, dur in 0.5..100.0f64) {
            let log = log_with(&payloads, payloads.len() as u64 + 3, 40);
            let r = aggregate(&log, base, dur).unwrap();
            let total: f64 = payloads.iter().sum();
            prop_assert!((r.roi_bitrate_bps * dur - total).abs() <= 1e-9 * total.max(1.0));
            prop_assert!((0.0..1.0).contains(&r.bitrate_share) || (base == 0.0 && r.bitrate_share == 1.0));
            prop_assert!((0.0..=1.0).contains(&r.selection_ratio));
            prop_assert!((0.0..=1.0).contains(&r.frame_coverage));
        }

        #[test]
        fn share_increases_with_roi_rate(base in 1.0..2e6f64, a in 0.0..1e6f64, d in 1.0..1e6f64) {
            prop_assert!(bitrate_share(a + d, base) > bitrate_share(a, base));
            prop_assert_eq!(bitrate_share(0.0, base), 0.0);
        }

        #[test]
        fn permutation_invariant(payloads in proptest::collection::vec(1.0..20_000.0f64, 1..20), seed in any::<u64>()) {
            let log = log_with(&payloads, 50, 30);
            let mut shuffled = log.clone();
            let n = shuffled.transmissions.len();
            let mut s = seed;
            for i in (1..n).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                shuffled.transmissions.swap(i, (s >> 33) as usize % (i + 1));
            }
            let a = aggregate(&log, 1e5, 10.0).unwrap();
            let b = aggregate(&shuffled, 1e5, 10.0).unwrap();
            prop_assert_eq!(a.selected_rois, b.selected_rois);
            prop_assert_eq!(a.frame_coverage, b.frame_coverage);
            prop_assert_eq!(a.tracks_refined, b.tracks_refined);
            prop_assert!((a.roi_bitrate_bps - b.roi_bitrate_bps).abs() <= 1e-9 * a.roi_bitrate_bps);
        }
    }
}
