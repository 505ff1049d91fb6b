//! Greedy IoU association. Keeps track identities alive across processed
//! frames and records when each track was last refined by a still.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::domain::{BBox, Detection};
use crate::error::TrackerError;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Track {
    pub id: u64,
    pub last_bbox: BBox,
    pub last_seen_frame: u64,
    pub consecutive_misses: u32,
    pub created_frame: u64,
    pub last_refined_frame: Option<u64>,
    pub refined_count: u32,
    pub last_class: Option<i64>,
    pub last_confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct TrackerConfig {
    pub iou_min: f64,
    /// Processed frames a track may go unmatched before it is retired.
    pub max_misses: u32,
    /// Associate by `Detection::track_hint` when present instead of IoU.
    pub use_hints: bool,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            iou_min: 0.3,
            max_misses: 10,
            use_hints: false,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<(), TrackerError> {
        if !(0.0..=1.0).contains(&self.iou_min) {
            return Err(TrackerError::InvalidIouMin(self.iou_min));
        }
        Ok(())
    }
}

/// One detection of a stepped frame and the track it was assigned to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Association {
    pub detection: Detection,
    pub track_id: u64,
    pub is_new: bool,
}

#[derive(Debug, Clone)]
pub struct TrackerState {
    config: TrackerConfig,
    active: Vec<Track>,
    next_id: u64,
    last_frame: Option<u64>,
    hint_to_track: BTreeMap<i64, u64>,
}

impl TrackerState {
    pub fn new(config: TrackerConfig) -> Result<Self, TrackerError> {
        config.validate()?;
        Ok(Self {
            config,
            active: Vec::new(),
            next_id: 0,
            last_frame: None,
            hint_to_track: BTreeMap::new(),
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    /// Active tracks in ascending id order.
    pub fn tracks(&self) -> &[Track] {
        &self.active
    }

    pub fn track(&self, id: u64) -> Option<&Track> {
        self.position(id).map(|i| &self.active[i])
    }

    /// Number of ids handed out so far.
    pub fn issued_ids(&self) -> u64 {
        self.next_id
    }

    fn position(&self, id: u64) -> Option<usize> {
        self.active.binary_search_by_key(&id, |t| t.id).ok()
    }

    /// Associates one processed frame's detections. The result is in
    /// detection order.
    pub fn step(
        &mut self,
        frame_index: u64,
        detections: &[Detection],
    ) -> Result<Vec<Association>, TrackerError> {
        if let Some(previous) = self.last_frame {
            if frame_index <= previous {
                return Err(TrackerError::OutOfOrderFrame {
                    frame: frame_index,
                    previous,
                });
            }
        }
        self.last_frame = Some(frame_index);

        // Some(track position in `active`) per detection
        let mut det_match: Vec<Option<usize>> = alloc::vec![None; detections.len()];
        let mut track_taken = alloc::vec![false; self.active.len()];

        if self.config.use_hints {
            for (di, det) in detections.iter().enumerate() {
                let Some(hint) = det.track_hint else { continue };
                let Some(&tid) = self.hint_to_track.get(&hint) else {
                    continue;
                };
                if let Some(pos) = self.position(tid) {
                    if !track_taken[pos] {
                        track_taken[pos] = true;
                        det_match[di] = Some(pos);
                    }
                }
            }
        }

        // IoU pass over detections not resolved by hints. A hinted detection
        // never falls back to IoU; an unseen hint starts a new track.
        let iou_dets: Vec<usize> = (0..detections.len())
            .filter(|&di| {
                det_match[di].is_none()
                    && !(self.config.use_hints && detections[di].track_hint.is_some())
            })
            .collect();
        let iou_tracks: Vec<usize> = (0..self.active.len()).filter(|&ti| !track_taken[ti]).collect();
        let matrix: Vec<Vec<f64>> = iou_tracks
            .iter()
            .map(|&ti| {
                iou_dets
                    .iter()
                    .map(|&di| self.active[ti].last_bbox.iou(&detections[di].bbox))
                    .collect()
            })
            .collect();
        // iou_tracks is ascending in position, and positions are ascending in id,
        // so row order doubles as the track-id tie-break.
        for (r, c) in greedy_assign(&matrix, self.config.iou_min) {
            let (ti, di) = (iou_tracks[r], iou_dets[c]);
            track_taken[ti] = true;
            det_match[di] = Some(ti);
        }

        let mut out = Vec::with_capacity(detections.len());
        let mut fresh: Vec<Track> = Vec::new();
        for (di, det) in detections.iter().enumerate() {
            match det_match[di] {
                Some(pos) => {
                    let t = &mut self.active[pos];
                    t.last_bbox = det.bbox;
                    t.last_seen_frame = frame_index;
                    t.consecutive_misses = 0;
                    t.last_class = Some(det.class_id);
                    t.last_confidence = det.confidence;
                    out.push(Association {
                        detection: *det,
                        track_id: t.id,
                        is_new: false,
                    });
                }
                None => {
                    let id = self.next_id;
                    self.next_id += 1;
                    if self.config.use_hints {
                        if let Some(hint) = det.track_hint {
                            self.hint_to_track.insert(hint, id);
                        }
                    }
                    fresh.push(Track {
                        id,
                        last_bbox: det.bbox,
                        last_seen_frame: frame_index,
                        consecutive_misses: 0,
                        created_frame: frame_index,
                        last_refined_frame: None,
                        refined_count: 0,
                        last_class: Some(det.class_id),
                        last_confidence: det.confidence,
                    });
                    out.push(Association {
                        detection: *det,
                        track_id: id,
                        is_new: true,
                    });
                }
            }
        }

        let max_misses = self.config.max_misses;
        let mut idx = 0;
        self.active.retain_mut(|t| {
            let taken = track_taken[idx];
            idx += 1;
            if !taken {
                t.consecutive_misses += 1;
            }
            t.consecutive_misses <= max_misses
        });
        // New ids exceed every existing id, so appending keeps the order.
        self.active.extend(fresh);
        Ok(out)
    }

    pub fn mark_refined(&mut self, track_id: u64, frame_index: u64) -> Result<(), TrackerError> {
        let pos = self
            .position(track_id)
            .ok_or(TrackerError::UnknownTrack(track_id))?;
        let t = &mut self.active[pos];
        t.last_refined_frame = Some(frame_index);
        t.refined_count += 1;
        Ok(())
    }
}

/// Greedy highest-IoU-first matching over a `rows × cols` IoU matrix.
///
/// Pairs below `iou_min`, and pairs with no overlap at all, are never
/// matched. Equal IoUs are resolved by the lower row, then the lower column.
/// Returns `(row, col)` pairs in the order they were picked.
pub fn greedy_assign(iou: &[Vec<f64>], iou_min: f64) -> Vec<(usize, usize)> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (r, row) in iou.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            if v >= iou_min && v > 0.0 {
                pairs.push((v, r, c));
            }
        }
    }
    pairs.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let rows = iou.len();
    let cols = iou.first().map_or(0, |r| r.len());
    let mut row_used = alloc::vec![false; rows];
    let mut col_used = alloc::vec![false; cols];
    let mut out = Vec::new();
    for (_, r, c) in pairs {
        if !row_used[r] && !col_used[c] {
            row_used[r] = true;
            col_used[c] = true;
            out.push((r, c));
        }
    }
    out
}
