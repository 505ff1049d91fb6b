//! Precomputed classifier outputs for transmitted ROIs, standing in for live
//! model inference on decoded video crops and decoded still crops.

use alloc::collections::BTreeMap;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::error::DomainError;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct SemanticRecord {
    pub frame_index: u64,
    pub track_id: i64,
    pub video_conf: f64,
    pub still_conf: f64,
    pub video_label: i64,
    pub still_label: i64,
    pub video_entropy: f64,
    pub still_entropy: f64,
    /// Measured still size; replaces the cost model for this ROI when present.
    pub payload_bytes: Option<u64>,
}

impl SemanticRecord {
    pub fn validate(&self) -> Result<(), DomainError> {
        for c in [self.video_conf, self.still_conf] {
            if !(0.0..=1.0).contains(&c) {
                return Err(DomainError::ConfidenceOutOfRange(c));
            }
        }
        for e in [self.video_entropy, self.still_entropy] {
            if !(e >= 0.0) || !e.is_finite() {
                return Err(DomainError::NegativeEntropy(e));
            }
        }
        if self.payload_bytes == Some(0) {
            return Err(DomainError::ZeroPayload);
        }
        Ok(())
    }

    pub fn conf_gain(&self) -> f64 {
        self.still_conf - self.video_conf
    }

    pub fn entropy_gain(&self) -> f64 {
        self.video_entropy - self.still_entropy
    }

    pub fn prediction_changed(&self) -> bool {
        self.still_label != self.video_label
    }
}

/// Records keyed by `(frame_index, track_id)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SemanticSidecar {
    records: BTreeMap<(u64, i64), SemanticRecord>,
}

impl SemanticSidecar {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a record, refusing a second record for the same key.
    pub fn insert(&mut self, record: SemanticRecord) -> Result<(), DomainError> {
        record.validate()?;
        let key = (record.frame_index, record.track_id);
        if self.records.contains_key(&key) {
            return Err(DomainError::DuplicateKey {
                frame: key.0,
                track: key.1,
            });
        }
        self.records.insert(key, record);
        Ok(())
    }

    pub fn get(&self, frame_index: u64, track_id: i64) -> Option<&SemanticRecord> {
        self.records.get(&(frame_index, track_id))
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &SemanticRecord> {
        self.records.values()
    }
}
