//! ROI cost estimation and the rolling-window ROI bit ledger.

use alloc::collections::VecDeque;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::domain::BBox;
use crate::error::BudgetError;

/// Linear still-size model: a fixed header plus a per-pixel cost over the
/// padded (or resized) crop.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct CostModel {
    pub header_bytes: u32,
    pub bits_per_pixel: f64,
    /// When set, the crop is resized to a square of this edge before encoding.
    pub resize_edge: Option<f64>,
    /// Padding added on every side, as a fraction of the box size.
    pub pad_ratio: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            header_bytes: 400,
            bits_per_pixel: 0.55,
            resize_edge: None,
            pad_ratio: 0.15,
        }
    }
}

impl CostModel {
    pub fn validate(&self) -> Result<(), BudgetError> {
        if !(self.bits_per_pixel > 0.0) || !self.bits_per_pixel.is_finite() {
            return Err(BudgetError::InvalidParam("bits_per_pixel must be positive"));
        }
        if !(self.pad_ratio >= 0.0) || !self.pad_ratio.is_finite() {
            return Err(BudgetError::InvalidParam("pad_ratio must be non-negative"));
        }
        if let Some(e) = self.resize_edge {
            if !(e > 0.0) || !e.is_finite() {
                return Err(BudgetError::InvalidParam("resize_edge must be positive"));
            }
        }
        Ok(())
    }

    /// Estimated transmission cost of one ROI still, in bits. Always positive
    /// for a valid model.
    pub fn estimate_cost(&self, bbox: &BBox) -> f64 {
        let pixels = match self.resize_edge {
            Some(edge) => edge * edge,
            None => bbox.padded(self.pad_ratio).area(),
        };
        f64::from(self.header_bytes) * 8.0 + self.bits_per_pixel * pixels
    }
}

/// Free-function form of [`CostModel::estimate_cost`].
pub fn estimate_cost(bbox: &BBox, model: &CostModel) -> f64 {
    model.estimate_cost(bbox)
}

/// Trailing-window account of committed ROI bits.
///
/// At any time `t` the bits committed in `(t - window_s, t]` never exceed
/// `b_roi * window_s`, provided every commit goes through [`commit`](Self::commit).
#[derive(Debug, Clone, PartialEq)]
pub struct BudgetLedger {
    b_roi: f64,
    window_s: f64,
    entries: VecDeque<(f64, f64)>,
    latest_s: Option<f64>,
    total_bits: f64,
    committed: u64,
}

impl BudgetLedger {
    pub fn new(b_roi: f64, window_s: f64) -> Result<Self, BudgetError> {
        if !(b_roi >= 0.0) || !b_roi.is_finite() {
            return Err(BudgetError::InvalidParam("b_roi must be non-negative"));
        }
        if !(window_s > 0.0) || !window_s.is_finite() {
            return Err(BudgetError::InvalidParam("window_s must be positive"));
        }
        Ok(Self {
            b_roi,
            window_s,
            entries: VecDeque::new(),
            latest_s: None,
            total_bits: 0.0,
            committed: 0,
        })
    }

    pub fn b_roi(&self) -> f64 {
        self.b_roi
    }

    pub fn window_s(&self) -> f64 {
        self.window_s
    }

    /// Bits allowed inside one window.
    pub fn cap_bits(&self) -> f64 {
        self.b_roi * self.window_s
    }

    /// Bits committed in `(now_s - window_s, now_s]`.
    pub fn window_sum(&self, now_s: f64) -> f64 {
        let start = now_s - self.window_s;
        self.entries
            .iter()
            .filter(|&&(t, _)| t > start && t <= now_s)
            .map(|&(_, b)| b)
            .fold(0.0, |acc, b| acc + b)
    }

    /// Whether `bits` more at `now_s` stays within the cap. The cap itself
    /// is admissible.
    pub fn admits(&self, now_s: f64, bits: f64) -> Result<bool, BudgetError> {
        if !(bits > 0.0) || !bits.is_finite() {
            return Err(BudgetError::InvalidParam("bits must be positive"));
        }
        self.check_time(now_s)?;
        Ok(self.window_sum(now_s) + bits <= self.cap_bits())
    }

    pub fn commit(&mut self, now_s: f64, bits: f64) -> Result<(), BudgetError> {
        if !self.admits(now_s, bits)? {
            return Err(BudgetError::BudgetViolation { now_s, bits });
        }
        self.entries.push_back((now_s, bits));
        self.latest_s = Some(now_s);
        self.total_bits += bits;
        self.committed += 1;
        self.prune(now_s);
        Ok(())
    }

    /// Drops entries that can no longer fall inside any window at or after `now_s`.
    pub fn prune(&mut self, now_s: f64) {
        let start = now_s - self.window_s;
        while self.entries.front().is_some_and(|&(t, _)| t <= start) {
            self.entries.pop_front();
        }
    }

    /// Sum of every committed entry, pruned or not.
    pub fn total_bits(&self) -> f64 {
        self.total_bits
    }

    pub fn committed_count(&self) -> u64 {
        self.committed
    }

    /// Entries still held (not yet pruned), oldest first.
    pub fn live_entries(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.entries.iter().copied()
    }

    fn check_time(&self, now_s: f64) -> Result<(), BudgetError> {
        if !now_s.is_finite() {
            return Err(BudgetError::InvalidParam("time must be finite"));
        }
        match self.latest_s {
            Some(latest_s) if now_s < latest_s => Err(BudgetError::TimeWentBackwards { now_s, latest_s }),
            _ => Ok(()),
        }
    }
}
