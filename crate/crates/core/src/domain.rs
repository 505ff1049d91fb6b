//! Value types shared across the pipeline: boxes, detections, the frame
//! clock, budget and evaluation settings, and the detection stream itself.

use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::error::DomainError;

/// Axis-aligned box in continuous pixel coordinates (left, top, width, height).
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self, DomainError> {
        if !(x.is_finite() && y.is_finite()) {
            return Err(DomainError::NonFiniteCoordinate);
        }
        // `!(w > 0.0)` also rejects NaN.
        if !(w > 0.0) || !w.is_finite() {
            return Err(DomainError::NonPositiveWidth(w));
        }
        if !(h > 0.0) || !h.is_finite() {
            return Err(DomainError::NonPositiveHeight(h));
        }
        Ok(Self { x, y, w, h })
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    /// Grows the box by `ratio` of its own size on every side, keeping the center.
    pub fn padded(&self, ratio: f64) -> BBox {
        let dx = self.w * ratio;
        let dy = self.h * ratio;
        BBox {
            x: self.x - dx,
            y: self.y - dy,
            w: self.w + 2.0 * dx,
            h: self.h + 2.0 * dy,
        }
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let iw = self.right().min(other.right()) - self.x.max(other.x);
        let ih = self.bottom().min(other.bottom()) - self.y.max(other.y);
        if iw <= 0.0 || ih <= 0.0 {
            0.0
        } else {
            iw * ih
        }
    }

    /// Intersection over union. Symmetric, `1.0` for identical boxes, `0.0`
    /// for disjoint or edge-touching boxes.
    pub fn iou(&self, other: &BBox) -> f64 {
        let inter = self.intersection_area(other);
        if inter == 0.0 {
            return 0.0;
        }
        let union = self.area() + other.area() - inter;
        (inter / union).clamp(0.0, 1.0)
    }
}

/// Free-function form of [`BBox::iou`].
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    a.iou(b)
}

/// One observed box in one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Detection {
    pub frame_index: u64,
    pub bbox: BBox,
    pub confidence: f64,
    pub class_id: i64,
    /// Ground-truth identity when the detection came from annotations.
    pub track_hint: Option<i64>,
}

impl Detection {
    pub fn new(
        frame_index: u64,
        bbox: BBox,
        confidence: f64,
        class_id: i64,
        track_hint: Option<i64>,
    ) -> Result<Self, DomainError> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(DomainError::ConfidenceOutOfRange(confidence));
        }
        Ok(Self {
            frame_index,
            bbox,
            confidence,
            class_id,
            track_hint,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct FrameClock {
    pub fps: f64,
    /// Decision cadence: every `frame_stride`-th source frame is processed.
    pub frame_stride: u64,
}

impl FrameClock {
    pub fn new(fps: f64, frame_stride: u64) -> Result<Self, DomainError> {
        if !(fps > 0.0) || !fps.is_finite() {
            return Err(DomainError::InvalidFps(fps));
        }
        if frame_stride == 0 {
            return Err(DomainError::ZeroStride);
        }
        Ok(Self { fps, frame_stride })
    }

    pub fn timestamp(&self, frame_index: u64) -> f64 {
        frame_index as f64 / self.fps
    }

    pub fn is_processed(&self, frame_index: u64) -> bool {
        frame_index.is_multiple_of(self.frame_stride)
    }

    /// Processed frame indices in `0..frame_count`.
    pub fn processed_frames(&self, frame_count: u64) -> impl Iterator<Item = u64> {
        (0..frame_count).step_by(self.frame_stride as usize)
    }
}

/// Free-function form of [`FrameClock::timestamp`].
pub fn timestamp(clock: &FrameClock, frame_index: u64) -> f64 {
    clock.timestamp(frame_index)
}

/// Total, base-video and ROI rates in bits per second, plus the rolling
/// window over which the ROI rate is enforced.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct BudgetConfig {
    pub b_total: f64,
    pub b_video: f64,
    pub b_roi: f64,
    pub window_s: f64,
}

impl BudgetConfig {
    pub const DEFAULT_WINDOW_S: f64 = 2.0;

    pub fn new(b_total: f64, b_video: f64, b_roi: f64, window_s: f64) -> Result<Self, DomainError> {
        let cfg = Self {
            b_total,
            b_video,
            b_roi,
            window_s,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        for (name, v) in [
            ("b_total", self.b_total),
            ("b_video", self.b_video),
            ("b_roi", self.b_roi),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(DomainError::NegativeRate { name, value: v });
            }
        }
        if !(self.window_s > 0.0) || !self.window_s.is_finite() {
            return Err(DomainError::InvalidWindow(self.window_s));
        }
        if self.b_video + self.b_roi > self.b_total {
            return Err(DomainError::BudgetExceedsTotal {
                b_video: self.b_video,
                b_roi: self.b_roi,
                b_total: self.b_total,
            });
        }
        Ok(())
    }

    /// Low regime, video only: 0.80 / 0.00 Mbps.
    pub fn low_video_only() -> Self {
        Self::table_row(0.80e6, 0.0)
    }

    /// Low regime, hybrid: 0.65 / 0.15 Mbps.
    pub fn low_hybrid() -> Self {
        Self::table_row(0.65e6, 0.15e6)
    }

    /// Moderate regime, video only: 1.40 / 0.00 Mbps.
    pub fn moderate_video_only() -> Self {
        Self::table_row(1.40e6, 0.0)
    }

    /// Moderate regime, hybrid: 1.20 / 0.20 Mbps.
    pub fn moderate_hybrid() -> Self {
        Self::table_row(1.20e6, 0.20e6)
    }

    fn table_row(b_video: f64, b_roi: f64) -> Self {
        Self {
            b_total: b_video + b_roi,
            b_video,
            b_roi,
            window_s: Self::DEFAULT_WINDOW_S,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct EvalConfig {
    /// Weight of the classification gain in the combined utility line.
    /// The line is only reported when this is set.
    pub lambda_cls: Option<f64>,
    /// Overrides the clock-derived run duration used to normalize rates.
    pub duration_s: Option<f64>,
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), DomainError> {
        if let Some(l) = self.lambda_cls {
            if !(l >= 0.0) || !l.is_finite() {
                return Err(DomainError::NegativeLambda(l));
            }
        }
        if let Some(d) = self.duration_s {
            if !(d > 0.0) || !d.is_finite() {
                return Err(DomainError::InvalidDuration(d));
            }
        }
        Ok(())
    }
}

/// All detections of one source frame.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Frame {
    pub index: u64,
    pub detections: Vec<Detection>,
}

/// Frames in strictly increasing order. Frames without detections may be
/// omitted; `frame_count` records the length of the source clip.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct DetectionStream {
    pub clock: FrameClock,
    pub frame_count: u64,
    frames: Vec<Frame>,
}

impl DetectionStream {
    pub fn new(clock: FrameClock, frame_count: u64, frames: Vec<Frame>) -> Result<Self, DomainError> {
        let mut prev: Option<u64> = None;
        for f in &frames {
            if prev.is_some_and(|p| f.index <= p) {
                return Err(DomainError::FramesNotIncreasing(f.index));
            }
            if f.index >= frame_count {
                return Err(DomainError::FrameBeyondCount {
                    frame: f.index,
                    frame_count,
                });
            }
            if let Some(d) = f.detections.iter().find(|d| d.frame_index != f.index) {
                return Err(DomainError::FrameIndexMismatch {
                    frame: f.index,
                    detection_frame: d.frame_index,
                });
            }
            prev = Some(f.index);
        }
        Ok(Self {
            clock,
            frame_count,
            frames,
        })
    }

    /// Groups loose detections by frame, keeping input order within a frame.
    /// `frame_count` defaults to one past the last detection's frame.
    pub fn from_detections(
        clock: FrameClock,
        mut detections: Vec<Detection>,
        frame_count: Option<u64>,
    ) -> Result<Self, DomainError> {
        detections.sort_by_key(|d| d.frame_index);
        let mut frames: Vec<Frame> = Vec::new();
        for d in detections {
            match frames.last_mut() {
                Some(f) if f.index == d.frame_index => f.detections.push(d),
                _ => frames.push(Frame {
                    index: d.frame_index,
                    detections: alloc::vec![d],
                }),
            }
        }
        let count = frame_count.unwrap_or_else(|| frames.last().map_or(0, |f| f.index + 1));
        Self::new(clock, count, frames)
    }

    pub fn empty(clock: FrameClock, frame_count: u64) -> Self {
        Self {
            clock,
            frame_count,
            frames: Vec::new(),
        }
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn detections_at(&self, frame_index: u64) -> &[Detection] {
        self.frames
            .binary_search_by_key(&frame_index, |f| f.index)
            .map(|i| self.frames[i].detections.as_slice())
            .unwrap_or(&[])
    }

    pub fn detection_count(&self) -> usize {
        self.frames.iter().map(|f| f.detections.len()).sum()
    }

    pub fn detections(&self) -> impl Iterator<Item = &Detection> {
        self.frames.iter().flat_map(|f| f.detections.iter())
    }

    pub fn into_frames(self) -> Vec<Frame> {
        self.frames
    }
}
