//! Detection stream and semantic sidecar readers, the generic CSV writer and
//! the seeded synthetic stream generator.
//!
//! All readers share the same line rules: UTF-8 text, comma-separated,
//! LF or CRLF line endings, blank lines and lines starting with `#` ignored,
//! and an optional header line whose first field is `frame`. Frame indices
//! are stored 0-based whatever the file convention.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use roilink_core::{BBox, Detection, DetectionStream, DomainError, FrameClock, SemanticRecord, SemanticSidecar};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}: {reason}")]
pub struct ParseError {
    pub line: usize,
    pub reason: String,
}

impl ParseError {
    fn new(line: usize, reason: impl Into<String>) -> Self {
        Self {
            line,
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SidecarError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("line {line}: duplicate key (frame {frame}, track {track})")]
    DuplicateKey { line: usize, frame: u64, track: i64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IngestError {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

/// Annotation layouts understood by [`parse_detections`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFormat {
    Generic,
    Uavdt,
    Visdrone,
}

impl InputFormat {
    pub fn column_map(self) -> ColumnMap {
        match self {
            InputFormat::Generic => ColumnMap::GENERIC,
            InputFormat::Uavdt => ColumnMap::UAVDT,
            InputFormat::Visdrone => ColumnMap::VISDRONE,
        }
    }
}

impl std::str::FromStr for InputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "generic" | "csv" => Ok(InputFormat::Generic),
            "uavdt" => Ok(InputFormat::Uavdt),
            "visdrone" | "visdrone-mot" => Ok(InputFormat::Visdrone),
            other => Err(format!("unknown input format `{other}` (generic, uavdt, visdrone)")),
        }
    }
}

impl fmt::Display for InputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InputFormat::Generic => "generic",
            InputFormat::Uavdt => "uavdt",
            InputFormat::Visdrone => "visdrone",
        })
    }
}

/// Where each detection field sits in a line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ColumnMap {
    /// Exact number of fields per line.
    pub columns: usize,
    pub frame: usize,
    pub track: usize,
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
    /// `None` means ground truth: confidence is 1.0.
    pub confidence: Option<usize>,
    pub class: usize,
    /// Index of the first frame in the file.
    pub frame_base: u64,
    /// Clamp confidence into [0, 1] instead of rejecting the line.
    pub clamp_confidence: bool,
}

impl ColumnMap {
    /// `frame,track_hint,x,y,w,h,conf,class`, 0-based frames, `-1` = no hint.
    pub const GENERIC: ColumnMap = ColumnMap {
        columns: 8,
        frame: 0,
        track: 1,
        x: 2,
        y: 3,
        w: 4,
        h: 5,
        confidence: Some(6),
        class: 7,
        frame_base: 0,
        clamp_confidence: false,
    };

    /// `frame,target_id,x,y,w,h,out_of_view,occlusion,category`, 1-based frames.
    pub const UAVDT: ColumnMap = ColumnMap {
        columns: 9,
        frame: 0,
        track: 1,
        x: 2,
        y: 3,
        w: 4,
        h: 5,
        confidence: None,
        class: 8,
        frame_base: 1,
        clamp_confidence: false,
    };

    /// `frame,target_id,x,y,w,h,score,category,truncation,occlusion`, 1-based frames.
    pub const VISDRONE: ColumnMap = ColumnMap {
        columns: 10,
        frame: 0,
        track: 1,
        x: 2,
        y: 3,
        w: 4,
        h: 5,
        confidence: Some(6),
        class: 7,
        frame_base: 1,
        clamp_confidence: true,
    };

    /// Applies `name=value` pairs separated by commas, e.g.
    /// `columns=11,class=9,frame_base=0`. `conf=none` selects ground-truth mode.
    pub fn with_overrides(mut self, spec: &str) -> Result<Self, String> {
        for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| format!("column override `{part}` is not name=value"))?;
            let key = key.trim();
            let value = value.trim();
            let index = || {
                value
                    .parse::<usize>()
                    .map_err(|_| format!("column override `{key}` needs an index, got `{value}`"))
            };
            match key {
                "columns" => self.columns = index()?,
                "frame" => self.frame = index()?,
                "track" => self.track = index()?,
                "x" => self.x = index()?,
                "y" => self.y = index()?,
                "w" => self.w = index()?,
                "h" => self.h = index()?,
                "class" => self.class = index()?,
                "conf" if value.eq_ignore_ascii_case("none") => self.confidence = None,
                "conf" => self.confidence = Some(index()?),
                "frame_base" => {
                    self.frame_base = value
                        .parse()
                        .map_err(|_| format!("frame_base must be 0 or 1, got `{value}`"))?
                }
                "clamp_conf" => {
                    self.clamp_confidence = value
                        .parse()
                        .map_err(|_| format!("clamp_conf must be true or false, got `{value}`"))?
                }
                other => return Err(format!("unknown column override `{other}`")),
            }
        }
        let max_index = [self.frame, self.track, self.x, self.y, self.w, self.h, self.class]
            .into_iter()
            .chain(self.confidence)
            .max()
            .unwrap_or(0);
        if max_index >= self.columns {
            return Err(format!(
                "column index {max_index} does not fit in {} columns",
                self.columns
            ));
        }
        Ok(self)
    }
}

/// Non-empty, non-comment lines with their 1-based line numbers.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    let mut first = true;
    text.lines().enumerate().filter_map(move |(i, raw)| {
        let line = raw.trim_end_matches('\r').trim();
        if line.is_empty() || line.starts_with('#') {
            return None;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let is_header = first && fields[0].eq_ignore_ascii_case("frame");
        first = false;
        (!is_header).then_some((i + 1, fields))
    })
}

fn field<T: std::str::FromStr>(fields: &[&str], idx: usize, name: &str, line: usize) -> Result<T, ParseError> {
    let raw = fields[idx];
    raw.parse()
        .map_err(|_| ParseError::new(line, format!("field `{name}` is not a number: `{raw}`")))
}

fn parse_detection_line(fields: &[&str], map: &ColumnMap, line: usize) -> Result<Detection, ParseError> {
    if fields.len() != map.columns {
        return Err(ParseError::new(
            line,
            format!("expected {} columns, found {}", map.columns, fields.len()),
        ));
    }
    let raw_frame: i64 = field(fields, map.frame, "frame", line)?;
    let frame = u64::try_from(raw_frame)
        .ok()
        .and_then(|f| f.checked_sub(map.frame_base))
        .ok_or_else(|| ParseError::new(line, format!("frame {raw_frame} precedes first frame {}", map.frame_base)))?;
    let track: i64 = field(fields, map.track, "track", line)?;
    let x: f64 = field(fields, map.x, "x", line)?;
    let y: f64 = field(fields, map.y, "y", line)?;
    let w: f64 = field(fields, map.w, "w", line)?;
    let h: f64 = field(fields, map.h, "h", line)?;
    let class: i64 = field(fields, map.class, "class", line)?;
    let mut conf: f64 = match map.confidence {
        Some(idx) => field(fields, idx, "confidence", line)?,
        None => 1.0,
    };
    if map.clamp_confidence && !conf.is_nan() {
        conf = conf.clamp(0.0, 1.0);
    }
    let bbox = BBox::new(x, y, w, h).map_err(|e| ParseError::new(line, e.to_string()))?;
    let hint = (track >= 0).then_some(track);
    Detection::new(frame, bbox, conf, class, hint).map_err(|e| ParseError::new(line, e.to_string()))
}

/// Parses every line, collecting all malformed ones instead of stopping.
pub fn parse_detections_lenient(text: &str, map: &ColumnMap) -> (Vec<Detection>, Vec<ParseError>) {
    let mut dets = Vec::new();
    let mut errors = Vec::new();
    for (line, fields) in data_lines(text) {
        match parse_detection_line(&fields, map, line) {
            Ok(d) => dets.push(d),
            Err(e) => errors.push(e),
        }
    }
    (dets, errors)
}

/// Parses a detection file; the first malformed line is an error.
pub fn parse_detections(text: &str, map: &ColumnMap, clock: FrameClock) -> Result<DetectionStream, ParseError> {
    let mut dets = Vec::new();
    for (line, fields) in data_lines(text) {
        dets.push(parse_detection_line(&fields, map, line)?);
    }
    DetectionStream::from_detections(clock, dets, None).map_err(|e| ParseError::new(0, e.to_string()))
}

pub fn parse_generic_csv(text: &str, clock: FrameClock) -> Result<DetectionStream, ParseError> {
    parse_detections(text, &ColumnMap::GENERIC, clock)
}

/// Ground truth: confidence is fixed at 1.0 and `class_id` is the category.
pub fn parse_uavdt_gt(text: &str, clock: FrameClock) -> Result<DetectionStream, ParseError> {
    parse_detections(text, &ColumnMap::UAVDT, clock)
}

/// The score column becomes the confidence, clamped to [0, 1].
pub fn parse_visdrone_mot(text: &str, clock: FrameClock) -> Result<DetectionStream, ParseError> {
    parse_detections(text, &ColumnMap::VISDRONE, clock)
}

fn parse_sidecar_line(fields: &[&str], line: usize) -> Result<SemanticRecord, ParseError> {
    if fields.len() != 8 && fields.len() != 9 {
        return Err(ParseError::new(line, format!("expected 8 or 9 columns, found {}", fields.len())));
    }
    let payload_bytes = match fields.get(8) {
        Some(raw) if !raw.is_empty() => Some(field::<u64>(fields, 8, "payload_bytes", line)?),
        _ => None,
    };
    let record = SemanticRecord {
        frame_index: field(fields, 0, "frame", line)?,
        track_id: field(fields, 1, "track", line)?,
        video_conf: field(fields, 2, "video_conf", line)?,
        still_conf: field(fields, 3, "still_conf", line)?,
        video_label: field(fields, 4, "video_label", line)?,
        still_label: field(fields, 5, "still_label", line)?,
        video_entropy: field(fields, 6, "video_entropy", line)?,
        still_entropy: field(fields, 7, "still_entropy", line)?,
        payload_bytes,
    };
    record.validate().map_err(|e| ParseError::new(line, e.to_string()))?;
    Ok(record)
}

/// `frame,track,video_conf,still_conf,video_label,still_label,video_entropy,still_entropy[,payload_bytes]`
///
/// `frame` is the 0-based processed frame index; `track` is the ground-truth
/// id for annotation inputs, else the simulator's track id.
pub fn parse_sidecar_csv(text: &str) -> Result<SemanticSidecar, SidecarError> {
    let mut sidecar = SemanticSidecar::new();
    for (line, fields) in data_lines(text) {
        let record = parse_sidecar_line(&fields, line)?;
        sidecar.insert(record).map_err(|e| match e {
            DomainError::DuplicateKey { frame, track } => SidecarError::DuplicateKey { line, frame, track },
            other => SidecarError::Parse(ParseError::new(line, other.to_string())),
        })?;
    }
    Ok(sidecar)
}

/// Like [`parse_sidecar_csv`] but keeps going, returning every bad line.
pub fn parse_sidecar_lenient(text: &str) -> (SemanticSidecar, Vec<SidecarError>) {
    let mut sidecar = SemanticSidecar::new();
    let mut errors = Vec::new();
    for (line, fields) in data_lines(text) {
        match parse_sidecar_line(&fields, line) {
            Ok(record) => {
                if let Err(e) = sidecar.insert(record) {
                    errors.push(match e {
                        DomainError::DuplicateKey { frame, track } => SidecarError::DuplicateKey { line, frame, track },
                        other => SidecarError::Parse(ParseError::new(line, other.to_string())),
                    });
                }
            }
            Err(e) => errors.push(e.into()),
        }
    }
    (sidecar, errors)
}

/// Renders a stream in the generic layout. Parsing the result yields an
/// equal stream (up to `frame_count`, which the reader infers).
pub fn write_generic_csv(stream: &DetectionStream) -> String {
    let mut out = String::from("# frame,track_hint,x,y,w,h,conf,class\n");
    for d in stream.detections() {
        let b = d.bbox;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            d.frame_index,
            d.track_hint.unwrap_or(-1),
            b.x,
            b.y,
            b.w,
            b.h,
            d.confidence,
            d.class_id
        ));
    }
    out
}

/// Frame size used by the synthetic generator.
pub const SYNTH_FRAME_W: f64 = 1280.0;
pub const SYNTH_FRAME_H: f64 = 720.0;
const SYNTH_CLASSES: i64 = 4;
const SYNTH_DETECT_PROB: f64 = 0.9;

/// Seeded synthetic stream: objects move on straight lines (bouncing off
/// the frame border), live for a random span, are missed now and then, and
/// carry a per-object base confidence with per-frame jitter.
///
/// `mean_objects` is the expected number of objects alive on a frame.
pub fn gen_synthetic(
    seed: u64,
    n_frames: u64,
    mean_objects: f64,
    clock: FrameClock,
) -> Result<DetectionStream, IngestError> {
    if n_frames == 0 {
        return Err(IngestError::InvalidParam("n_frames must be positive".into()));
    }
    if !(mean_objects >= 0.0) || !mean_objects.is_finite() {
        return Err(IngestError::InvalidParam("mean_objects must be a non-negative number".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // spans average 2/3 of the clip
    let n_objects = (mean_objects * 1.5).round() as u64;
    let mut dets = Vec::new();
    for id in 0..n_objects {
        let min_span = (n_frames / 3).max(1);
        let span = rng.gen_range(min_span..=n_frames);
        let start = rng.gen_range(0..=n_frames - span);
        let w = rng.gen_range(8.0..80.0);
        let h = rng.gen_range(8.0..60.0);
        let mut x: f64 = rng.gen_range(0.0..SYNTH_FRAME_W - w);
        let mut y: f64 = rng.gen_range(0.0..SYNTH_FRAME_H - h);
        let mut vx: f64 = rng.gen_range(-3.0..3.0);
        let mut vy: f64 = rng.gen_range(-2.0..2.0);
        let base_conf: f64 = rng.gen_range(0.15..0.95);
        let class = rng.gen_range(0..SYNTH_CLASSES);
        for frame in start..start + span {
            let seen = rng.gen_bool(SYNTH_DETECT_PROB);
            let jitter: f64 = rng.gen_range(-0.1..0.1);
            if seen {
                let bbox = BBox::new(x, y, w, h)?;
                let conf = (base_conf + jitter).clamp(0.0, 1.0);
                dets.push(Detection::new(frame, bbox, conf, class, Some(id as i64))?);
            }
            x += vx;
            y += vy;
            if x < 0.0 || x + w > SYNTH_FRAME_W {
                vx = -vx;
                x = x.clamp(0.0, SYNTH_FRAME_W - w);
            }
            if y < 0.0 || y + h > SYNTH_FRAME_H {
                vy = -vy;
                y = y.clamp(0.0, SYNTH_FRAME_H - h);
            }
        }
    }
    Ok(DetectionStream::from_detections(clock, dets, Some(n_frames))?)
}

/// Adds seeded uniform noise in `[-amplitude, amplitude]` to every
/// confidence, clamped to [0, 1]. Lets confidence-driven policies run on
/// ground-truth files.
pub fn jitter_confidence(stream: &DetectionStream, seed: u64, amplitude: f64) -> Result<DetectionStream, IngestError> {
    if !(amplitude >= 0.0) || !amplitude.is_finite() {
        return Err(IngestError::InvalidParam("jitter amplitude must be non-negative".into()));
    }
    if amplitude == 0.0 {
        return Ok(stream.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dets: Vec<Detection> = stream
        .detections()
        .map(|d| Detection {
            confidence: (d.confidence + rng.gen_range(-amplitude..=amplitude)).clamp(0.0, 1.0),
            ..*d
        })
        .collect();
    Ok(DetectionStream::from_detections(stream.clock, dets, Some(stream.frame_count))?)
}
