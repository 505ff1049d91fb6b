//! Line-delimited JSON run logs.
//!
//! The first line is the header (`"record": "header"`), followed by one
//! `"transmission"` line per ROI in time order and one `"class"` line per
//! tracked detection on each processed frame.

use roilink_core::{ClassSample, RunConfig, RunLog, TransmissionRecord};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const RUNLOG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub schema_version: u32,
    pub label: String,
    /// Effective configuration document of the run.
    pub config_echo: String,
    pub run_config: RunConfig,
    pub frame_count: u64,
    pub processed_frames: Vec<u64>,
    pub raw_candidate_count: u64,
    pub detection_confidence_sum: f64,
    pub rejected_budget: u64,
    pub rejected_threshold: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Line {
    Header(Box<RunHeader>),
    Transmission(TransmissionRecord),
    Class(ClassSample),
}

#[derive(Debug, Error)]
pub enum RunLogError {
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("run log has no header line")]
    MissingHeader,
    #[error("line {0}: unexpected second header")]
    DuplicateHeader(usize),
    #[error("unsupported run log schema_version {0}")]
    SchemaVersion(u32),
}

pub fn write_runlog(label: &str, config_echo: &str, log: &RunLog) -> String {
    let header = RunHeader {
        schema_version: RUNLOG_SCHEMA_VERSION,
        label: label.to_string(),
        config_echo: config_echo.to_string(),
        run_config: log.config,
        frame_count: log.frame_count,
        processed_frames: log.processed_frames.clone(),
        raw_candidate_count: log.raw_candidate_count,
        detection_confidence_sum: log.detection_confidence_sum,
        rejected_budget: log.rejected_budget,
        rejected_threshold: log.rejected_threshold,
    };
    let mut out = String::new();
    let mut push = |line: &Line| {
        out.push_str(&serde_json::to_string(line).expect("run log serializes"));
        out.push('\n');
    };
    push(&Line::Header(Box::new(header)));
    for t in &log.transmissions {
        push(&Line::Transmission(*t));
    }
    for c in &log.class_timeline {
        push(&Line::Class(*c));
    }
    out
}

pub fn read_runlog(text: &str) -> Result<(RunHeader, RunLog), RunLogError> {
    let mut header: Option<RunHeader> = None;
    let mut transmissions = Vec::new();
    let mut class_timeline = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let line: Line = serde_json::from_str(raw).map_err(|source| RunLogError::Json { line: i + 1, source })?;
        match line {
            Line::Header(h) => {
                if header.is_some() {
                    return Err(RunLogError::DuplicateHeader(i + 1));
                }
                if h.schema_version != RUNLOG_SCHEMA_VERSION {
                    return Err(RunLogError::SchemaVersion(h.schema_version));
                }
                header = Some(*h);
            }
            Line::Transmission(t) => transmissions.push(t),
            Line::Class(c) => class_timeline.push(c),
        }
    }
    let h = header.ok_or(RunLogError::MissingHeader)?;
    let log = RunLog {
        config: h.run_config,
        frame_count: h.frame_count,
        processed_frames: h.processed_frames.clone(),
        raw_candidate_count: h.raw_candidate_count,
        detection_confidence_sum: h.detection_confidence_sum,
        rejected_budget: h.rejected_budget,
        rejected_threshold: h.rejected_threshold,
        transmissions,
        class_timeline,
    };
    Ok((h, log))
}
