//! CSV, JSON and markdown rendering of metrics reports.
//!
//! Column order is frozen. The first eleven CSV columns follow the pilot
//! results table (policy, ROI count, rate, ROI bitrate, share, bytes,
//! video/still confidence, confidence gain, positive rate, entropy gain);
//! the selection-sweep columns and extras follow.

use std::collections::BTreeSet;

use roilink_core::MetricsReport;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "md" | "markdown" => Ok(ReportFormat::Markdown),
            other => Err(format!("unknown report format `{other}` (csv, json, markdown)")),
        }
    }
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
            ReportFormat::Markdown => "md",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReportError {
    #[error("duplicate report label `{0}`")]
    DuplicateLabel(String),
}

pub const CSV_COLUMNS: &[&str] = &[
    "policy",
    "rois",
    "rate_hz",
    "roi_mbps",
    "share",
    "mean_bytes",
    "video_conf",
    "still_conf",
    "delta_conf",
    "pos_rate",
    "delta_entropy",
    "raw_candidates",
    "sel_ratio",
    "frame_cov",
    "processed_frames",
    "total_mbps",
    "pred_change_rate",
    "tracks_refined",
    "semantic_covered",
    "combined_utility_proxy",
];

const MD_PILOT_HEADER: &str =
    "| Policy | ROIs | Rate (Hz) | Br. (Mbps) | Share | Bytes | Vid. Conf. | Still Conf. | ΔConf. | Pos. Rate | ΔEntropy |\n\
     |---|---|---|---|---|---|---|---|---|---|---|\n";
const MD_SWEEP_HEADER: &str = "| Policy | Sel. ROIs | Sel. Ratio | Frame Cov. |\n|---|---|---|---|\n";

fn fixed(v: f64, digits: usize) -> String {
    // adding +0.0 turns -0.0 into 0.0
    let v = v + 0.0;
    format!("{v:.digits$}")
}

fn signed(v: f64, digits: usize) -> String {
    let s = format!("{v:+.digits$}");
    // -0.000 reads as a loss; print zero unsigned
    if s.trim_start_matches(['+', '-']).chars().all(|c| c == '0' || c == '.') {
        fixed(0.0, digits)
    } else {
        s
    }
}

fn opt(v: Option<f64>, f: impl Fn(f64) -> String, absent: &str) -> String {
    v.map(f).unwrap_or_else(|| absent.to_string())
}

/// Formatted cells in [`CSV_COLUMNS`] order, minus the label.
fn cells(r: &MetricsReport, absent: &str) -> Vec<String> {
    vec![
        r.selected_rois.to_string(),
        fixed(r.roi_rate_hz, 3),
        fixed(r.roi_bitrate_bps / 1e6, 4),
        fixed(r.bitrate_share, 4),
        fixed(r.mean_payload_bytes, 0),
        opt(r.mean_video_conf, |v| fixed(v, 3), absent),
        opt(r.mean_still_conf, |v| fixed(v, 3), absent),
        opt(r.mean_conf_gain, |v| signed(v, 3), absent),
        opt(r.positive_gain_rate, |v| fixed(v, 3), absent),
        opt(r.mean_entropy_gain, |v| fixed(v, 3), absent),
        r.raw_candidates.to_string(),
        fixed(r.selection_ratio, 3),
        fixed(r.frame_coverage, 3),
        r.processed_frames.to_string(),
        fixed(r.total_bitrate_bps / 1e6, 4),
        opt(r.prediction_change_rate, |v| fixed(v, 3), absent),
        r.tracks_refined.to_string(),
        r.semantic_covered.to_string(),
        opt(r.combined_utility_proxy, |v| fixed(v, 4), absent),
    ]
}

/// `(column, value)` pairs for the eleven pilot-table columns after the
/// label, with `n/a` for metrics that need semantic data.
pub fn summary_lines(r: &MetricsReport) -> Vec<(&'static str, String)> {
    CSV_COLUMNS[1..11].iter().copied().zip(cells(r, "n/a")).collect()
}

#[derive(Serialize)]
struct JsonRow<'a> {
    label: &'a str,
    #[serde(flatten)]
    metrics: &'a MetricsReport,
}

pub fn emit_report(reports: &[(String, MetricsReport)], format: ReportFormat) -> Result<String, ReportError> {
    let mut seen = BTreeSet::new();
    for (label, _) in reports {
        if !seen.insert(label.as_str()) {
            return Err(ReportError::DuplicateLabel(label.clone()));
        }
    }
    Ok(match format {
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(CSV_COLUMNS).expect("in-memory write");
            for (label, r) in reports {
                let mut row = vec![label.clone()];
                row.extend(cells(r, ""));
                w.write_record(&row).expect("in-memory write");
            }
            String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is UTF-8")
        }
        ReportFormat::Json => {
            let rows: Vec<JsonRow> = reports
                .iter()
                .map(|(label, metrics)| JsonRow { label, metrics })
                .collect();
            let mut s = serde_json::to_string_pretty(&rows).expect("report serializes");
            s.push('\n');
            s
        }
        ReportFormat::Markdown => {
            let mut s = String::from(MD_PILOT_HEADER);
            for (label, r) in reports {
                let c = cells(r, "–");
                s.push_str(&format!("| {} | {} |\n", md_escape(label), c[..10].join(" | ")));
            }
            s.push('\n');
            s.push_str(MD_SWEEP_HEADER);
            for (label, r) in reports {
                s.push_str(&format!(
                    "| {} | {} | {:.3} | {:.3} |\n",
                    md_escape(label),
                    r.selected_rois,
                    r.selection_ratio,
                    r.frame_coverage
                ));
            }
            s
        }
    })
}

fn md_escape(s: &str) -> String {
    s.replace('|', "\\|")
}
