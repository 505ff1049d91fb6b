//! Run configuration file.
//!
//! A TOML document with a `schema_version` and one table per subsystem.
//! Every key can also be set from the command line as a dotted path
//! (`budget.window_s=2.0`); [`CONFIG_KEYS`] is the complete list.

use std::path::Path;

use roilink_core::{
    BudgetConfig, ConfidenceSource, CostModel, DomainError, EngineError, EvalConfig, FrameClock, PolicyConfig,
    PolicyKind, RunConfig, ScoreWeights, TrackerConfig,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

/// Every accepted key with a one-line description.
pub const CONFIG_KEYS: &[(&str, &str)] = &[
    ("schema_version", "config schema version (must be 1)"),
    ("seed", "seed for every random draw in the run"),
    ("base_bitrate_measured", "measured base-stream bits/s used in reporting instead of budget.b_video"),
    ("clock.fps", "source frames per second"),
    ("clock.frame_stride", "process every n-th source frame"),
    ("budget.b_total", "total link budget, bits/s"),
    ("budget.b_video", "base video allocation, bits/s"),
    ("budget.b_roi", "ROI still allocation, bits/s"),
    ("budget.window_s", "rolling ROI budget window, seconds"),
    ("policy.variant", "M0..M5, preset_permissive, preset_conf_size_top1, preset_strict_small_only, preset_balanced_top2"),
    ("policy.period_frames", "M1 refresh interval, source frames"),
    ("policy.conf_threshold", "M3 trigger (conf < t) / preset confidence gate (conf >= t)"),
    ("policy.area_threshold", "M4 trigger and preset size gate (area < t), px^2"),
    ("policy.score_threshold", "M5 / balanced preset gate (score > t)"),
    ("policy.top_k", "per-frame selection cap"),
    ("policy.cooldown_frames", "frames after a refinement during which novelty is 0"),
    ("policy.w_u", "weight of the uncertainty term"),
    ("policy.w_s", "weight of the size-priority term"),
    ("policy.w_n", "weight of the novelty term"),
    ("policy.area_ref", "reference area of the size-priority term, px^2"),
    ("policy.confidence_source", "detector | classifier"),
    ("tracker.iou_min", "minimum IoU for association"),
    ("tracker.max_misses", "processed frames a track survives unmatched"),
    ("tracker.use_hints", "associate by annotation track id when present"),
    ("cost.header_bytes", "fixed bytes per still"),
    ("cost.bits_per_pixel", "bits per crop pixel"),
    ("cost.resize_edge", "square edge the crop is resized to, px (unset = padded box)"),
    ("cost.pad_ratio", "crop padding per side, fraction of box size"),
    ("eval.lambda_cls", "weight of the confidence gain in the combined utility line"),
    ("eval.duration_s", "duration used to normalize rates, seconds"),
    ("ingest.conf_jitter", "uniform confidence noise amplitude applied to inputs"),
];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config syntax: {0}")]
    Syntax(String),
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("override `{0}` must look like key=value")]
    BadOverride(String),
    #[error("unsupported schema_version {0}, expected {SCHEMA_VERSION}")]
    SchemaVersion(u32),
    #[error(transparent)]
    Invalid(#[from] EngineError),
}

impl ConfigError {
    /// The allocation breaks `b_video + b_roi <= b_total`.
    pub fn is_budget_violation(&self) -> bool {
        matches!(
            self,
            ConfigError::Invalid(EngineError::Domain(DomainError::BudgetExceedsTotal { .. }))
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_bitrate_measured: Option<f64>,
    #[serde(default)]
    pub clock: ClockSection,
    pub budget: BudgetSection,
    pub policy: PolicySection,
    #[serde(default)]
    pub tracker: TrackerSection,
    #[serde(default)]
    pub cost: CostSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub ingest: IngestSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClockSection {
    pub fps: f64,
    pub frame_stride: u64,
}

impl Default for ClockSection {
    fn default() -> Self {
        Self {
            fps: 15.0,
            frame_stride: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetSection {
    pub b_total: f64,
    pub b_video: f64,
    pub b_roi: f64,
    #[serde(default = "default_window")]
    pub window_s: f64,
}

fn default_window() -> f64 {
    BudgetConfig::DEFAULT_WINDOW_S
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySection {
    pub variant: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period_frames: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conf_threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub area_threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score_threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_k: Option<usize>,
    #[serde(default = "default_cooldown")]
    pub cooldown_frames: u64,
    #[serde(default = "default_w_u")]
    pub w_u: f64,
    #[serde(default = "default_w_s")]
    pub w_s: f64,
    #[serde(default = "default_w_n")]
    pub w_n: f64,
    #[serde(default = "default_area_ref")]
    pub area_ref: f64,
    #[serde(default)]
    pub confidence_source: ConfidenceSource,
}

fn default_cooldown() -> u64 {
    PolicyConfig::DEFAULT_COOLDOWN_FRAMES
}
fn default_w_u() -> f64 {
    ScoreWeights::default().w_u
}
fn default_w_s() -> f64 {
    ScoreWeights::default().w_s
}
fn default_w_n() -> f64 {
    ScoreWeights::default().w_n
}
fn default_area_ref() -> f64 {
    PolicyConfig::DEFAULT_AREA_REF
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackerSection {
    pub iou_min: f64,
    pub max_misses: u32,
    pub use_hints: bool,
}

impl Default for TrackerSection {
    fn default() -> Self {
        let t = TrackerConfig::default();
        Self {
            iou_min: t.iou_min,
            max_misses: t.max_misses,
            use_hints: t.use_hints,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSection {
    pub header_bytes: u32,
    pub bits_per_pixel: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resize_edge: Option<f64>,
    pub pad_ratio: f64,
}

impl Default for CostSection {
    fn default() -> Self {
        let c = CostModel::default();
        Self {
            header_bytes: c.header_bytes,
            bits_per_pixel: c.bits_per_pixel,
            resize_edge: c.resize_edge,
            pad_ratio: c.pad_ratio,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_cls: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestSection {
    #[serde(default)]
    pub conf_jitter: f64,
}

impl ConfigFile {
    /// Parses `text`, applies `overrides` and checks the schema version.
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut doc: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
        apply_overrides(&mut doc, overrides)?;
        let cfg: ConfigFile = toml::Value::Table(doc)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::SchemaVersion(cfg.schema_version));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text, overrides)
    }

    /// The effective document, suitable for an exact rerun.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn policy_kind(&self) -> Result<PolicyKind, ConfigError> {
        self.policy
            .variant
            .parse()
            .map_err(|e: roilink_core::PolicyError| ConfigError::Invalid(e.into()))
    }

    /// Builds and validates the core run configuration.
    pub fn to_run_config(&self) -> Result<RunConfig, ConfigError> {
        let p = &self.policy;
        let policy = PolicyConfig {
            variant: self.policy_kind()?,
            period_frames: p.period_frames,
            conf_threshold: p.conf_threshold,
            area_threshold: p.area_threshold,
            score_threshold: p.score_threshold,
            top_k: p.top_k,
            cooldown_frames: p.cooldown_frames,
            weights: ScoreWeights {
                w_u: p.w_u,
                w_s: p.w_s,
                w_n: p.w_n,
            },
            area_ref: p.area_ref,
            confidence_source: p.confidence_source,
        };
        let cfg = RunConfig {
            clock: FrameClock::new(self.clock.fps, self.clock.frame_stride).map_err(EngineError::from)?,
            budget: BudgetConfig::new(
                self.budget.b_total,
                self.budget.b_video,
                self.budget.b_roi,
                self.budget.window_s,
            )
            .map_err(EngineError::from)?,
            policy,
            tracker: TrackerConfig {
                iou_min: self.tracker.iou_min,
                max_misses: self.tracker.max_misses,
                use_hints: self.tracker.use_hints,
            },
            cost: CostModel {
                header_bytes: self.cost.header_bytes,
                bits_per_pixel: self.cost.bits_per_pixel,
                resize_edge: self.cost.resize_edge,
                pad_ratio: self.cost.pad_ratio,
            },
            eval: EvalConfig {
                lambda_cls: self.eval.lambda_cls,
                duration_s: self.eval.duration_s,
            },
            base_bitrate_measured: self.base_bitrate_measured,
            seed: self.seed,
        };
        cfg.validate()?;
        if !(self.ingest.conf_jitter >= 0.0) {
            return Err(ConfigError::Syntax("ingest.conf_jitter must be non-negative".into()));
        }
        Ok(cfg)
    }
}

/// Sets dotted `key=value` paths in `doc`. Values are read as TOML scalars
/// (`2.0`, `true`, `"M5"`); anything else is taken as a bare string.
pub fn apply_overrides(doc: &mut toml::Table, overrides: &[String]) -> Result<(), ConfigError> {
    for raw in overrides {
        let (key, value) = raw
            .split_once('=')
            .ok_or_else(|| ConfigError::BadOverride(raw.clone()))?;
        let key = key.trim();
        if !CONFIG_KEYS.iter().any(|(k, _)| *k == key) {
            return Err(ConfigError::UnknownKey(key.to_string()));
        }
        let value = parse_scalar(value.trim());
        let mut parts: Vec<&str> = key.split('.').collect();
        let leaf = parts.pop().expect("split yields at least one part");
        let mut table = &mut *doc;
        for part in parts {
            let entry = table
                .entry(part.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            table = entry
                .as_table_mut()
                .ok_or_else(|| ConfigError::Syntax(format!("`{part}` is not a table")))?;
        }
        table.insert(leaf.to_string(), value);
    }
    Ok(())
}

fn parse_scalar(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// `--help` text listing every config key.
pub fn keys_help() -> String {
    let width = CONFIG_KEYS.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut out = String::from("Config keys (file or --set key=value):\n");
    for (k, doc) in CONFIG_KEYS {
        out.push_str(&format!("  {k:<width$}  {doc}\n"));
    }
    out
}
