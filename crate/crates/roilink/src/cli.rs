//! Command-line surface.
//!
//! Exit status: 0 on success, 2 when the configured budgets break
//! `b_video + b_roi <= b_total`, 1 for every other failure (including usage
//! errors).

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use roilink_core::{aggregate_run, run, sweep, DetectionStream, FrameClock, MetricsReport, PolicyKind, SemanticSidecar};
use serde::Serialize;

use crate::config::{keys_help, ConfigError, ConfigFile, SCHEMA_VERSION};
use crate::ingest::{
    gen_synthetic, jitter_confidence, parse_detections, parse_detections_lenient, parse_sidecar_csv,
    parse_sidecar_lenient, write_generic_csv, ColumnMap, InputFormat,
};
use crate::report::{emit_report, summary_lines, ReportFormat};
use crate::runlog::{read_runlog, write_runlog};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_BUDGET: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "roilink", version, about = "Budget-constrained ROI scheduling simulator")]
#[command(after_help = keys_help())]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one policy over a detection file.
    Simulate(SimulateArgs),
    /// Run several policies over the same detections under one budget.
    Sweep(SweepArgs),
    /// Rebuild a metrics report from run logs.
    Report(ReportArgs),
    /// Write a seeded synthetic detection file in the generic layout.
    GenSynthetic(GenArgs),
    /// Check inputs and config without running anything.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Run configuration (TOML).
    #[arg(long, short)]
    pub config: PathBuf,
    /// Override a config key, e.g. `--set budget.window_s=2.0`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Detection or annotation file.
    #[arg(long, short)]
    pub input: PathBuf,
    /// Input layout: generic, uavdt or visdrone.
    #[arg(long, default_value = "generic")]
    pub format: InputFormat,
    /// Column overrides, e.g. `conf=none,class=5`.
    #[arg(long)]
    pub columns: Option<String>,
    /// Semantic sidecar CSV.
    #[arg(long)]
    pub sidecar: Option<PathBuf>,
}

impl InputArgs {
    fn column_map(&self) -> Result<ColumnMap> {
        let map = self.format.column_map();
        match &self.columns {
            Some(spec) => map.with_overrides(spec).map_err(anyhow::Error::msg),
            None => Ok(map),
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub input: InputArgs,
    /// Output directory.
    #[arg(long, short, default_value = ".")]
    pub out: PathBuf,
    /// File name stem; defaults to the policy variant.
    #[arg(long)]
    pub label: Option<String>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub input: InputArgs,
    /// Comma-separated policy variants, e.g. `M0,M5,balanced_top2`.
    #[arg(long, required = true, value_delimiter = ',', num_args = 1..)]
    pub variants: Vec<PolicyKind>,
    #[arg(long, short, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, default_value = "sweep")]
    pub label: String,
    /// Report format: csv, json or markdown.
    #[arg(long, default_value = "csv")]
    pub report_format: ReportFormat,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Run logs (`*.runlog.jsonl`).
    #[arg(required = true)]
    pub runlogs: Vec<PathBuf>,
    #[arg(long, default_value = "csv")]
    pub report_format: ReportFormat,
    /// Write here instead of stdout.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 300)]
    pub frames: u64,
    /// Expected number of objects on screen.
    #[arg(long, default_value_t = 5.0)]
    pub mean_objects: f64,
    /// Write here instead of stdout.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[command(flatten)]
    pub input: InputArgs,
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &anyhow::Error) -> i32 {
    match e.downcast_ref::<ConfigError>() {
        Some(c) if c.is_budget_violation() => EXIT_BUDGET,
        _ => EXIT_ERROR,
    }
}

pub fn execute(command: Command) -> Result<i32> {
    match command {
        Command::Simulate(a) => cmd_simulate(&a).map(|_| EXIT_OK),
        Command::Sweep(a) => cmd_sweep(&a).map(|_| EXIT_OK),
        Command::Report(a) => cmd_report(&a).map(|_| EXIT_OK),
        Command::GenSynthetic(a) => cmd_gen_synthetic(&a).map(|_| EXIT_OK),
        Command::Validate(a) => cmd_validate(&a),
    }
}

struct Prepared {
    config: ConfigFile,
    stream: DetectionStream,
    sidecar: Option<SemanticSidecar>,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

fn prepare(cfg: &ConfigArgs, input: &InputArgs) -> Result<Prepared> {
    let config = ConfigFile::load(&cfg.config, &cfg.overrides)?;
    let run_cfg = config.to_run_config()?;
    let stream = load_stream(input, run_cfg.clock)?;
    let stream = jitter_confidence(&stream, config.seed, config.ingest.conf_jitter)?;
    let sidecar = match &input.sidecar {
        Some(p) => Some(parse_sidecar_csv(&read(p)?).with_context(|| format!("in {}", p.display()))?),
        None => None,
    };
    Ok(Prepared { config, stream, sidecar })
}

fn load_stream(input: &InputArgs, clock: FrameClock) -> Result<DetectionStream> {
    let map = input.column_map()?;
    let text = read(&input.input)?;
    parse_detections(&text, &map, clock).with_context(|| format!("in {}", input.input.display()))
}

#[derive(Serialize)]
struct SimulateReport<'a> {
    schema_version: u32,
    label: &'a str,
    config_echo: &'a str,
    metrics: &'a MetricsReport,
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<MetricsReport> {
    let p = prepare(&args.config, &args.input)?;
    let cfg = p.config.to_run_config()?;
    let label = args.label.clone().unwrap_or_else(|| cfg.policy.variant.name().to_string());
    let log = run(&p.stream, p.sidecar.as_ref(), &cfg)?;
    let metrics = aggregate_run(&log)?;
    let echo = p.config.to_toml();

    ensure_dir(&args.out)?;
    write(&args.out.join(format!("{label}.runlog.jsonl")), &write_runlog(&label, &echo, &log))?;
    let report = SimulateReport {
        schema_version: SCHEMA_VERSION,
        label: &label,
        config_echo: &echo,
        metrics: &metrics,
    };
    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    write(&args.out.join(format!("{label}.report.json")), &json)?;

    println!("policy: {label}");
    for (name, value) in summary_lines(&metrics) {
        println!("{name}: {value}");
    }
    Ok(metrics)
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<Vec<(String, MetricsReport)>> {
    if args.variants.is_empty() {
        bail!("sweep needs at least one variant");
    }
    let p = prepare(&args.config, &args.input)?;
    let base = p.config.to_run_config()?;
    let variants: Vec<_> = args.variants.iter().map(|&v| base.policy.with_variant(v)).collect();
    let echo = p.config.to_toml();
    let logs = sweep(&p.stream, p.sidecar.as_ref(), &base, &variants)?;

    ensure_dir(&args.out)?;
    let mut rows = Vec::with_capacity(logs.len());
    for (policy, log) in &logs {
        let name = policy.variant.name().to_string();
        let metrics = aggregate_run(log)?;
        write(
            &args.out.join(format!("{}.{name}.runlog.jsonl", args.label)),
            &write_runlog(&name, &echo, log),
        )?;
        rows.push((name, metrics));
    }
    let report = emit_report(&rows, args.report_format)?;
    write(&args.out.join(format!("{}.config.toml", args.label)), &echo)?;
    write(
        &args.out.join(format!("{}.report.{}", args.label, args.report_format.extension())),
        &report,
    )?;
    print!("{report}");
    Ok(rows)
}

pub fn cmd_report(args: &ReportArgs) -> Result<String> {
    let mut rows = Vec::with_capacity(args.runlogs.len());
    for path in &args.runlogs {
        let (header, log) = read_runlog(&read(path)?).with_context(|| format!("in {}", path.display()))?;
        rows.push((header.label, aggregate_run(&log)?));
    }
    let report = emit_report(&rows, args.report_format)?;
    match &args.out {
        Some(path) => write(path, &report)?,
        None => print!("{report}"),
    }
    Ok(report)
}

pub fn cmd_gen_synthetic(args: &GenArgs) -> Result<()> {
    // the clock does not reach the file; frames are written as indices
    let clock = FrameClock::new(15.0, 1)?;
    let stream = gen_synthetic(args.seed, args.frames, args.mean_objects, clock)?;
    let text = write_generic_csv(&stream);
    match &args.out {
        Some(path) => write(path, &text)?,
        None => print!("{text}"),
    }
    Ok(())
}

/// Prints counts, every violation and coverage warnings. Returns exit 1
/// when any violation was found.
pub fn cmd_validate(args: &ValidateArgs) -> Result<i32> {
    let mut violations: Vec<String> = Vec::new();
    let mut budget_violation = false;

    let mut clock = FrameClock::new(15.0, 1)?;
    if let Some(path) = &args.config {
        match ConfigFile::load(path, &args.overrides).and_then(|c| c.to_run_config()) {
            Ok(cfg) => clock = cfg.clock,
            Err(e) => {
                budget_violation = e.is_budget_violation();
                violations.push(format!("{}: {e}", path.display()));
            }
        }
    } else if !args.overrides.is_empty() {
        bail!("--set needs --config");
    }

    let map = args.input.column_map()?;
    let text = read(&args.input.input)?;
    let (dets, errors) = parse_detections_lenient(&text, &map);
    let input_name = args.input.input.display().to_string();
    violations.extend(errors.iter().map(|e| format!("{input_name}: {e}")));
    let stream = match DetectionStream::from_detections(clock, dets, None) {
        Ok(s) => Some(s),
        Err(e) => {
            violations.push(format!("{input_name}: {e}"));
            None
        }
    };

    if let Some(s) = &stream {
        let processed = s.clock.processed_frames(s.frame_count).count();
        println!("frames: {}", s.frame_count);
        println!("processed_frames: {processed}");
        println!("detections: {}", s.detection_count());
    }

    if let Some(path) = &args.input.sidecar {
        let name = path.display().to_string();
        let (sidecar, errors) = parse_sidecar_lenient(&read(path)?);
        violations.extend(errors.iter().map(|e| format!("{name}: {e}")));
        let mut matched = 0usize;
        for r in sidecar.iter() {
            let (frame, track) = (r.frame_index, r.track_id);
            let hit = stream.as_ref().is_some_and(|s| {
                s.clock.is_processed(frame)
                    && s.detections_at(frame).iter().any(|d| d.track_hint == Some(track))
            });
            if hit {
                matched += 1;
            } else {
                eprintln!("warning: {name}: (frame {frame}, track {track}) matches no processed detection");
            }
        }
        println!("sidecar_records: {}", sidecar.len());
        println!("sidecar_matched: {matched}");
    }

    for v in &violations {
        eprintln!("violation: {v}");
    }
    Ok(match (violations.is_empty(), budget_violation) {
        (true, _) => EXIT_OK,
        (false, true) => EXIT_BUDGET,
        (false, false) => EXIT_ERROR,
    })
}
