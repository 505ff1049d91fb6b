//! Acceptance suite. Runs without the libtest harness so each criterion
//! prints exactly one PASS/FAIL line, then exits non-zero if any failed.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use roilink::ingest::gen_synthetic;
use roilink_core::policy::{decide, score_roi, RoiCandidate};
use roilink_core::tracker::greedy_assign;
use roilink_core::*;

type Outcome = Result<String, Box<dyn std::error::Error>>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+).into());
        }
    };
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("pilot bitrate table replay", pilot_bitrate_replay),
        ("selector sweep ratio identities", sweep_ratio_identities),
        ("rolling budget safety, 1000 traces", budget_safety),
        ("M5 selection equals enumeration", m5_oracle),
        ("M0 baseline carries only video", m0_baseline),
        ("matched total budget on synthetic runs", matched_budget),
        ("utility-per-bit score unit check", score_unit_check),
        ("replacement rule", replacement_rule),
        ("sweep output determinism", sweep_determinism),
        ("tracker greedy oracle and id freshness", tracker_oracle),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}").into())
        });
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn bbox(x: f64, y: f64, w: f64, h: f64) -> BBox {
    BBox::new(x, y, w, h).unwrap()
}

fn transmission(frame_index: u64, payload_bits: f64) -> TransmissionRecord {
    TransmissionRecord {
        frame_index,
        timestamp_s: frame_index as f64 / 15.0,
        track_id: frame_index,
        bbox: bbox(0.0, 0.0, 10.0, 10.0),
        payload_bits,
        score: 0.0,
        u_term: 0.0,
        s_small_term: 0.0,
        n_term: 0.0,
        semantic: None,
    }
}

/// A log over 60 processed frames (stride 5) with `rois` transmissions
/// spread round-robin over those frames.
fn synthetic_log(rois: u64, raw: u64, payload_bytes: f64, cfg: RunConfig) -> RunLog {
    let processed: Vec<u64> = (0..60).map(|i| i * 5).collect();
    let mut transmissions: Vec<TransmissionRecord> = (0..rois)
        .map(|i| transmission(processed[(i % 60) as usize], payload_bytes * 8.0))
        .collect();
    transmissions.sort_by_key(|t| t.frame_index);
    RunLog {
        config: cfg,
        frame_count: 300,
        processed_frames: processed,
        raw_candidate_count: raw,
        detection_confidence_sum: 0.0,
        rejected_budget: 0,
        rejected_threshold: 0,
        transmissions,
        class_timeline: Vec::new(),
    }
}

fn pilot_bitrate_replay() -> Outcome {
    let mut cfg = RunConfig::new(PolicyConfig::new(PolicyKind::PresetConfSizeTop1));
    cfg.eval.duration_s = Some(52.54);
    cfg.base_bitrate_measured = Some(0.801e6);
    let mut lines = Vec::new();
    for (rois, bytes, mbps, share, rate) in [(59, 1364.0, 0.0123, 0.0151, 1.123), (110, 1540.0, 0.0258, 0.0312, 2.094)] {
        let r = aggregate_run(&synthetic_log(rois, 325, bytes, cfg))?;
        let got_mbps = r.roi_bitrate_bps / 1e6;
        ensure!((got_mbps - mbps).abs() <= 0.0002, "{rois} ROIs: bitrate {got_mbps} vs {mbps}");
        ensure!((r.bitrate_share - share).abs() <= 0.0005, "{rois} ROIs: share {} vs {share}", r.bitrate_share);
        ensure!((r.roi_rate_hz - rate).abs() <= 0.005, "{rois} ROIs: rate {} vs {rate}", r.roi_rate_hz);
        ensure!(r.mean_payload_bytes == bytes, "{rois} ROIs: mean bytes {}", r.mean_payload_bytes);
        lines.push(format!("{rois} ROIs {got_mbps:.4} Mbps share {:.4} {:.3} Hz", r.bitrate_share, r.roi_rate_hz));
    }
    Ok(lines.join("; "))
}

fn sweep_ratio_identities() -> Outcome {
    let cfg = RunConfig::new(PolicyConfig::new(PolicyKind::PresetPermissive));
    let cases = [(59, 0.182, Some(0.983)), (57, 0.175, Some(0.950)), (110, 0.338, None), (178, 0.548, None)];
    for (rois, ratio, coverage) in cases {
        let (sel, got_ratio, got_cov) = selection_stats(&synthetic_log(rois, 325, 1000.0, cfg));
        ensure!(sel == rois, "selected {sel} vs {rois}");
        ensure!((got_ratio - ratio).abs() <= 0.001, "{rois}: ratio {got_ratio} vs {ratio}");
        if let Some(c) = coverage {
            ensure!((got_cov - c).abs() <= 0.001, "{rois}: coverage {got_cov} vs {c}");
        }
    }
    Ok("ratios 0.182/0.175/0.338/0.548, coverage 0.983/0.950".into())
}

/// Sum of every trailing window ending at each commit time.
fn brute_max_window(history: &[(f64, f64)], window: f64) -> f64 {
    history
        .iter()
        .map(|&(t, _)| {
            history
                .iter()
                .filter(|&&(u, _)| u > t - window && u <= t)
                .map(|&(_, b)| b)
                .fold(0.0, |a, b| a + b)
        })
        .fold(0.0, f64::max)
}

fn budget_safety() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xB0D6E7);
    let mut commits = 0usize;
    for trace in 0..1000 {
        let b_roi = rng.gen_range(500.0..50_000.0);
        let window = rng.gen_range(0.25..4.0);
        let mut ledger = BudgetLedger::new(b_roi, window)?;
        let mut history = Vec::new();
        let mut now = 0.0;
        for _ in 0..rng.gen_range(1..200) {
            // bursts on one timestamp are common at processed frames
            if rng.gen_bool(0.7) {
                now += rng.gen_range(0.0..0.6);
            }
            let bits = rng.gen_range(1.0..b_roi * window * 0.6);
            if ledger.admits(now, bits)? {
                ledger.commit(now, bits)?;
                history.push((now, bits));
            } else {
                ensure!(ledger.commit(now, bits).is_err(), "trace {trace}: commit accepted a refused charge");
            }
        }
        let peak = brute_max_window(&history, window);
        ensure!(peak <= b_roi * window, "trace {trace}: window sum {peak} > cap {}", b_roi * window);
        commits += history.len();
    }
    Ok(format!("0 violations over {commits} commits"))
}

fn m5_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0005);
    let window = 1.0;
    let mut selected_steps = 0;
    for step in 0..600 {
        let b_roi = rng.gen_range(50.0..800.0);
        let mut ledger = BudgetLedger::new(b_roi, window)?;
        let mut now = 0.0;
        for _ in 0..rng.gen_range(0..6) {
            now += rng.gen_range(0.0..0.5);
            let bits = rng.gen_range(1.0..300.0);
            if ledger.admits(now, bits)? {
                ledger.commit(now, bits)?;
            }
        }
        now += rng.gen_range(0.0..0.4);
        let used: f64 = ledger
            .live_entries()
            .filter(|&(t, _)| t > now - window && t <= now)
            .map(|(_, b)| b)
            .fold(0.0, |a, b| a + b);
        let threshold = rng.gen_range(0..5) as f64 * 0.1;

        let mut ids: Vec<u64> = (0..20).collect();
        let n = rng.gen_range(0..=8);
        let cands: Vec<RoiCandidate> = (0..n)
            .map(|i| {
                let id = ids.swap_remove(rng.gen_range(0..ids.len()));
                RoiCandidate {
                    frame_index: 0,
                    track_id: id,
                    bbox: bbox(0.0, 0.0, 8.0, 8.0),
                    u_term: 0.0,
                    s_small_term: 0.0,
                    n_term: 0.0,
                    // coarse scores make ties frequent
                    score: rng.gen_range(0..6) as f64 * 0.1,
                    cost_bits: rng.gen_range(1.0..400.0),
                    confidence: 0.5,
                    is_new: i % 2 == 0,
                    created_frame: 0,
                    last_refined_frame: None,
                }
            })
            .collect();

        let mut best: Option<&RoiCandidate> = None;
        for c in &cands {
            if c.score > threshold && used + c.cost_bits <= b_roi * window {
                best = match best {
                    Some(b) if b.score > c.score || (b.score == c.score && b.track_id < c.track_id) => Some(b),
                    _ => Some(c),
                };
            }
        }

        let mut cfg = PolicyConfig::new(PolicyKind::M5);
        cfg.score_threshold = Some(threshold);
        let d = decide(&cands, &ledger, now, &cfg)?;
        let got = d.selected.first().map(|c| c.track_id);
        ensure!(got == best.map(|c| c.track_id), "step {step}: engine {got:?} vs oracle {:?}", best.map(|c| c.track_id));
        ensure!(d.selected.len() <= 1, "step {step}: top-1 returned {}", d.selected.len());
        selected_steps += usize::from(got.is_some());
    }
    Ok(format!("600/600 steps agree ({selected_steps} with a selection)"))
}

fn random_budget(rng: &mut ChaCha8Rng) -> BudgetConfig {
    let b_total = rng.gen_range(0.2e6..3.0e6);
    let b_video = rng.gen_range(0.0..b_total);
    let b_roi = rng.gen_range(0.0..=b_total - b_video);
    BudgetConfig::new(b_total, b_video, b_roi, rng.gen_range(0.5..4.0)).unwrap()
}

fn m0_baseline() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x00);
    for i in 0..100 {
        let clock = FrameClock::new(rng.gen_range(5.0..30.0), rng.gen_range(1..8))?;
        let stream = gen_synthetic(rng.gen(), rng.gen_range(1..200), rng.gen_range(0.0..10.0), clock)?;
        let mut cfg = RunConfig::new(PolicyConfig::new(PolicyKind::M0));
        cfg.clock = clock;
        cfg.budget = random_budget(&mut rng);
        let log = run(&stream, None, &cfg)?;
        ensure!(log.transmissions.is_empty(), "stream {i}: {} transmissions", log.transmissions.len());
        let r = aggregate_run(&log)?;
        ensure!(
            r.total_bitrate_bps == cfg.budget.b_video,
            "stream {i}: total {} vs b_video {}",
            r.total_bitrate_bps,
            cfg.budget.b_video
        );
    }
    Ok("100 streams, 0 ROIs, total == b_video".into())
}

fn variant(kind: PolicyKind) -> PolicyConfig {
    let mut p = PolicyConfig::new(kind);
    p.period_frames = Some(15);
    p.conf_threshold = Some(0.5);
    p.area_threshold = Some(1024.0);
    p.score_threshold = Some(0.0);
    p
}

fn matched_budget() -> Outcome {
    let regimes = [
        BudgetConfig::low_video_only(),
        BudgetConfig::low_hybrid(),
        BudgetConfig::moderate_video_only(),
        BudgetConfig::moderate_hybrid(),
    ];
    let clock = FrameClock::new(15.0, 5)?;
    let mut runs = 0;
    let mut peak_total: f64 = 0.0;
    for seed in 0..6u64 {
        let stream = gen_synthetic(seed, 450, 2.0 + seed as f64 * 2.0, clock)?;
        for budget in regimes {
            for kind in PolicyKind::ALL {
                let mut cfg = RunConfig::new(variant(kind));
                cfg.budget = budget;
                let r = aggregate_run(&run(&stream, None, &cfg)?)?;
                ensure!(
                    r.base_bitrate_bps + r.roi_bitrate_bps <= budget.b_total,
                    "seed {seed} {kind} at {}/{}: {} > {}",
                    budget.b_video,
                    budget.b_roi,
                    r.total_bitrate_bps,
                    budget.b_total
                );
                peak_total = peak_total.max(r.total_bitrate_bps / budget.b_total);
                runs += 1;
            }
        }
    }
    Ok(format!("{runs} runs, peak total/B_tot = {peak_total:.4}"))
}

fn score_unit_check() -> Outcome {
    let w = ScoreWeights::default();
    let s = score_roi(0.8, 0.5, 1.0, 10_000.0, w)?;
    ensure!(s == 7.5e-5, "score {s:e} != 7.5e-5");
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..1000 {
        let (u, sm, n) = (rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0), f64::from(rng.gen_range(0..2u8)));
        let cost = rng.gen_range(1.0..1e6);
        let base = score_roi(u, sm, n, cost, w)?;
        for k in [2.0, 10.0] {
            let scaled = score_roi(u, sm, n, k * cost, w)?;
            ensure!(
                (scaled - base / k).abs() <= 1e-15 * base.abs().max(f64::MIN_POSITIVE),
                "k={k}: {scaled:e} vs {:e}",
                base / k
            );
        }
    }
    Ok("score = 7.5e-5 exactly; homogeneous for k = 2, 10".into())
}

fn replacement_rule() -> Outcome {
    let clock = FrameClock::new(15.0, 5)?;
    let stream = gen_synthetic(21, 240, 5.0, clock)?;
    let mut sidecar = SemanticSidecar::new();
    for d in stream.detections() {
        sidecar.insert(SemanticRecord {
            frame_index: d.frame_index,
            track_id: d.track_hint.unwrap(),
            video_conf: 0.2,
            still_conf: 0.4,
            video_label: d.class_id,
            // differs from every video label; varies so each refresh is visible
            still_label: 100 + d.frame_index as i64,
            video_entropy: 1.5,
            still_entropy: 1.0,
            payload_bytes: None,
        })?;
    }
    let mut cfg = RunConfig::new(variant(PolicyKind::M1));
    cfg.tracker.use_hints = true;
    let log = run(&stream, Some(&sidecar), &cfg)?;
    ensure!(log.transmissions.len() > 5, "only {} transmissions", log.transmissions.len());
    let r = aggregate_run(&log)?;
    ensure!(r.prediction_change_rate == Some(1.0), "prediction_change_rate {:?}", r.prediction_change_rate);

    let mut refined: BTreeMap<(u64, u64), i64> = BTreeMap::new();
    for t in &log.transmissions {
        let sem = t.semantic.ok_or("transmission without sidecar record")?;
        refined.insert((t.track_id, t.frame_index), sem.still_label);
    }
    let mut current: BTreeMap<u64, i64> = BTreeMap::new();
    let mut switches = 0;
    for s in &log.class_timeline {
        let here = refined.get(&(s.track_id, s.frame_index)).copied();
        ensure!(s.refined_here == here.is_some(), "track {} frame {}: refined_here mismatch", s.track_id, s.frame_index);
        if let Some(label) = here {
            ensure!(current.get(&s.track_id) != Some(&label), "label did not change at refresh");
            current.insert(s.track_id, label);
            switches += 1;
        }
        let expected = current.get(&s.track_id).copied().unwrap_or(s.video_class);
        ensure!(
            s.current_class == expected,
            "track {} frame {}: class {} expected {expected}",
            s.track_id,
            s.frame_index,
            s.current_class
        );
    }
    ensure!(switches == log.transmissions.len(), "{switches} switches for {} ROIs", log.transmissions.len());
    Ok(format!("{switches} switches, each at its transmission frame; change rate 1.0"))
}

const SWEEP_CONFIG: &str = r#"
schema_version = 1
seed = 9

[clock]
fps = 15.0
frame_stride = 5

[budget]
b_total = 800000.0
b_video = 650000.0
b_roi = 150000.0

[policy]
variant = "M5"
period_frames = 15
conf_threshold = 0.5
area_threshold = 1024.0
score_threshold = 0.0

[ingest]
conf_jitter = 0.05
"#;

fn roilink(args: &[&str]) -> Result<std::process::Output, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_roilink"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(out)
}

fn dir_contents(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut files = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(|e| e.to_string())? {
        let path = entry.map_err(|e| e.to_string())?.path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        files.insert(name, std::fs::read(&path).map_err(|e| e.to_string())?);
    }
    Ok(files)
}

fn sweep_determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = tmp.path();
    let input = root.join("dets.csv");
    let config = root.join("run.toml");
    std::fs::write(&config, SWEEP_CONFIG).map_err(|e| e.to_string())?;
    roilink(&["gen-synthetic", "--seed", "5", "--frames", "300", "--mean-objects", "6", "-o", input.to_str().unwrap()])?;
    let variants = "M0,M1,M2,M3,M4,M5,permissive,conf_size_top1,strict_small_only,balanced_top2";
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = root.join(run);
        for fmt in ["csv", "json", "markdown"] {
            roilink(&[
                "sweep", "-c", config.to_str().unwrap(), "-i", input.to_str().unwrap(),
                "--variants", variants, "--report-format", fmt, "-o", out.to_str().unwrap(),
            ])?;
        }
        outputs.push(dir_contents(&out)?);
    }
    ensure!(outputs[0].len() == 14, "expected 14 output files, found {}", outputs[0].len());
    ensure!(outputs[0] == outputs[1], "sweep outputs differ between executions");
    let csv = String::from_utf8_lossy(&outputs[0]["sweep.report.csv"]).into_owned();
    ensure!(csv.lines().count() == 11, "report has {} lines", csv.lines().count());
    Ok(format!("{} files byte-identical across two executions", outputs[0].len()))
}

/// Greedy matching recomputed from scratch: repeatedly scan all free pairs
/// for the best one.
fn exhaustive_greedy(iou: &[Vec<f64>], iou_min: f64) -> Vec<(usize, usize)> {
    let rows = iou.len();
    let cols = iou.first().map_or(0, Vec::len);
    let mut row_free = vec![true; rows];
    let mut col_free = vec![true; cols];
    let mut out = Vec::new();
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for r in (0..rows).filter(|&r| row_free[r]) {
            for c in (0..cols).filter(|&c| col_free[c]) {
                let v = iou[r][c];
                if v > 0.0 && v >= iou_min && best.is_none_or(|(bv, _, _)| v > bv) {
                    best = Some((v, r, c));
                }
            }
        }
        match best {
            Some((_, r, c)) => {
                row_free[r] = false;
                col_free[c] = false;
                out.push((r, c));
            }
            None => return out,
        }
    }
}

fn tracker_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x7AC);
    for case in 0..500 {
        let rows = rng.gen_range(0..=6);
        let cols = rng.gen_range(0..=6);
        // quantized IoUs produce ties and exact zeros
        let iou: Vec<Vec<f64>> = (0..rows)
            .map(|_| (0..cols).map(|_| rng.gen_range(0..8) as f64 / 8.0).collect())
            .collect();
        let iou_min = rng.gen_range(0..4) as f64 / 8.0;
        let got = greedy_assign(&iou, iou_min);
        let want = exhaustive_greedy(&iou, iou_min);
        ensure!(got == want, "case {case}: {got:?} vs {want:?} for {iou:?}");
    }

    for seed in 0..50u64 {
        let stream = gen_synthetic(seed, 150, 5.0, FrameClock::new(15.0, 1)?)?;
        let mut t = TrackerState::new(TrackerConfig { iou_min: 0.3, max_misses: 2, use_hints: false })?;
        let mut issued = 0u64;
        let mut retired = std::collections::BTreeSet::new();
        for frame in stream.frames() {
            let before: Vec<u64> = t.tracks().iter().map(|x| x.id).collect();
            for a in t.step(frame.index, &frame.detections)? {
                ensure!(!retired.contains(&a.track_id), "seed {seed}: retired id {} reused", a.track_id);
                if a.is_new {
                    ensure!(a.track_id == issued, "seed {seed}: new id {} expected {issued}", a.track_id);
                    issued += 1;
                }
            }
            let after: std::collections::BTreeSet<u64> = t.tracks().iter().map(|x| x.id).collect();
            retired.extend(before.into_iter().filter(|id| !after.contains(id)));
        }
    }
    Ok("500/500 instances agree; ids fresh over 50 streams".into())
}
