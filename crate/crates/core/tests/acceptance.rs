//! Acceptance criteria, one test each. Every test prints a single
//! `criterion N: PASS|FAIL` line (bypassing output capture) before asserting.
//!
//! Run with `cargo test --release -p fsn --test acceptance`.

use std::collections::BTreeSet;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fsn::cli::commands::{cmd_eval, cmd_predict, cmd_synth, cmd_train, PREDICT_LOG_FILE};
use fsn::cli::gradcheck::run_gradcheck_suite;
use fsn::cli::{ablate_strong, ablate_weak, Comparison, RunConfig};
use fsn::data::{load_dataset, synth_single_instance, GroundTruthSegment};
use fsn::eval::{average_precision, precision_recall, segment_level_map, EvalConfig};
use fsn::localize::{localize_strong, load_predictions, nms, temporal_iou, SegmentPrediction};
use fsn::model::{
    fsn_forward, receptive_field, save_model, AblationHead, FrameHead, FsnHead, Model, ModelConfig, TemporalNet,
};
use fsn::nncore::{bilinear_upsample_1d, dilated_conv1d_forward, ConvLayer1D, SeqTensor};

fn verdict(n: u32, name: &str, ok: bool, detail: &str, elapsed: Duration) {
    let line = format!(
        "criterion {n}: {} {name} ({detail}; {:.1}s)\n",
        if ok { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64()
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(ok, "{}", line.trim_end());
}

fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn rand_seq(rng: &mut ChaCha8Rng, len: usize, ch: usize) -> SeqTensor {
    SeqTensor::from_fn(len, ch, |_, _| rng.gen_range(-1.0..1.0))
}

fn pred(video: &str, start: usize, end: usize, class_id: usize, confidence: f64) -> SegmentPrediction {
    SegmentPrediction {
        video_id: video.into(),
        start,
        end,
        class_id,
        confidence,
    }
}

fn set_iou(a: (usize, usize), b: (usize, usize)) -> f64 {
    let sa: BTreeSet<usize> = (a.0..a.1).collect();
    let sb: BTreeSet<usize> = (b.0..b.1).collect();
    sa.intersection(&sb).count() as f64 / sa.union(&sb).count() as f64
}

#[test]
fn criterion_1_gradient_suite() {
    let t = Instant::now();
    let report = run_gradcheck_suite(20, 1e-5).unwrap();
    let elapsed = t.elapsed();
    let worst = report
        .checks
        .iter()
        .map(|c| c.max_relative_error)
        .fold(0.0, f64::max);
    let ok = report.passed()
        && report.checks.len() == 10
        && report.checks.iter().all(|c| c.runs == 20)
        && !report.negative_control.passed()
        && elapsed < Duration::from_secs(60);
    verdict(
        1,
        "gradient suite",
        ok,
        &format!(
            "worst rel err {worst:.2e} over {} checks x 20 seeds, control err {:.2e}",
            report.checks.len(),
            report.negative_control.max_relative_error
        ),
        elapsed,
    );
}

fn naive_conv(x: &SeqTensor, layer: &ConvLayer1D) -> Vec<f64> {
    let (len, cin) = x.shape();
    let (k, d) = (layer.kernel_size(), layer.dilation());
    let pad = d * (k - 1) / 2;
    let mut out = Vec::new();
    for t in 0..len {
        for o in 0..layer.out_channels() {
            let mut v = layer.bias()[o];
            for i in 0..cin {
                for j in 0..k {
                    let p = t as isize + (j * d) as isize - pad as isize;
                    if p >= 0 && (p as usize) < len {
                        v += layer.weights()[(o * cin + i) * k + j] * x.get(p as usize, i);
                    }
                }
            }
            out.push(v);
        }
    }
    out
}

fn greedy_nms_oracle(segs: &[SegmentPrediction], th: f64) -> Vec<SegmentPrediction> {
    let mut remaining = segs.to_vec();
    let mut kept = Vec::new();
    while !remaining.is_empty() {
        let mut best = 0;
        for i in 1..remaining.len() {
            let (a, b) = (&remaining[i], &remaining[best]);
            if a.confidence > b.confidence
                || (a.confidence == b.confidence
                    && (a.start < b.start || (a.start == b.start && a.end - a.start < b.end - b.start)))
            {
                best = i;
            }
        }
        let top = remaining.remove(best);
        remaining.retain(|s| set_iou((s.start, s.end), (top.start, top.end)) <= th);
        kept.push(top);
    }
    kept
}

fn brute_force_map(preds: &[SegmentPrediction], gt: &[GroundTruthSegment], k: usize, th: f64) -> f64 {
    let mut total = 0.0;
    for class in 1..=k {
        let gts: Vec<&GroundTruthSegment> = gt.iter().filter(|g| g.class_id == class).collect();
        let mut ps: Vec<&SegmentPrediction> = preds.iter().filter(|p| p.class_id == class).collect();
        for i in 1..ps.len() {
            let mut j = i;
            while j > 0 && ps[j - 1].confidence < ps[j].confidence {
                ps.swap(j - 1, j);
                j -= 1;
            }
        }
        let mut used = vec![false; gts.len()];
        let (mut hits, mut sum) = (0usize, 0.0);
        for (rank, p) in ps.iter().enumerate() {
            let mut best: Option<(usize, f64)> = None;
            for (g, seg) in gts.iter().enumerate() {
                if used[g] || seg.video_id != p.video_id {
                    continue;
                }
                let iou = set_iou((p.start, p.end), (seg.start, seg.end));
                if best.map_or(true, |(_, b)| iou > b) {
                    best = Some((g, iou));
                }
            }
            if let Some((g, _)) = best.filter(|(_, iou)| *iou > th) {
                used[g] = true;
                hits += 1;
                sum += hits as f64 / (rank + 1) as f64;
            }
        }
        if !gts.is_empty() {
            total += sum / gts.len() as f64;
        }
    }
    total / k as f64
}

#[test]
fn criterion_2_oracle_equivalence() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut failures = Vec::new();

    let mut conv_err: f64 = 0.0;
    for _ in 0..300 {
        let (cin, cout) = (rng.gen_range(1..=5), rng.gen_range(1..=5));
        let k = [1, 3, 5, 7][rng.gen_range(0..4)];
        let d = rng.gen_range(1..=4);
        let w = (0..cin * cout * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b = (0..cout).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let layer = ConvLayer1D::with_params(cin, cout, k, d, w, b).unwrap();
        let len = rng.gen_range(1..=20);
        let x = rand_seq(&mut rng, len, cin);
        let fast = dilated_conv1d_forward(&x, &layer).unwrap();
        for (a, b) in fast.as_slice().iter().zip(naive_conv(&x, &layer)) {
            conv_err = conv_err.max((a - b).abs());
        }
    }
    if conv_err > 1e-12 {
        failures.push(format!("conv max diff {conv_err:e}"));
    }

    for _ in 0..2000 {
        let s1 = rng.gen_range(0..40);
        let s2 = rng.gen_range(0..40);
        let a = (s1, s1 + rng.gen_range(1..20));
        let b = (s2, s2 + rng.gen_range(1..20));
        if temporal_iou(a, b).unwrap() != set_iou(a, b) {
            failures.push(format!("iou {a:?} {b:?}"));
            break;
        }
    }

    for _ in 0..1000 {
        let n = rng.gen_range(1..=8);
        let segs: Vec<SegmentPrediction> = (0..n)
            .map(|_| {
                let s = rng.gen_range(0..30);
                pred("v", s, s + rng.gen_range(1..15), 1, rng.gen_range(0..5) as f64 / 4.0)
            })
            .collect();
        let th = [0.0, 0.2, 0.4, 0.6][rng.gen_range(0..4)];
        if nms(&segs, th) != greedy_nms_oracle(&segs, th) {
            failures.push("nms".into());
            break;
        }
    }

    for _ in 0..2000 {
        let k = rng.gen_range(1..=2);
        let videos: BTreeSet<String> = ["a".to_string(), "b".to_string()].into();
        let gt: Vec<GroundTruthSegment> = (0..rng.gen_range(0..=4))
            .map(|_| {
                let s = rng.gen_range(0..20);
                GroundTruthSegment::new(["a", "b"][rng.gen_range(0..2)], s, s + rng.gen_range(1..10), rng.gen_range(1..=k))
            })
            .collect();
        let preds: Vec<SegmentPrediction> = (0..rng.gen_range(0..=6))
            .map(|_| {
                let s = rng.gen_range(0..20);
                pred(
                    ["a", "b"][rng.gen_range(0..2)],
                    s,
                    s + rng.gen_range(1..10),
                    rng.gen_range(1..=k),
                    rng.gen_range(0..4) as f64 / 3.0,
                )
            })
            .collect();
        let th = [0.1, 0.3, 0.5, 0.7][rng.gen_range(0..4)];
        let got = segment_level_map(&preds, &gt, &videos, &EvalConfig::new(vec![th], k).unwrap()).unwrap();
        if got.map[0] != brute_force_map(&preds, &gt, k, th) {
            failures.push(format!("segment mAP {} vs {}", got.map[0], brute_force_map(&preds, &gt, k, th)));
            break;
        }
    }

    let mut ap_err: f64 = 0.0;
    for _ in 0..2000 {
        let n = rng.gen_range(0..30);
        let ranked: Vec<(f64, bool)> = (0..n).map(|i| (1.0 - i as f64 / 100.0, rng.gen_bool(0.4))).collect();
        let npos = ranked.iter().filter(|r| r.1).count() + rng.gen_range(0..3);
        let ap = average_precision(&ranked, npos).unwrap();
        let curve = precision_recall(&ranked, npos);
        let mut prev_recall = 0.0;
        let mut sum = 0.0;
        for (p, r) in curve {
            sum += p * (r - prev_recall);
            prev_recall = r;
        }
        ap_err = ap_err.max((ap - sum).abs());
    }
    if ap_err > 1e-12 {
        failures.push(format!("AP diff {ap_err:e}"));
    }

    let elapsed = t.elapsed();
    let ok = failures.is_empty() && elapsed < Duration::from_secs(60);
    let detail = if failures.is_empty() {
        format!("conv diff {conv_err:.1e}, AP diff {ap_err:.1e}; iou, nms, segment mAP exact")
    } else {
        failures.join("; ")
    };
    verdict(2, "oracle equivalence", ok, &detail, elapsed);
}

/// Output positions of `net` whose value changes when input position `p` is
/// perturbed, on an all-positive network (every ReLU active).
fn influenced(net: &TemporalNet, len: usize, p: usize) -> usize {
    let cin = net.in_channels();
    let base = SeqTensor::from_fn(len, cin, |_, _| 1.0);
    let mut bumped = base.clone();
    for c in 0..cin {
        bumped.set(p, c, 2.0);
    }
    let a = net.forward(&base).unwrap();
    let b = net.forward(&bumped).unwrap();
    (0..len).filter(|&t| a.row(t) != b.row(t)).count()
}

fn positive_net(net: &TemporalNet) -> TemporalNet {
    let mut n = net.clone();
    let count = n.param_count();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    n.set_flat_params(&(0..count).map(|_| rng.gen_range(0.1..1.0)).collect::<Vec<_>>())
        .unwrap();
    n
}

#[test]
fn criterion_3_structural_invariants() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut failures = Vec::new();

    let head = FsnHead::init(ModelConfig::new(4, 16).with_hidden(32), 1).unwrap();
    for len in [1, 2, 7, 13, 40] {
        let x = rand_seq(&mut rng, len, 16);
        for layer in head.net().layers() {
            let y = layer.forward(&rand_seq(&mut rng, len, layer.in_channels())).unwrap();
            if y.len() != len {
                failures.push(format!("conv length {len} -> {}", y.len()));
            }
        }
        if head.net().forward(&x).unwrap().len() != len {
            failures.push(format!("stack length {len}"));
        }
    }

    let mut row_err: f64 = 0.0;
    for _ in 0..20 {
        let x = SeqTensor::from_fn(7, 16, |_, _| rng.gen_range(-5.0..5.0));
        let y = fsn_forward(&x, &head, 35).unwrap();
        for row in y.rows() {
            row_err = row_err.max((row.iter().sum::<f64>() - 1.0).abs());
        }
    }
    if row_err > 1e-9 {
        failures.push(format!("row sum error {row_err:e}"));
    }

    for n in [1, 4, 35] {
        let x = rand_seq(&mut rng, n, 3);
        if bilinear_upsample_1d(&x, n).unwrap() != x {
            failures.push(format!("upsample identity at {n}"));
        }
    }
    let mut affine_err: f64 = 0.0;
    for (n, target) in [(2, 35), (7, 35), (5, 12), (3, 100)] {
        let (a, b) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let x = SeqTensor::from_fn(n, 1, |i, _| a * i as f64 + b);
        let y = bilinear_upsample_1d(&x, target).unwrap();
        for tt in 0..target {
            let s = tt as f64 * (n - 1) as f64 / (target - 1) as f64;
            affine_err = affine_err.max((y.get(tt, 0) - (a * s + b)).abs());
        }
    }
    if affine_err > 1e-12 {
        failures.push(format!("affine upsample error {affine_err:e}"));
    }

    let fsn = FsnHead::init(ModelConfig::new(4, 16), 0).unwrap();
    let rf = receptive_field(fsn.net(), 5);
    let probed = influenced(&positive_net(fsn.net()), 61, 30);
    if (rf.snippets, rf.frames, probed) != (17, 85, 17) {
        failures.push(format!("fsn receptive field {rf:?}, probed {probed}"));
    }
    let abl = AblationHead::init(ModelConfig::new(4, 16), 0).unwrap();
    let rf_abl = receptive_field(abl.net(), 5);
    let probed_abl = influenced(&positive_net(abl.net()), 61, 30);
    if (rf_abl.snippets, probed_abl) != (1, 1) {
        failures.push(format!("ablation receptive field {rf_abl:?}, probed {probed_abl}"));
    }

    let elapsed = t.elapsed();
    let ok = failures.is_empty() && elapsed < Duration::from_secs(30);
    let detail = if failures.is_empty() {
        format!("row err {row_err:.1e}, affine err {affine_err:.1e}, receptive field 17/85 and 1")
    } else {
        failures.join("; ")
    };
    verdict(3, "structural invariants", ok, &detail, elapsed);
}

struct StrongRun {
    _dir: tempfile::TempDir,
    run: RunConfig,
    comparison: Comparison,
    fsn: Model,
    elapsed: Duration,
}

/// The criterion-4 training, shared with criterion 6.
fn strong_run() -> &'static StrongRun {
    static RUN: OnceLock<StrongRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let mut run = RunConfig::from_file(&config_path("ablation_strong.conf")).unwrap();
        run.out_dir = dir.path().to_path_buf();
        let t = Instant::now();
        cmd_synth(&run).unwrap();
        let ds = load_dataset(&run.data_path()).unwrap();
        let (comparison, [fsn, _]) = ablate_strong(&ds, &run).unwrap();
        StrongRun {
            elapsed: t.elapsed(),
            _dir: dir,
            run,
            comparison,
            fsn,
        }
    })
}

#[test]
fn criterion_4_temporal_context_ablation() {
    let r = strong_run();
    let run = &r.run;
    let ds_ok = run.synth.num_classes == 4
        && run.synth.feature_dim == 16
        && run.synth.num_videos - run.synth.num_test == 60
        && run.synth.num_test == 20
        && run.synth.frames_per_video == 600
        && run.synth.context_ambiguity;
    let [full, base] = &r.comparison.reports;
    let frame_delta = full.frame_map - base.frame_map;
    let seg_delta = full.map_at(0.5).unwrap() - base.map_at(0.5).unwrap();
    let ok = ds_ok && frame_delta >= 0.05 && seg_delta >= 0.05 && r.elapsed < Duration::from_secs(600);
    verdict(
        4,
        "fsn vs kernel-1 baseline",
        ok,
        &format!(
            "frame mAP {:.4} vs {:.4} (+{:.1} pts), mAP@0.5 {:.4} vs {:.4} (+{:.1} pts)",
            full.frame_map,
            base.frame_map,
            100.0 * frame_delta,
            full.map_at(0.5).unwrap(),
            base.map_at(0.5).unwrap(),
            100.0 * seg_delta
        ),
        r.elapsed,
    );
}

#[test]
fn criterion_5_max_vs_average_pooling() {
    let t = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mut run = RunConfig::from_file(&config_path("ablation_weak.conf")).unwrap();
    run.out_dir = dir.path().to_path_buf();
    cmd_synth(&run).unwrap();
    let ds = load_dataset(&run.data_path()).unwrap();
    let (c, _) = ablate_weak(&ds, &run).unwrap();
    let elapsed = t.elapsed();
    let (gmp, gap) = (c.reports[0].map_at(0.3).unwrap(), c.reports[1].map_at(0.3).unwrap());
    let ok = run.synth.instance_density <= 0.15 && gmp - gap >= 0.02 && elapsed < Duration::from_secs(600);
    verdict(
        5,
        "weak head gmp vs gap",
        ok,
        &format!("mAP@0.3 gmp {gmp:.4} vs gap {gap:.4} (+{:.1} pts)", 100.0 * (gmp - gap)),
        elapsed,
    );
}

#[test]
fn criterion_6_single_instance_smoke() {
    let r = strong_run();
    let t = Instant::now();
    let Model::Fsn(head) = &r.fsn else { panic!("expected the full head") };
    let synth = r.run.synth_config();
    let mut failures = Vec::new();
    let mut ious = Vec::new();
    for class_id in 1..=synth.num_classes {
        let (video, gt) = synth_single_instance(&synth, class_id, None, 9000 + class_id as u64).unwrap();
        let preds = localize_strong(head, std::slice::from_ref(&video), 0.5).unwrap();
        let top = preds
            .iter()
            .fold(None::<&SegmentPrediction>, |best, p| match best {
                Some(b) if b.confidence >= p.confidence => Some(b),
                _ => Some(p),
            });
        let iou = top.map_or(0.0, |p| temporal_iou((p.start, p.end), (gt.start, gt.end)).unwrap());
        ious.push(iou);
        if iou < 0.5 {
            failures.push(format!("class {class_id}: top {top:?} vs gt {gt:?}"));
        }
    }

    // Prediction run log must echo the suppression rule.
    let mut run = r.run.clone();
    run.model_file = PathBuf::from("criterion6.fsn");
    run.predictions_file = PathBuf::from("criterion6.tsv");
    run.tracks_file = PathBuf::from("criterion6.fsnt");
    save_model(&r.fsn, &run.model_path()).unwrap();
    let preds = cmd_predict(&run).unwrap();
    let log = std::fs::read_to_string(run.out_dir.join(PREDICT_LOG_FILE)).unwrap();
    let echo_ok = log.lines().any(|l| l == "eval_iou_for_nms = 0.5") && log.lines().any(|l| l == "nms_iou = 0.4");
    if !echo_ok {
        failures.push("prediction log lacks `eval_iou_for_nms = 0.5` / `nms_iou = 0.4`".into());
    }
    let on_disk = load_predictions(&run.predictions_path()).unwrap();
    if on_disk.len() != preds.len() || preds.is_empty() {
        failures.push(format!("{} predictions written, {} returned", on_disk.len(), preds.len()));
    }

    let ok = failures.is_empty();
    let detail = if ok {
        format!("top-confidence IoU per class {ious:.3?}; log echoes nms_iou = 0.4 for eval IoU 0.5")
    } else {
        failures.join("; ")
    };
    verdict(6, "single-instance localization", ok, &detail, t.elapsed());
}

#[test]
fn criterion_7_determinism() {
    let t = Instant::now();
    let run_once = |dir: &Path| -> RunConfig {
        let mut run = RunConfig::default();
        for (k, v) in [
            ("num_videos", "10"),
            ("num_test", "3"),
            ("frames_per_video", "300"),
            ("hidden_channels", "32"),
            ("iterations", "100"),
        ] {
            run.set(k, v).unwrap();
        }
        run.out_dir = dir.to_path_buf();
        cmd_synth(&run).unwrap();
        cmd_train(&run).unwrap();
        cmd_predict(&run).unwrap();
        cmd_eval(&run).unwrap();
        run
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = run_once(a.path());
    let rb = run_once(b.path());
    let mut differing = Vec::new();
    let files = |r: &RunConfig| {
        vec![
            r.model_path(),
            r.predictions_path(),
            r.tracks_path(),
            r.report_path(),
            r.train_log_path(),
        ]
    };
    for (pa, pb) in files(&ra).into_iter().zip(files(&rb)) {
        if std::fs::read(&pa).unwrap() != std::fs::read(&pb).unwrap() {
            differing.push(pa.file_name().unwrap().to_string_lossy().into_owned());
        }
    }
    let ok = differing.is_empty();
    let detail = if ok {
        "model, predictions, tracks, report and loss log byte-identical".to_string()
    } else {
        format!("differing: {}", differing.join(", "))
    };
    verdict(7, "determinism", ok, &detail, t.elapsed());
}
