//! One function per subcommand. Every output goes under the run's output
//! directory and is a deterministic function of the config.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::info;

use crate::cli::config::{AblateMode, RunConfig, StrongHead};
use crate::cli::gradcheck::{run_gradcheck_suite, SuiteReport};
use crate::cli::pipeline::{evaluate_per_threshold, predict, train_strong, train_weak, LossLog};
use crate::data::{load_dataset, synth_generate, write_dataset, Dataset, MANIFEST_FILE};
use crate::error::{FsnError, Result};
use crate::eval::{emit_report, evaluate, write_pr_curves, EvalGroundTruth, EvalReport};
use crate::localize::{
    load_predictions, load_tracks, nms_threshold, write_predictions, write_tracks, ScoreLayout, SegmentPrediction,
};
use crate::model::{load_model, save_model, Model};
use crate::nncore::Pooling;

pub const PREDICT_LOG_FILE: &str = "predict_log.txt";
pub const ABLATION_STRONG_FILE: &str = "ablation_strong.csv";
pub const ABLATION_WEAK_FILE: &str = "ablation_weak.csv";

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| FsnError::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    fs::write(path, text).map_err(|e| FsnError::io(path, e))
}

pub fn encode_loss_log(log: &LossLog) -> String {
    let mut out = String::from("step,loss\n");
    for (step, loss) in log {
        let _ = writeln!(out, "{step},{loss:.8}");
    }
    out
}

fn dataset_dim(ds: &Dataset) -> Result<usize> {
    ds.feature_dim()
        .ok_or_else(|| FsnError::invalid("dataset has no videos"))
}

/// Generates the synthetic dataset into the data directory.
pub fn cmd_synth(run: &RunConfig) -> Result<PathBuf> {
    let dir = run.data_path();
    let ds = synth_generate(&run.synth_config())?;
    write_dataset(&ds, &dir)?;
    info!("wrote {} videos to {}", ds.videos.len(), dir.display());
    Ok(dir)
}

fn save_training(run: &RunConfig, model: &Model, log: &LossLog) -> Result<()> {
    ensure_dir(&run.out_dir)?;
    save_model(model, &run.model_path())?;
    write_text(&run.train_log_path(), &encode_loss_log(log))?;
    info!("saved {} model to {}", model.kind_name(), run.model_path().display());
    Ok(())
}

pub fn cmd_train(run: &RunConfig) -> Result<Model> {
    let ds = load_dataset(&run.data_path())?;
    let (model, log) = train_strong(&ds.train, &ds.annotations, run, run.head)?;
    save_training(run, &model, &log)?;
    Ok(model)
}

pub fn cmd_train_weak(run: &RunConfig) -> Result<Model> {
    let ds = load_dataset(&run.data_path())?;
    let (head, log) = train_weak(&ds.train, &ds.annotations, run, run.pooling)?;
    let model = Model::Wfsn(head);
    save_training(run, &model, &log)?;
    Ok(model)
}

fn predict_log(run: &RunConfig, model: &Model, count: usize) -> String {
    let mut out = run.echo();
    let _ = writeln!(out, "model_kind = {}", model.kind_name());
    let _ = writeln!(out, "eval_iou_for_nms = {}", run.predict_iou);
    let _ = writeln!(out, "nms_iou = {}", nms_threshold(run.predict_iou));
    let _ = writeln!(out, "predictions = {count}");
    out
}

fn run_predict(run: &RunConfig, weak: bool) -> Result<Vec<SegmentPrediction>> {
    let ds = load_dataset(&run.data_path())?;
    let model = load_model(&run.model_path())?;
    if ds.test.is_empty() {
        info!("test split is empty");
    } else {
        model.check_compatible(ds.num_classes(), dataset_dim(&ds)?)?;
    }
    match (&model, weak) {
        (Model::Wfsn(_), true) | (Model::Fsn(_) | Model::Ablation(_), false) => {}
        _ => {
            return Err(FsnError::Config(format!(
                "{} model cannot be used with predict{}",
                model.kind_name(),
                if weak { "-weak" } else { "" }
            )))
        }
    }
    let (tracks, preds) = predict(&model, &ds.test, run)?;
    ensure_dir(&run.out_dir)?;
    write_predictions(&run.predictions_path(), &preds)?;
    write_tracks(&run.tracks_path(), &tracks)?;
    write_text(&run.out_dir.join(PREDICT_LOG_FILE), &predict_log(run, &model, preds.len()))?;
    info!("{} predictions on {} test videos", preds.len(), ds.test.len());
    Ok(preds)
}

pub fn cmd_predict(run: &RunConfig) -> Result<Vec<SegmentPrediction>> {
    run_predict(run, false)
}

pub fn cmd_predict_weak(run: &RunConfig) -> Result<Vec<SegmentPrediction>> {
    run_predict(run, true)
}

/// Scores the stored predictions and tracks against the test ground truth.
pub fn cmd_eval(run: &RunConfig) -> Result<EvalReport> {
    let ds = load_dataset(&run.data_path())?;
    let preds = load_predictions(&run.predictions_path())?;
    let tracks = load_tracks(&run.tracks_path())?;
    let weak = tracks.first().is_some_and(|t| t.layout() == ScoreLayout::ActionsOnly);
    let config = run.eval_config(ds.num_classes(), weak)?;
    let gt = EvalGroundTruth::new(&ds.annotations, &crate::data::features::frame_counts(&ds.test));
    let report = evaluate(&tracks, &preds, &gt, &config)?;
    ensure_dir(&run.out_dir)?;
    emit_report(&report, &run.report_path())?;
    if run.pr_curves {
        write_pr_curves(&run.out_dir.join("pr_curves"), &preds, &gt.segments, &config)?;
    }
    for (t, m) in report.thresholds.iter().zip(&report.segment_map) {
        info!("mAP@{t:.2} = {m:.4}");
    }
    info!("frame-level mAP = {:.4}", report.frame_map);
    Ok(report)
}

/// Two models trained under one budget and seed, evaluated side by side.
#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub names: [String; 2],
    pub reports: [EvalReport; 2],
}

impl Comparison {
    /// `first - second` for frame mAP followed by each threshold's mAP.
    pub fn deltas(&self) -> Vec<f64> {
        let [a, b] = &self.reports;
        std::iter::once(a.frame_map - b.frame_map)
            .chain(a.segment_map.iter().zip(&b.segment_map).map(|(x, y)| x - y))
            .collect()
    }

    pub fn encode(&self) -> String {
        let mut out = String::from("model,frame_map");
        for t in &self.reports[0].thresholds {
            let _ = write!(out, ",map@{t:.2}");
        }
        out.push('\n');
        for (name, r) in self.names.iter().zip(&self.reports) {
            out.push_str(name);
            for v in std::iter::once(&r.frame_map).chain(&r.segment_map) {
                let _ = write!(out, ",{v:.4}");
            }
            out.push('\n');
        }
        out.push_str("delta");
        for v in self.deltas() {
            let _ = write!(out, ",{v:.4}");
        }
        out.push('\n');
        out
    }
}

/// Full FSN against the kernel-1 baseline on the test split of `ds`.
pub fn ablate_strong(ds: &Dataset, run: &RunConfig) -> Result<(Comparison, [Model; 2])> {
    let config = run.eval_config(ds.num_classes(), false)?;
    let mut models = Vec::new();
    let mut reports = Vec::new();
    for kind in [StrongHead::Fsn, StrongHead::Ablation] {
        let (model, _) = train_strong(&ds.train, &ds.annotations, run, kind)?;
        let (tracks, _) = predict(&model, &ds.test, run)?;
        reports.push(evaluate_per_threshold(&tracks, &ds.test, &ds.annotations, &config)?);
        models.push(model);
    }
    let [fa, fb]: [Model; 2] = models.try_into().map_err(|_| FsnError::invalid("model count"))?;
    let [ra, rb]: [EvalReport; 2] = reports.try_into().map_err(|_| FsnError::invalid("report count"))?;
    Ok((
        Comparison {
            names: ["fsn".into(), "ablation".into()],
            reports: [ra, rb],
        },
        [fa, fb],
    ))
}

/// Weak head with max pooling against average pooling.
pub fn ablate_weak(ds: &Dataset, run: &RunConfig) -> Result<(Comparison, [Model; 2])> {
    let config = run.eval_config(ds.num_classes(), true)?;
    let mut models = Vec::new();
    let mut reports = Vec::new();
    for pooling in [Pooling::Gmp, Pooling::Gap] {
        let (head, _) = train_weak(&ds.train, &ds.annotations, run, pooling)?;
        let model = Model::Wfsn(head);
        let (tracks, _) = predict(&model, &ds.test, run)?;
        reports.push(evaluate_per_threshold(&tracks, &ds.test, &ds.annotations, &config)?);
        models.push(model);
    }
    let [fa, fb]: [Model; 2] = models.try_into().map_err(|_| FsnError::invalid("model count"))?;
    let [ra, rb]: [EvalReport; 2] = reports.try_into().map_err(|_| FsnError::invalid("report count"))?;
    Ok((
        Comparison {
            names: ["wfsn_gmp".into(), "wfsn_gap".into()],
            reports: [ra, rb],
        },
        [fa, fb],
    ))
}

/// Runs the configured comparisons, synthesizing the dataset first if the
/// data directory has none.
pub fn cmd_ablate(run: &RunConfig) -> Result<Vec<Comparison>> {
    if !run.data_path().join(MANIFEST_FILE).exists() {
        cmd_synth(run)?;
    }
    let ds = load_dataset(&run.data_path())?;
    ensure_dir(&run.out_dir)?;
    let mut out = Vec::new();
    if matches!(run.ablate, AblateMode::Strong | AblateMode::Both) {
        let (c, _) = ablate_strong(&ds, run)?;
        write_text(&run.out_dir.join(ABLATION_STRONG_FILE), &c.encode())?;
        print!("{}", c.encode());
        out.push(c);
    }
    if matches!(run.ablate, AblateMode::Weak | AblateMode::Both) {
        let (c, _) = ablate_weak(&ds, run)?;
        write_text(&run.out_dir.join(ABLATION_WEAK_FILE), &c.encode())?;
        print!("{}", c.encode());
        out.push(c);
    }
    Ok(out)
}

/// Runs the gradient suite; fails when any check or the control misbehaves.
pub fn cmd_gradcheck(run: &RunConfig) -> Result<SuiteReport> {
    let report = run_gradcheck_suite(run.gradcheck_seeds, run.gradcheck_tolerance)?;
    print!("{}", report.render());
    if !report.passed() {
        return Err(FsnError::GradientCheck("gradient check failed".into()));
    }
    Ok(report)
}
