//! Training, prediction and evaluation steps shared by the commands.

use log::{info, warn};

use crate::cli::config::{RunConfig, StrongHead, LOG_EVERY};
use crate::data::{
    make_clips, make_weak_sample, rebalance, shuffled_indices, video_label, AnnotationSet, ClipSample,
    VideoFeatures, WeakSample,
};
use crate::error::{FsnError, Result};
use crate::eval::{evaluate, frame_level_map, segment_level_map, EvalConfig, EvalGroundTruth, EvalReport, SegmentLevelResult};
use crate::localize::{segments_from_tracks, strong_tracks, weak_tracks, FrameScoreTrack, SegmentPrediction};
use crate::model::{fsn_train_step, wfsn_train_step, AblationHead, FrameHead, FsnHead, Model, WfsnHead};
use crate::nncore::{OptimizerState, Pooling};

/// `(step, mean loss over the preceding LOG_EVERY steps)`.
pub type LossLog = Vec<(usize, f64)>;

/// Derived stream seed for `(epoch, index)` under a run seed.
pub fn mix_seed(seed: u64, epoch: u64, index: u64) -> u64 {
    let mut z = seed ^ epoch.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ index.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Training clips of every video, oversampled to balance classes.
pub fn build_clips(
    videos: &[VideoFeatures],
    annotations: &AnnotationSet,
    run: &RunConfig,
) -> Result<Vec<ClipSample>> {
    let mut clips = Vec::new();
    for v in videos {
        let gt = annotations.for_video(&v.video_id);
        clips.extend(make_clips(v, &gt, run.clip_len, run.snippet_len, run.clip_stride)?);
    }
    if clips.is_empty() {
        return Err(FsnError::invalid(
            "no training clip has enough action frames; check the dataset and clip settings",
        ));
    }
    let n = clips.len();
    let clips = rebalance(clips, run.seed);
    info!("{n} clips, {} after class rebalancing", clips.len());
    Ok(clips)
}

struct Batcher {
    len: usize,
    batch: usize,
    seed: u64,
    epoch: u64,
    order: Vec<usize>,
    cursor: usize,
}

impl Batcher {
    fn new(len: usize, batch: usize, seed: u64) -> Self {
        Self {
            len,
            batch: batch.min(len).max(1),
            seed,
            epoch: 0,
            order: shuffled_indices(len, mix_seed(seed, 0, u64::MAX)),
            cursor: 0,
        }
    }

    /// Indices of the next batch and whether a new epoch just started.
    fn next(&mut self) -> (&[usize], bool) {
        let mut fresh = false;
        if self.cursor + self.batch > self.len {
            self.epoch += 1;
            self.order = shuffled_indices(self.len, mix_seed(self.seed, self.epoch, u64::MAX));
            self.cursor = 0;
            fresh = true;
        }
        let s = &self.order[self.cursor..self.cursor + self.batch];
        self.cursor += self.batch;
        (s, fresh)
    }
}

fn optimizer(run: &RunConfig) -> Result<OptimizerState> {
    OptimizerState::new(run.learning_rate, run.momentum, run.weight_decay)
}

fn record(log: &mut LossLog, window: &mut f64, step: usize, loss: f64) {
    *window += loss;
    if (step + 1) % LOG_EVERY == 0 {
        log.push((step + 1, *window / LOG_EVERY as f64));
        info!("step {:>6}  loss {:.6}", step + 1, *window / LOG_EVERY as f64);
        *window = 0.0;
    }
}

fn train_frame_head<H: FrameHead>(mut head: H, clips: &[ClipSample], run: &RunConfig) -> Result<(H, LossLog)> {
    let mut opt = optimizer(run)?;
    let mut batcher = Batcher::new(clips.len(), run.batch_size, run.seed);
    let mut log = LossLog::new();
    let mut window = 0.0;
    for step in 0..run.iterations {
        let (idx, _) = batcher.next();
        let batch: Vec<ClipSample> = idx.iter().map(|&i| clips[i].clone()).collect();
        let loss = fsn_train_step(&batch, &mut head, &mut opt)?;
        record(&mut log, &mut window, step, loss);
    }
    Ok((head, log))
}

/// Trains a strong head (full or baseline) on the training videos.
pub fn train_strong(
    videos: &[VideoFeatures],
    annotations: &AnnotationSet,
    run: &RunConfig,
    kind: StrongHead,
) -> Result<(Model, LossLog)> {
    let dim = feature_dim(videos)?;
    let config = run.model_config(annotations.num_classes(), dim)?;
    let clips = build_clips(videos, annotations, run)?;
    info!(
        "training {kind} head: K={}, D={dim}, {} iterations, batch {}",
        config.num_classes, run.iterations, run.batch_size
    );
    Ok(match kind {
        StrongHead::Fsn => {
            let (h, log) = train_frame_head(FsnHead::init(config, run.seed)?, &clips, run)?;
            (Model::Fsn(h), log)
        }
        StrongHead::Ablation => {
            let (h, log) = train_frame_head(AblationHead::init(config, run.seed)?, &clips, run)?;
            (Model::Ablation(h), log)
        }
    })
}

fn feature_dim(videos: &[VideoFeatures]) -> Result<usize> {
    let first = videos
        .first()
        .ok_or_else(|| FsnError::invalid("no training videos"))?;
    crate::data::features::check_consistent_dim(videos)?;
    Ok(first.dim())
}

/// Trains the weak head; each epoch redraws one frame per span of every video.
pub fn train_weak(
    videos: &[VideoFeatures],
    annotations: &AnnotationSet,
    run: &RunConfig,
    pooling: Pooling,
) -> Result<(WfsnHead, LossLog)> {
    let dim = feature_dim(videos)?;
    let k = annotations.num_classes();
    let config = run.model_config(k, dim)?;
    let mut labeled = Vec::new();
    for v in videos {
        if v.frame_count() < run.weak_segments {
            return Err(FsnError::invalid(format!(
                "video `{}` has {} frames, fewer than {} weak segments",
                v.video_id,
                v.frame_count(),
                run.weak_segments
            )));
        }
        let label = video_label(&annotations.for_video(&v.video_id), k);
        if label.iter().any(|b| *b) {
            labeled.push((v, label));
        } else {
            warn!("video `{}` has no action instance; skipped for weak training", v.video_id);
        }
    }
    if labeled.is_empty() {
        return Err(FsnError::invalid("no weakly labeled training video"));
    }
    info!(
        "training weak head ({pooling}): K={k}, D={dim}, M={}, {} videos",
        run.weak_segments,
        labeled.len()
    );
    let draw = |epoch: u64| -> Result<Vec<WeakSample>> {
        labeled
            .iter()
            .enumerate()
            .map(|(i, (v, label))| make_weak_sample(v, label, run.weak_segments, mix_seed(run.seed, epoch, i as u64)))
            .collect()
    };
    let mut head = WfsnHead::init(config, pooling, run.seed)?;
    let mut opt = optimizer(run)?;
    let mut batcher = Batcher::new(labeled.len(), run.batch_size, run.seed);
    let mut samples = draw(0)?;
    let mut log = LossLog::new();
    let mut window = 0.0;
    for step in 0..run.iterations {
        let (idx, fresh) = batcher.next();
        let idx = idx.to_vec();
        if fresh {
            samples = draw(batcher.epoch)?;
        }
        let batch: Vec<WeakSample> = idx.iter().map(|&i| samples[i].clone()).collect();
        let loss = wfsn_train_step(&batch, &mut head, &mut opt)?;
        record(&mut log, &mut window, step, loss);
    }
    Ok((head, log))
}

/// Score tracks and suppressed segments for every test video.
pub fn predict(
    model: &Model,
    videos: &[VideoFeatures],
    run: &RunConfig,
) -> Result<(Vec<FrameScoreTrack>, Vec<SegmentPrediction>)> {
    let tracks = match model {
        Model::Fsn(h) => strong_tracks(h, videos)?,
        Model::Ablation(h) => strong_tracks(h, videos)?,
        Model::Wfsn(h) => weak_tracks(h, videos, run.weak_segments, run.weak_expansion)?,
    };
    let preds = segments_from_tracks(&tracks, run.predict_iou);
    Ok((tracks, preds))
}

/// Evaluation of one prediction run against the test ground truth.
pub fn evaluate_run(
    tracks: &[FrameScoreTrack],
    preds: &[SegmentPrediction],
    videos: &[VideoFeatures],
    annotations: &AnnotationSet,
    config: &EvalConfig,
) -> Result<EvalReport> {
    let gt = EvalGroundTruth::new(annotations, &crate::data::features::frame_counts(videos));
    evaluate(tracks, preds, &gt, config)
}

/// Like [`evaluate_run`], but the segments scored at each IoU threshold are
/// regenerated from the tracks with that threshold's suppression setting.
pub fn evaluate_per_threshold(
    tracks: &[FrameScoreTrack],
    videos: &[VideoFeatures],
    annotations: &AnnotationSet,
    config: &EvalConfig,
) -> Result<EvalReport> {
    config.validate()?;
    let gt = EvalGroundTruth::new(annotations, &crate::data::features::frame_counts(videos));
    let mut segment = SegmentLevelResult {
        thresholds: Vec::new(),
        per_class: Vec::new(),
        map: Vec::new(),
    };
    for &th in &config.iou_thresholds {
        let preds = segments_from_tracks(tracks, th);
        let single = EvalConfig::new(vec![th], config.num_classes)?;
        let r = segment_level_map(&preds, &gt.segments, &gt.videos(), &single)?;
        segment.thresholds.push(th);
        segment.per_class.extend(r.per_class);
        segment.map.extend(r.map);
    }
    let frame = frame_level_map(tracks, &gt.labels, config.num_classes)?;
    let class_names = if gt.class_names.len() == config.num_classes {
        gt.class_names.clone()
    } else {
        (1..=config.num_classes).map(|k| format!("class_{k}")).collect()
    };
    Ok(EvalReport::from_results(class_names, &segment, &frame))
}
