//! Sliding inference over whole videos and conversion of frame score tracks
//! into scored segments.

pub mod grouping;
pub mod io;
pub mod nms;

use rayon::prelude::*;

use crate::data::{snippet_centers, weak_predict_features, VideoFeatures};
use crate::error::{FsnError, Result};
use crate::model::{fsn_forward, wfsn_forward_predict, FrameHead, WfsnHead};
use crate::nncore::{bilinear_upsample_1d, SeqTensor};

pub use grouping::{grouping_thresholds, multi_threshold_group, threshold_group};
pub use io::{
    load_predictions, load_tracks, parse_predictions, read_tracks, write_predictions, write_tracks,
    PREDICTION_HEADER,
};
pub use nms::{nms, temporal_iou};

/// Tolerance on row sums of a score track.
pub const ROW_SUM_TOL: f64 = 1e-6;

/// Column layout of a score track.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScoreLayout {
    /// Column 0 is background, column `k` is class `k` (strong heads).
    WithBackground,
    /// Column `k - 1` is class `k` (weak heads).
    ActionsOnly,
}

impl ScoreLayout {
    pub fn code(self) -> u8 {
        match self {
            ScoreLayout::WithBackground => 1,
            ScoreLayout::ActionsOnly => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(ScoreLayout::WithBackground),
            2 => Some(ScoreLayout::ActionsOnly),
            _ => None,
        }
    }
}

/// Per-frame class probabilities of one video.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameScoreTrack {
    pub video_id: String,
    scores: SeqTensor,
    layout: ScoreLayout,
}

impl FrameScoreTrack {
    /// Rejects tracks whose rows are not probability vectors.
    pub fn new(video_id: impl Into<String>, scores: SeqTensor, layout: ScoreLayout) -> Result<Self> {
        let video_id = video_id.into();
        let min_cols = if layout == ScoreLayout::WithBackground { 2 } else { 1 };
        if scores.channels() < min_cols {
            return Err(FsnError::shape(format!(
                "track `{video_id}` has {} columns",
                scores.channels()
            )));
        }
        for (t, row) in scores.rows().enumerate() {
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL || row.iter().any(|v| *v < 0.0) {
                return Err(FsnError::invalid(format!(
                    "track `{video_id}` row {t} is not a distribution (sum {sum})"
                )));
            }
        }
        Ok(Self {
            video_id,
            scores,
            layout,
        })
    }

    pub fn scores(&self) -> &SeqTensor {
        &self.scores
    }

    pub fn layout(&self) -> ScoreLayout {
        self.layout
    }

    pub fn frame_count(&self) -> usize {
        self.scores.len()
    }

    pub fn num_classes(&self) -> usize {
        match self.layout {
            ScoreLayout::WithBackground => self.scores.channels() - 1,
            ScoreLayout::ActionsOnly => self.scores.channels(),
        }
    }

    /// Scores of action class `class_id` (1-based) over time.
    pub fn class_scores(&self, class_id: usize) -> Vec<f64> {
        assert!(
            (1..=self.num_classes()).contains(&class_id),
            "class {class_id} outside 1..={}",
            self.num_classes()
        );
        let col = match self.layout {
            ScoreLayout::WithBackground => class_id,
            ScoreLayout::ActionsOnly => class_id - 1,
        };
        self.scores.channel(col)
    }
}

/// One scored temporal segment `[start, end)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentPrediction {
    pub video_id: String,
    pub start: usize,
    pub end: usize,
    pub class_id: usize,
    pub confidence: f64,
}

/// How weak-head position scores are spread over frames.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum WeakExpansion {
    /// Every frame takes the scores of the position whose span contains it.
    #[default]
    Nearest,
    /// Endpoint-aligned linear interpolation between positions.
    Bilinear,
}

impl std::str::FromStr for WeakExpansion {
    type Err = FsnError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nearest" => Ok(WeakExpansion::Nearest),
            "bilinear" => Ok(WeakExpansion::Bilinear),
            other => Err(FsnError::invalid(format!("unknown expansion `{other}`"))),
        }
    }
}

/// Suppression threshold used for a given evaluation IoU.
pub fn nms_threshold(eval_iou: f64) -> f64 {
    (eval_iou - 0.1).max(0.0)
}

/// Runs the head over consecutive non-overlapping clip windows. The last
/// window is padded by repeating the final frame and its output truncated.
pub fn slide_predict<H: FrameHead + ?Sized>(head: &H, video: &VideoFeatures) -> Result<FrameScoreTrack> {
    let config = head.config();
    let frames = video.frame_count();
    if frames < config.snippet_len {
        return Err(FsnError::invalid(format!(
            "video `{}` has {frames} frames, fewer than the snippet length {}",
            video.video_id, config.snippet_len
        )));
    }
    let clip = config.clip_len;
    let mut data = Vec::with_capacity(frames * (config.num_classes + 1));
    for start in (0..frames).step_by(clip) {
        let centers: Vec<usize> = snippet_centers(start, clip, config.snippet_len)
            .into_iter()
            .map(|f| f.min(frames - 1))
            .collect();
        let window = fsn_forward(&video.features.gather_rows(&centers)?, head, clip)?;
        let keep = clip.min(frames - start);
        data.extend_from_slice(&window.as_slice()[..keep * window.channels()]);
    }
    let scores = SeqTensor::new(frames, config.num_classes + 1, data)?;
    FrameScoreTrack::new(video.video_id.clone(), scores, ScoreLayout::WithBackground)
}

/// Per-frame weak-head scores. `m` is clamped to the frame count.
pub fn weak_track(
    head: &WfsnHead,
    video: &VideoFeatures,
    m: usize,
    expansion: WeakExpansion,
) -> Result<FrameScoreTrack> {
    let frames = video.frame_count();
    if frames == 0 {
        return Err(FsnError::invalid(format!("video `{}` is empty", video.video_id)));
    }
    let positions = wfsn_forward_predict(&weak_predict_features(video, m)?, head)?;
    let scores = match expansion {
        WeakExpansion::Nearest => {
            let m = positions.len();
            let owner: Vec<usize> = (0..frames).map(|t| ((t + 1) * m - 1) / frames).collect();
            positions.gather_rows(&owner)?
        }
        WeakExpansion::Bilinear => bilinear_upsample_1d(&positions, frames)?,
    };
    FrameScoreTrack::new(video.video_id.clone(), scores, ScoreLayout::ActionsOnly)
}

/// Score tracks of every video, in input order.
pub fn strong_tracks<H: FrameHead + Sync + ?Sized>(
    head: &H,
    videos: &[VideoFeatures],
) -> Result<Vec<FrameScoreTrack>> {
    videos.par_iter().map(|v| slide_predict(head, v)).collect()
}

pub fn weak_tracks(
    head: &WfsnHead,
    videos: &[VideoFeatures],
    m: usize,
    expansion: WeakExpansion,
) -> Result<Vec<FrameScoreTrack>> {
    videos
        .par_iter()
        .map(|v| weak_track(head, v, m, expansion))
        .collect()
}

/// Grouping and per-class suppression of a set of tracks; output sorted by
/// video, class, start and end.
pub fn segments_from_tracks(tracks: &[FrameScoreTrack], eval_iou: f64) -> Vec<SegmentPrediction> {
    let threshold = nms_threshold(eval_iou);
    let mut out: Vec<SegmentPrediction> = tracks
        .par_iter()
        .flat_map_iter(|track| {
            (1..=track.num_classes())
                .flat_map(|k| nms(&multi_threshold_group(track, k), threshold))
                .collect::<Vec<_>>()
        })
        .collect();
    sort_predictions(&mut out);
    out
}

/// Deterministic order: video, class, start, end.
pub fn sort_predictions(preds: &mut [SegmentPrediction]) {
    preds.sort_by(|a, b| {
        a.video_id
            .cmp(&b.video_id)
            .then(a.class_id.cmp(&b.class_id))
            .then(a.start.cmp(&b.start))
            .then(a.end.cmp(&b.end))
            .then(b.confidence.total_cmp(&a.confidence))
    });
}

pub fn localize_strong<H: FrameHead + Sync + ?Sized>(
    head: &H,
    videos: &[VideoFeatures],
    eval_iou: f64,
) -> Result<Vec<SegmentPrediction>> {
    Ok(segments_from_tracks(&strong_tracks(head, videos)?, eval_iou))
}

pub fn localize_weak(
    head: &WfsnHead,
    videos: &[VideoFeatures],
    eval_iou: f64,
    m: usize,
) -> Result<Vec<SegmentPrediction>> {
    Ok(segments_from_tracks(
        &weak_tracks(head, videos, m, WeakExpansion::Nearest)?,
        eval_iou,
    ))
}
