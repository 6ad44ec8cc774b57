use std::collections::BTreeMap;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::annotations::{frame_labels, GroundTruthSegment};
use crate::data::features::VideoFeatures;
use crate::error::{FsnError, Result};
use crate::nncore::SeqTensor;

/// A window is kept only if at least this many of its frames are action frames.
pub const MIN_ACTION_FRAMES: usize = 5;

/// One strongly supervised training window.
#[derive(Clone, Debug, PartialEq)]
pub struct ClipSample {
    pub video_id: String,
    /// First frame of the window in the source video.
    pub start: usize,
    /// Center-frame descriptors of the `N` snippets, `N x D`.
    pub features: SeqTensor,
    /// Class id of each of the `T` frames, background = 0.
    pub labels: Vec<usize>,
}

impl ClipSample {
    pub fn action_frames(&self) -> usize {
        self.labels.iter().filter(|l| **l > 0).count()
    }

    /// Most frequent non-background class; ties go to the lower class id.
    pub fn majority_class(&self) -> Option<usize> {
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for &l in self.labels.iter().filter(|l| **l > 0) {
            *counts.entry(l).or_default() += 1;
        }
        counts
            .into_iter()
            .fold(None, |best: Option<(usize, usize)>, (k, c)| match best {
                Some((_, bc)) if bc >= c => best,
                _ => Some((k, c)),
            })
            .map(|(k, _)| k)
    }
}

/// Frame indices of the snippet centers of a window starting at `start`.
pub fn snippet_centers(start: usize, clip_len: usize, snippet_len: usize) -> Vec<usize> {
    (0..clip_len / snippet_len)
        .map(|i| start + i * snippet_len + snippet_len / 2)
        .collect()
}

/// Slides a `clip_len` window with `stride` over the video and keeps windows
/// holding at least [`MIN_ACTION_FRAMES`] action frames.
pub fn make_clips(
    video: &VideoFeatures,
    gt: &[GroundTruthSegment],
    clip_len: usize,
    snippet_len: usize,
    stride: usize,
) -> Result<Vec<ClipSample>> {
    if snippet_len == 0 || clip_len == 0 || clip_len % snippet_len != 0 {
        return Err(FsnError::invalid(format!(
            "clip length {clip_len} must be a positive multiple of snippet length {snippet_len}"
        )));
    }
    if stride == 0 {
        return Err(FsnError::invalid("clip stride must be positive"));
    }
    let frames = video.frame_count();
    if frames < clip_len {
        warn!(
            "video `{}` has {frames} frames, shorter than the {clip_len}-frame clip; skipped",
            video.video_id
        );
        return Ok(Vec::new());
    }
    let own: Vec<GroundTruthSegment> = gt
        .iter()
        .filter(|s| s.video_id == video.video_id)
        .cloned()
        .collect();
    let labels = frame_labels(frames, &own);
    let mut clips = Vec::new();
    for start in (0..=frames - clip_len).step_by(stride) {
        let window = &labels[start..start + clip_len];
        if window.iter().filter(|l| **l > 0).count() < MIN_ACTION_FRAMES {
            continue;
        }
        let features = video
            .features
            .gather_rows(&snippet_centers(start, clip_len, snippet_len))?;
        clips.push(ClipSample {
            video_id: video.video_id.clone(),
            start,
            features,
            labels: window.to_vec(),
        });
    }
    Ok(clips)
}

/// Oversamples clips so every class reaches the count of the largest class.
/// Originals keep their order; extra draws are appended class by class.
pub fn rebalance(clips: Vec<ClipSample>, seed: u64) -> Vec<ClipSample> {
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, c) in clips.iter().enumerate() {
        if let Some(k) = c.majority_class() {
            by_class.entry(k).or_default().push(i);
        }
    }
    let target = by_class.values().map(Vec::len).max().unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut extra = Vec::new();
    for members in by_class.values() {
        for _ in members.len()..target {
            extra.push(clips[members[rng.gen_range(0..members.len())]].clone());
        }
    }
    let mut out = clips;
    out.extend(extra);
    out
}

/// Clip count per majority class.
pub fn class_histogram(clips: &[ClipSample]) -> BTreeMap<usize, usize> {
    let mut h = BTreeMap::new();
    for c in clips {
        if let Some(k) = c.majority_class() {
            *h.entry(k).or_default() += 1;
        }
    }
    h
}
