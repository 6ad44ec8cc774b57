use std::collections::HashSet;

use crate::localize::{FrameScoreTrack, SegmentPrediction};

/// Thresholds `0.0, 0.1, ..., 1.0`.
pub fn grouping_thresholds() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

/// Maximal runs of frames whose class score is strictly above `threshold`.
/// Each run's confidence is its mean class score.
pub fn threshold_group(track: &FrameScoreTrack, class_id: usize, threshold: f64) -> Vec<SegmentPrediction> {
    let scores = track.class_scores(class_id);
    let mut out = Vec::new();
    let mut t = 0;
    while t < scores.len() {
        if scores[t] <= threshold {
            t += 1;
            continue;
        }
        let start = t;
        let mut sum = 0.0;
        while t < scores.len() && scores[t] > threshold {
            sum += scores[t];
            t += 1;
        }
        out.push(SegmentPrediction {
            video_id: track.video_id.clone(),
            start,
            end: t,
            class_id,
            confidence: sum / (t - start) as f64,
        });
    }
    out
}

/// Union of [`threshold_group`] over all grouping thresholds, with exact
/// duplicates (same start, end and class) kept once.
pub fn multi_threshold_group(track: &FrameScoreTrack, class_id: usize) -> Vec<SegmentPrediction> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for th in grouping_thresholds() {
        for seg in threshold_group(track, class_id, th) {
            if seen.insert((seg.start, seg.end)) {
                out.push(seg);
            }
        }
    }
    out
}
