use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::annotations::GroundTruthSegment;
use crate::data::features::VideoFeatures;
use crate::error::{FsnError, Result};
use crate::nncore::SeqTensor;

pub const DEFAULT_WEAK_SEGMENTS: usize = 100;

/// One weakly supervised sample: `M` sampled frame descriptors and the
/// video-level multi-hot label.
#[derive(Clone, Debug, PartialEq)]
pub struct WeakSample {
    pub video_id: String,
    pub features: SeqTensor,
    /// `video_label[k - 1]` is true iff class `k` occurs in the video.
    pub video_label: Vec<bool>,
}

impl WeakSample {
    pub fn positives(&self) -> usize {
        self.video_label.iter().filter(|b| **b).count()
    }
}

/// Frame range `[i * len / m, (i + 1) * len / m)` covered by position `i`.
pub fn span(i: usize, frame_count: usize, m: usize) -> (usize, usize) {
    (i * frame_count / m, (i + 1) * frame_count / m)
}

/// Multi-hot label of the classes present in `segments`.
pub fn video_label(segments: &[GroundTruthSegment], num_classes: usize) -> Vec<bool> {
    let mut label = vec![false; num_classes];
    for s in segments {
        if (1..=num_classes).contains(&s.class_id) {
            label[s.class_id - 1] = true;
        }
    }
    label
}

/// Splits the video into `m` equal spans and draws one frame uniformly from each.
pub fn make_weak_sample(
    video: &VideoFeatures,
    labels: &[bool],
    m: usize,
    seed: u64,
) -> Result<WeakSample> {
    let frames = video.frame_count();
    if m == 0 || frames < m {
        return Err(FsnError::invalid(format!(
            "video `{}` has {frames} frames, fewer than {m} weak segments",
            video.video_id
        )));
    }
    if !labels.iter().any(|b| *b) {
        return Err(FsnError::Labels(format!(
            "video `{}` has no positive class",
            video.video_id
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks: Vec<usize> = (0..m)
        .map(|i| {
            let (lo, hi) = span(i, frames, m);
            rng.gen_range(lo..hi)
        })
        .collect();
    Ok(WeakSample {
        video_id: video.video_id.clone(),
        features: video.features.gather_rows(&picks)?,
        video_label: labels.to_vec(),
    })
}

/// Deterministic inference input: the center frame of each span. `m` is
/// clamped to the frame count.
pub fn weak_predict_features(video: &VideoFeatures, m: usize) -> Result<SeqTensor> {
    let frames = video.frame_count();
    let m = m.min(frames).max(1);
    let picks: Vec<usize> = (0..m)
        .map(|i| {
            let (lo, hi) = span(i, frames, m);
            lo + (hi - lo) / 2
        })
        .collect();
    video.features.gather_rows(&picks)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn video(frames: usize) -> VideoFeatures {
        VideoFeatures::new("w", SeqTensor::from_fn(frames, 1, |t, _| t as f64))
    }

    #[test]
    fn m_equal_to_frames_picks_every_frame() {
        let s = make_weak_sample(&video(100), &[true], 100, 5).unwrap();
        assert_eq!(s.features.channel(0), (0..100).map(|t| t as f64).collect::<Vec<_>>());
    }

    #[test]
    fn picks_stay_inside_their_span() {
        for seed in 0..10 {
            let frames = 637;
            let s = make_weak_sample(&video(frames), &[false, true], 100, seed).unwrap();
            for i in 0..100 {
                let f = s.features.get(i, 0) as usize;
                let (lo, hi) = span(i, frames, 100);
                assert!(lo <= f && f < hi);
            }
        }
    }

    #[test]
    fn different_seeds_resample() {
        let a = make_weak_sample(&video(5000), &[true], 100, 1).unwrap();
        let b = make_weak_sample(&video(5000), &[true], 100, 2).unwrap();
        let same = (0..100).filter(|&i| a.features.get(i, 0) == b.features.get(i, 0)).count();
        // Each span has 50 frames, so about 2 coincidences are expected.
        assert!(same < 15, "{same} identical picks");
    }

    #[test]
    fn errors() {
        assert!(make_weak_sample(&video(99), &[true], 100, 0).is_err());
        assert!(make_weak_sample(&video(200), &[false], 100, 0).is_err());
    }

    #[test]
    fn labels_from_segments() {
        let segs = [GroundTruthSegment::new("w", 0, 4, 3), GroundTruthSegment::new("w", 5, 9, 1)];
        assert_eq!(video_label(&segs, 3), vec![true, false, true]);
    }

    #[test]
    fn predict_features_use_span_centers() {
        let x = weak_predict_features(&video(1000), 100).unwrap();
        assert_eq!(x.get(0, 0), 5.0);
        assert_eq!(weak_predict_features(&video(30), 100).unwrap().len(), 30);
    }
}
