use std::cmp::Ordering;
use std::collections::BTreeMap;

use crate::error::{FsnError, Result};
use crate::localize::SegmentPrediction;

/// Intersection over union of two half-open frame intervals.
pub fn temporal_iou(a: (usize, usize), b: (usize, usize)) -> Result<f64> {
    if a.0 >= a.1 || b.0 >= b.1 {
        return Err(FsnError::invalid(format!(
            "degenerate interval in IoU: [{}, {}) vs [{}, {})",
            a.0, a.1, b.0, b.1
        )));
    }
    let inter = a.1.min(b.1).saturating_sub(a.0.max(b.0));
    let union = (a.1 - a.0) + (b.1 - b.0) - inter;
    Ok(inter as f64 / union as f64)
}

/// IoU of two segments known to be well formed.
pub(crate) fn segment_iou(a: &SegmentPrediction, b: &SegmentPrediction) -> f64 {
    temporal_iou((a.start, a.end), (b.start, b.end)).unwrap_or(0.0)
}

/// Confidence descending, then earlier start, then shorter.
pub(crate) fn rank_order(a: &SegmentPrediction, b: &SegmentPrediction) -> Ordering {
    b.confidence
        .total_cmp(&a.confidence)
        .then(a.start.cmp(&b.start))
        .then((a.end - a.start).cmp(&(b.end - b.start)))
}

/// Greedy non-maximum suppression, independently per (video, class): keep the
/// best remaining segment and drop every other one overlapping it with
/// IoU above `iou_threshold`.
pub fn nms(segments: &[SegmentPrediction], iou_threshold: f64) -> Vec<SegmentPrediction> {
    let mut groups: BTreeMap<(&str, usize), Vec<&SegmentPrediction>> = BTreeMap::new();
    for s in segments {
        groups.entry((s.video_id.as_str(), s.class_id)).or_default().push(s);
    }
    let mut kept = Vec::new();
    for (_, mut group) in groups {
        group.sort_by(|a, b| rank_order(a, b));
        let mut alive = vec![true; group.len()];
        for i in 0..group.len() {
            if !alive[i] {
                continue;
            }
            kept.push(group[i].clone());
            for j in i + 1..group.len() {
                if alive[j] && segment_iou(group[i], group[j]) > iou_threshold {
                    alive[j] = false;
                }
            }
        }
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn seg(start: usize, end: usize, conf: f64) -> SegmentPrediction {
        SegmentPrediction {
            video_id: "v".into(),
            start,
            end,
            class_id: 1,
            confidence: conf,
        }
    }

    /// Counts frames in both sets directly.
    fn set_iou(a: (usize, usize), b: (usize, usize)) -> f64 {
        let lo = a.0.min(b.0);
        let hi = a.1.max(b.1);
        let (mut inter, mut union) = (0, 0);
        for f in lo..hi {
            let (ia, ib) = (a.0 <= f && f < a.1, b.0 <= f && f < b.1);
            inter += (ia && ib) as usize;
            union += (ia || ib) as usize;
        }
        inter as f64 / union as f64
    }

    #[test]
    fn iou_examples() {
        assert_eq!(temporal_iou((3, 9), (3, 9)).unwrap(), 1.0);
        assert!((temporal_iou((10, 20), (15, 25)).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(temporal_iou((0, 5), (5, 9)).unwrap(), 0.0);
        assert!(temporal_iou((4, 4), (0, 9)).is_err());
    }

    proptest! {
        #[test]
        fn iou_matches_frame_counting(a0 in 0usize..50, la in 1usize..30, b0 in 0usize..50, lb in 1usize..30) {
            let (a, b) = ((a0, a0 + la), (b0, b0 + lb));
            let iou = temporal_iou(a, b).unwrap();
            prop_assert_eq!(iou, set_iou(a, b));
            prop_assert_eq!(iou, temporal_iou(b, a).unwrap());
            prop_assert_eq!(iou == 1.0, a == b);
        }
    }

    #[test]
    fn identical_segments_collapse() {
        let out = nms(&[seg(0, 10, 0.5), seg(0, 10, 0.5)], 0.4);
        assert_eq!(out.len(), 1);
    }

    #[test]
    fn disjoint_segments_survive() {
        let out = nms(&[seg(0, 10, 0.5), seg(20, 30, 0.9), seg(40, 41, 0.1)], 0.0);
        assert_eq!(out.len(), 3);
    }

    #[test]
    fn classes_and_videos_are_independent() {
        let mut other_class = seg(0, 10, 0.4);
        other_class.class_id = 2;
        let mut other_video = seg(0, 10, 0.4);
        other_video.video_id = "w".into();
        let out = nms(&[seg(0, 10, 0.5), other_class, other_video], 0.1);
        assert_eq!(out.len(), 3);
    }

    /// Exhaustive greedy: repeatedly scan every remaining segment for the best
    /// one, then drop everything overlapping it.
    fn oracle(segs: &[SegmentPrediction], th: f64) -> Vec<SegmentPrediction> {
        let mut remaining: Vec<SegmentPrediction> = segs.to_vec();
        let mut kept = Vec::new();
        while !remaining.is_empty() {
            let mut best = 0;
            for i in 1..remaining.len() {
                let (a, b) = (&remaining[i], &remaining[best]);
                let better = a.confidence > b.confidence
                    || (a.confidence == b.confidence
                        && (a.start < b.start || (a.start == b.start && a.end - a.start < b.end - b.start)));
                if better {
                    best = i;
                }
            }
            let top = remaining.remove(best);
            remaining.retain(|s| set_iou((s.start, s.end), (top.start, top.end)) <= th);
            kept.push(top);
        }
        kept
    }

    #[test]
    fn matches_exhaustive_greedy() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..500 {
            let n = rng.gen_range(1..=8);
            let segs: Vec<SegmentPrediction> = (0..n)
                .map(|_| {
                    let s = rng.gen_range(0..30);
                    // Coarse confidences force ties.
                    seg(s, s + rng.gen_range(1..15), rng.gen_range(0..5) as f64 / 4.0)
                })
                .collect();
            let th = [0.0, 0.2, 0.4, 0.6][rng.gen_range(0..4)];
            let out = nms(&segs, th);
            assert_eq!(out, oracle(&segs, th));
            for i in 0..out.len() {
                for j in i + 1..out.len() {
                    assert!(segment_iou(&out[i], &out[j]) <= th);
                }
            }
        }
    }
}
