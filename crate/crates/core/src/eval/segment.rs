use std::collections::{BTreeMap, BTreeSet};

use crate::data::GroundTruthSegment;
use crate::error::{FsnError, Result};
use crate::eval::ap::{average_precision, rank};
use crate::eval::frame::mean;
use crate::eval::EvalConfig;
use crate::localize::{temporal_iou, SegmentPrediction};

#[derive(Clone, Debug, PartialEq)]
pub struct SegmentLevelResult {
    pub thresholds: Vec<f64>,
    /// `per_class[i][k - 1]`: AP of class `k` at `thresholds[i]`.
    pub per_class: Vec<Vec<f64>>,
    pub map: Vec<f64>,
}

/// Labels the predictions of one class as true or false positives, in
/// ranked order. Each prediction takes the unmatched ground-truth segment of
/// its video with the highest IoU (earliest on ties) and is a hit iff that
/// IoU is strictly above `threshold`.
pub fn match_class(
    preds: &[&SegmentPrediction],
    gt: &[&GroundTruthSegment],
    threshold: f64,
) -> Result<Vec<(f64, bool)>> {
    Ok(assign(preds, gt, threshold)?
        .into_iter()
        .map(|(c, g)| (c, g.is_some()))
        .collect())
}

/// [`match_class`] with the index of the matched ground truth.
fn assign(
    preds: &[&SegmentPrediction],
    gt: &[&GroundTruthSegment],
    threshold: f64,
) -> Result<Vec<(f64, Option<usize>)>> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].confidence.total_cmp(&preds[a].confidence));
    let mut by_video: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, g) in gt.iter().enumerate() {
        by_video.entry(g.video_id.as_str()).or_default().push(i);
    }
    let mut matched = vec![false; gt.len()];
    let mut out = Vec::with_capacity(preds.len());
    for i in order {
        let p = preds[i];
        let mut best: Option<(usize, f64)> = None;
        for &g in by_video.get(p.video_id.as_str()).map(Vec::as_slice).unwrap_or(&[]) {
            if matched[g] {
                continue;
            }
            let iou = temporal_iou((p.start, p.end), (gt[g].start, gt[g].end))?;
            if best.map_or(true, |(_, b)| iou > b) {
                best = Some((g, iou));
            }
        }
        let hit = match best {
            Some((g, iou)) if iou > threshold => {
                matched[g] = true;
                Some(g)
            }
            _ => None,
        };
        out.push((p.confidence, hit));
    }
    Ok(out)
}

/// Segment AP per class and threshold. Predictions referencing a video
/// outside `videos` are rejected.
pub fn segment_level_map(
    preds: &[SegmentPrediction],
    gt: &[GroundTruthSegment],
    videos: &BTreeSet<String>,
    config: &EvalConfig,
) -> Result<SegmentLevelResult> {
    config.validate()?;
    for p in preds {
        if !videos.contains(&p.video_id) {
            return Err(FsnError::UnknownVideo(p.video_id.clone()));
        }
        if p.start >= p.end {
            return Err(FsnError::invalid(format!(
                "prediction [{}, {}) in `{}` is empty",
                p.start, p.end, p.video_id
            )));
        }
    }
    let k = config.num_classes;
    let preds_of: Vec<Vec<&SegmentPrediction>> = (1..=k)
        .map(|c| preds.iter().filter(|p| p.class_id == c).collect())
        .collect();
    let gt_of: Vec<Vec<&GroundTruthSegment>> = (1..=k)
        .map(|c| gt.iter().filter(|g| g.class_id == c).collect())
        .collect();
    let mut per_class = Vec::with_capacity(config.iou_thresholds.len());
    for &th in &config.iou_thresholds {
        let row = (0..k)
            .map(|c| average_precision(&match_class(&preds_of[c], &gt_of[c], th)?, gt_of[c].len()))
            .collect::<Result<Vec<f64>>>()?;
        per_class.push(row);
    }
    let map = per_class.iter().map(|row| mean(row)).collect();
    Ok(SegmentLevelResult {
        thresholds: config.iou_thresholds.clone(),
        per_class,
        map,
    })
}

/// Ranked `(confidence, hit)` list of one class at one threshold, for
/// precision-recall dumps.
pub fn ranked_matches(
    preds: &[SegmentPrediction],
    gt: &[GroundTruthSegment],
    class_id: usize,
    threshold: f64,
) -> Result<(Vec<(f64, bool)>, usize)> {
    let p: Vec<&SegmentPrediction> = preds.iter().filter(|p| p.class_id == class_id).collect();
    let g: Vec<&GroundTruthSegment> = gt.iter().filter(|g| g.class_id == class_id).collect();
    Ok((rank(&match_class(&p, &g, threshold)?), g.len()))
}
