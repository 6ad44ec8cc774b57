//! Frame-level and segment-level average precision.

pub mod ap;
pub mod frame;
pub mod report;
pub mod segment;

use std::collections::{BTreeMap, BTreeSet};

use crate::data::{frame_labels, AnnotationSet, GroundTruthSegment};
use crate::error::{FsnError, Result};
use crate::localize::{FrameScoreTrack, SegmentPrediction};

pub use ap::{average_precision, precision_recall};
pub use frame::{frame_level_map, FrameLevelResult};
pub use report::{emit_report, encode_report, parse_report, write_pr_curves, EvalReport};
pub use segment::{match_class, segment_level_map, SegmentLevelResult};

pub const STRONG_IOU_THRESHOLDS: [f64; 5] = [0.3, 0.4, 0.5, 0.6, 0.7];
pub const WEAK_IOU_THRESHOLDS: [f64; 5] = [0.1, 0.2, 0.3, 0.4, 0.5];

#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    /// Ascending, each in `(0, 1]`.
    pub iou_thresholds: Vec<f64>,
    pub num_classes: usize,
}

impl EvalConfig {
    pub fn new(iou_thresholds: Vec<f64>, num_classes: usize) -> Result<Self> {
        let c = Self {
            iou_thresholds,
            num_classes,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn strong(num_classes: usize) -> Self {
        Self {
            iou_thresholds: STRONG_IOU_THRESHOLDS.to_vec(),
            num_classes,
        }
    }

    pub fn weak(num_classes: usize) -> Self {
        Self {
            iou_thresholds: WEAK_IOU_THRESHOLDS.to_vec(),
            num_classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iou_thresholds.is_empty() {
            return Err(FsnError::Config("no IoU thresholds".into()));
        }
        if self.iou_thresholds.iter().any(|t| !(*t > 0.0 && *t <= 1.0)) {
            return Err(FsnError::Config(format!(
                "IoU thresholds {:?} must lie in (0, 1]",
                self.iou_thresholds
            )));
        }
        if self.iou_thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(FsnError::Config(format!(
                "IoU thresholds {:?} must be strictly ascending",
                self.iou_thresholds
            )));
        }
        if self.num_classes == 0 {
            return Err(FsnError::Config("num_classes must be at least 1".into()));
        }
        Ok(())
    }
}

/// Test-set ground truth: segments plus dense per-frame labels.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalGroundTruth {
    pub class_names: Vec<String>,
    pub segments: Vec<GroundTruthSegment>,
    pub labels: BTreeMap<String, Vec<usize>>,
}

impl EvalGroundTruth {
    /// Restricts `annotations` to the videos in `frame_counts`.
    pub fn new(annotations: &AnnotationSet, frame_counts: &BTreeMap<String, usize>) -> Self {
        let segments: Vec<GroundTruthSegment> = annotations
            .segments
            .iter()
            .filter(|s| frame_counts.contains_key(&s.video_id))
            .cloned()
            .collect();
        let labels = frame_counts
            .iter()
            .map(|(id, &n)| {
                let own: Vec<GroundTruthSegment> =
                    segments.iter().filter(|s| &s.video_id == id).cloned().collect();
                (id.clone(), frame_labels(n, &own))
            })
            .collect();
        Self {
            class_names: annotations.class_names.clone(),
            segments,
            labels,
        }
    }

    pub fn videos(&self) -> BTreeSet<String> {
        self.labels.keys().cloned().collect()
    }
}

/// Frame-level and segment-level evaluation of one prediction run.
pub fn evaluate(
    tracks: &[FrameScoreTrack],
    preds: &[SegmentPrediction],
    gt: &EvalGroundTruth,
    config: &EvalConfig,
) -> Result<EvalReport> {
    let segment = segment_level_map(preds, &gt.segments, &gt.videos(), config)?;
    let frame = frame_level_map(tracks, &gt.labels, config.num_classes)?;
    let class_names = if gt.class_names.len() == config.num_classes {
        gt.class_names.clone()
    } else {
        (1..=config.num_classes).map(|k| format!("class_{k}")).collect()
    };
    Ok(EvalReport::from_results(class_names, &segment, &frame))
}
