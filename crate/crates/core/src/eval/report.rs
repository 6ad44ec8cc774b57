use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::data::GroundTruthSegment;
use crate::error::{FsnError, Result};
use crate::eval::ap::precision_recall;
use crate::eval::frame::FrameLevelResult;
use crate::eval::segment::{ranked_matches, SegmentLevelResult};
use crate::eval::EvalConfig;
use crate::localize::SegmentPrediction;

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub thresholds: Vec<f64>,
    pub class_names: Vec<String>,
    /// `segment_ap[k - 1][i]`: class `k` at `thresholds[i]`.
    pub segment_ap: Vec<Vec<f64>>,
    pub segment_map: Vec<f64>,
    pub frame_ap: Vec<f64>,
    pub frame_map: f64,
}

impl EvalReport {
    pub fn from_results(class_names: Vec<String>, segment: &SegmentLevelResult, frame: &FrameLevelResult) -> Self {
        let k = class_names.len();
        let segment_ap = (0..k)
            .map(|c| segment.per_class.iter().map(|row| row[c]).collect())
            .collect();
        Self {
            thresholds: segment.thresholds.clone(),
            class_names,
            segment_ap,
            segment_map: segment.map.clone(),
            frame_ap: frame.per_class.clone(),
            frame_map: frame.map,
        }
    }

    /// Segment mAP at `threshold`, if it was evaluated.
    pub fn map_at(&self, threshold: f64) -> Option<f64> {
        self.thresholds
            .iter()
            .position(|t| (t - threshold).abs() < 1e-9)
            .map(|i| self.segment_map[i])
    }
}

fn clean_label(name: &str) -> String {
    name.replace([',', '\n', '\r'], " ")
}

/// CSV with one row per class plus `mAP`, one column per IoU threshold and
/// a final frame-level column, values to 4 decimals.
pub fn encode_report(report: &EvalReport) -> String {
    let mut out = String::from("class");
    for t in &report.thresholds {
        let _ = write!(out, ",iou@{t:.2}");
    }
    out.push_str(",frame\n");
    for (k, name) in report.class_names.iter().enumerate() {
        out.push_str(&clean_label(name));
        for v in &report.segment_ap[k] {
            let _ = write!(out, ",{v:.4}");
        }
        let _ = writeln!(out, ",{:.4}", report.frame_ap[k]);
    }
    out.push_str("mAP");
    for v in &report.segment_map {
        let _ = write!(out, ",{v:.4}");
    }
    let _ = writeln!(out, ",{:.4}", report.frame_map);
    out
}

pub fn emit_report(report: &EvalReport, path: &Path) -> Result<()> {
    fs::write(path, encode_report(report)).map_err(|e| FsnError::io(path, e))
}

pub fn parse_report(text: &str, path: &Path) -> Result<EvalReport> {
    let fail = |msg: String| FsnError::format(path, msg);
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or_else(|| fail("empty report".into()))?.split(',').collect();
    if header.len() < 3 || header[0] != "class" || header[header.len() - 1] != "frame" {
        return Err(fail("unexpected report header".into()));
    }
    let thresholds = header[1..header.len() - 1]
        .iter()
        .map(|h| {
            h.strip_prefix("iou@")
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or_else(|| fail(format!("bad threshold column `{h}`")))
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut rows = Vec::new();
    for line in lines.filter(|l| !l.is_empty()) {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != header.len() {
            return Err(fail(format!("row `{line}` has {} cells", cells.len())));
        }
        let values = cells[1..]
            .iter()
            .map(|c| c.parse::<f64>().map_err(|_| fail(format!("bad value `{c}`"))))
            .collect::<Result<Vec<f64>>>()?;
        rows.push((cells[0].to_string(), values));
    }
    let (last, values) = rows.pop().ok_or_else(|| fail("missing mAP row".into()))?;
    if last != "mAP" {
        return Err(fail("last row must be mAP".into()));
    }
    let n = thresholds.len();
    Ok(EvalReport {
        thresholds,
        class_names: rows.iter().map(|r| r.0.clone()).collect(),
        segment_ap: rows.iter().map(|r| r.1[..n].to_vec()).collect(),
        frame_ap: rows.iter().map(|r| r.1[n]).collect(),
        segment_map: values[..n].to_vec(),
        frame_map: values[n],
    })
}

/// One precision-recall CSV per class and threshold under `dir`.
pub fn write_pr_curves(
    dir: &Path,
    preds: &[SegmentPrediction],
    gt: &[GroundTruthSegment],
    config: &EvalConfig,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| FsnError::io(dir, e))?;
    for k in 1..=config.num_classes {
        for &th in &config.iou_thresholds {
            let (ranked, npos) = ranked_matches(preds, gt, k, th)?;
            let mut out = String::from("rank,confidence,hit,precision,recall\n");
            for (i, ((conf, hit), (p, r))) in ranked.iter().zip(precision_recall(&ranked, npos)).enumerate() {
                let _ = writeln!(out, "{},{conf:.6},{},{p:.6},{r:.6}", i + 1, *hit as u8);
            }
            let path = dir.join(format!("pr_class{k}_iou{th:.2}.csv"));
            fs::write(&path, out).map_err(|e| FsnError::io(&path, e))?;
        }
    }
    Ok(())
}
