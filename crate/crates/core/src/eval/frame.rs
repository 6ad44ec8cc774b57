use std::collections::BTreeMap;

use crate::error::{FsnError, Result};
use crate::eval::ap::average_precision;
use crate::localize::FrameScoreTrack;

#[derive(Clone, Debug, PartialEq)]
pub struct FrameLevelResult {
    /// `per_class[k - 1]` is the AP of class `k`.
    pub per_class: Vec<f64>,
    pub map: f64,
}

/// Frame retrieval AP: for each class, every labeled frame of every video is
/// ranked by its class score; frames labeled with the class are positives.
/// Videos are visited in id order.
pub fn frame_level_map(
    tracks: &[FrameScoreTrack],
    labels: &BTreeMap<String, Vec<usize>>,
    num_classes: usize,
) -> Result<FrameLevelResult> {
    let by_id: BTreeMap<&str, &FrameScoreTrack> = tracks.iter().map(|t| (t.video_id.as_str(), t)).collect();
    for t in tracks {
        if !labels.contains_key(&t.video_id) {
            return Err(FsnError::UnknownVideo(t.video_id.clone()));
        }
        if t.num_classes() != num_classes {
            return Err(FsnError::shape(format!(
                "track `{}` has {} classes, expected {num_classes}",
                t.video_id,
                t.num_classes()
            )));
        }
    }
    let mut paired = Vec::with_capacity(labels.len());
    for (id, frames) in labels {
        let track = by_id
            .get(id.as_str())
            .ok_or_else(|| FsnError::invalid(format!("no score track for labeled video `{id}`")))?;
        if track.frame_count() != frames.len() {
            return Err(FsnError::shape(format!(
                "track `{id}` has {} frames, labels have {}",
                track.frame_count(),
                frames.len()
            )));
        }
        paired.push((*track, frames));
    }
    let per_class = (1..=num_classes)
        .map(|k| {
            let mut ranked = Vec::new();
            let mut positives = 0;
            for (track, frames) in &paired {
                let scores = track.class_scores(k);
                for (s, &l) in scores.iter().zip(frames.iter()) {
                    positives += (l == k) as usize;
                    ranked.push((*s, l == k));
                }
            }
            average_precision(&ranked, positives)
        })
        .collect::<Result<Vec<f64>>>()?;
    let map = mean(&per_class);
    Ok(FrameLevelResult { per_class, map })
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}
