//! Feature and annotation ingestion, training-sample construction and the
//! synthetic dataset generator.

pub mod annotations;
pub mod clips;
pub mod features;
pub mod synth;
pub mod weak;

use std::fs;
use std::path::Path;

pub use annotations::{frame_labels, load_annotations, AnnotationSet, GroundTruthSegment};
pub use clips::{class_histogram, make_clips, rebalance, snippet_centers, ClipSample, MIN_ACTION_FRAMES};
pub use features::{load_features, write_features, VideoFeatures};
pub use synth::{shuffled_indices, synth_generate, synth_single_instance, Split, SynthConfig, SyntheticDataset};
pub use weak::{make_weak_sample, span, video_label, weak_predict_features, WeakSample, DEFAULT_WEAK_SEGMENTS};

use crate::error::{FsnError, Result};

pub const ANNOTATION_FILE: &str = "annotations.tsv";
pub const MANIFEST_FILE: &str = "manifest.txt";

/// A dataset directory: one feature file per video, the annotation file and
/// the manifest, all side by side.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub annotations: AnnotationSet,
    pub train: Vec<VideoFeatures>,
    pub test: Vec<VideoFeatures>,
}

impl Dataset {
    pub fn num_classes(&self) -> usize {
        self.annotations.num_classes()
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.train.iter().chain(&self.test).next().map(VideoFeatures::dim)
    }
}

pub fn write_dataset(ds: &SyntheticDataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| FsnError::io(dir, e))?;
    for v in &ds.videos {
        write_features(&features::feature_path(dir, &v.video_id), v)?;
    }
    annotations::write_annotations(&dir.join(ANNOTATION_FILE), &ds.annotations)?;
    let manifest = dir.join(MANIFEST_FILE);
    fs::write(&manifest, synth::manifest_text(ds)).map_err(|e| FsnError::io(&manifest, e))
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let manifest = fs::read_to_string(&manifest_path).map_err(|e| FsnError::io(&manifest_path, e))?;
    let entries = synth::parse_manifest(&manifest)?;
    let annotations = load_annotations(&dir.join(ANNOTATION_FILE))?;
    let ids: Vec<String> = entries.iter().map(|(id, _)| id.clone()).collect();
    let videos = features::load_video_set(dir, &ids)?;
    annotations.validate(&features::frame_counts(&videos))?;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (v, (_, split)) in videos.into_iter().zip(entries) {
        match split {
            Split::Train => train.push(v),
            Split::Test => test.push(v),
        }
    }
    Ok(Dataset {
        annotations,
        train,
        test,
    })
}
