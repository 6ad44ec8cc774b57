use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{FsnError, Result};
use crate::nncore::SeqTensor;

pub const FEATURE_MAGIC: &[u8; 4] = b"FSNF";
pub const FEATURE_VERSION: u32 = 1;
pub const FEATURE_EXT: &str = "fsnf";

/// Per-frame descriptors of one video, `frame_count x D`.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoFeatures {
    pub video_id: String,
    pub features: SeqTensor,
}

impl VideoFeatures {
    pub fn new(video_id: impl Into<String>, features: SeqTensor) -> Self {
        Self {
            video_id: video_id.into(),
            features,
        }
    }

    pub fn frame_count(&self) -> usize {
        self.features.len()
    }

    pub fn dim(&self) -> usize {
        self.features.channels()
    }
}

/// Serializes to the `.fsnf` layout: magic, version, D, frame count (all
/// little-endian u32) and then row-major f32 values.
pub fn encode_features(video: &VideoFeatures) -> Vec<u8> {
    let (frames, dim) = video.features.shape();
    let mut buf = Vec::with_capacity(16 + frames * dim * 4);
    buf.extend_from_slice(FEATURE_MAGIC);
    buf.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
    buf.extend_from_slice(&(dim as u32).to_le_bytes());
    buf.extend_from_slice(&(frames as u32).to_le_bytes());
    for v in video.features.as_slice() {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    buf
}

pub fn decode_features(video_id: &str, bytes: &[u8], path: &Path) -> Result<VideoFeatures> {
    let bad = |msg: String| FsnError::format(path, msg);
    if bytes.len() < 16 {
        return Err(bad(format!("truncated header ({} bytes)", bytes.len())));
    }
    if &bytes[..4] != FEATURE_MAGIC {
        return Err(bad("bad magic, expected FSNF".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let version = word(4);
    if version != FEATURE_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let dim = word(8) as usize;
    let frames = word(12) as usize;
    let expected = 16 + frames * dim * 4;
    if bytes.len() != expected {
        return Err(bad(format!(
            "payload holds {} bytes, header implies {expected}",
            bytes.len()
        )));
    }
    let data = bytes[16..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    let features = SeqTensor::new(frames, dim, data).map_err(|e| bad(e.to_string()))?;
    Ok(VideoFeatures::new(video_id, features))
}

pub fn feature_path(dir: &Path, video_id: &str) -> PathBuf {
    dir.join(format!("{video_id}.{FEATURE_EXT}"))
}

pub fn write_features(path: &Path, video: &VideoFeatures) -> Result<()> {
    fs::write(path, encode_features(video)).map_err(|e| FsnError::io(path, e))
}

/// Reads one feature file; the video id is the file stem.
pub fn load_features(path: &Path) -> Result<VideoFeatures> {
    let bytes = fs::read(path).map_err(|e| FsnError::io(path, e))?;
    let id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| FsnError::format(path, "file name is not a valid video id"))?;
    decode_features(id, &bytes, path)
}

/// Loads the named videos from `dir`, requiring one feature dimension.
pub fn load_video_set(dir: &Path, video_ids: &[String]) -> Result<Vec<VideoFeatures>> {
    let videos = video_ids
        .iter()
        .map(|id| load_features(&feature_path(dir, id)))
        .collect::<Result<Vec<_>>>()?;
    check_consistent_dim(&videos)?;
    Ok(videos)
}

pub fn check_consistent_dim(videos: &[VideoFeatures]) -> Result<()> {
    if let Some(first) = videos.first() {
        if let Some(odd) = videos.iter().find(|v| v.dim() != first.dim()) {
            return Err(FsnError::shape(format!(
                "video `{}` has feature dimension {} but `{}` has {}",
                odd.video_id,
                odd.dim(),
                first.video_id,
                first.dim()
            )));
        }
    }
    Ok(())
}

/// Frame counts keyed by video id, for annotation validation.
pub fn frame_counts(videos: &[VideoFeatures]) -> BTreeMap<String, usize> {
    videos
        .iter()
        .map(|v| (v.video_id.clone(), v.frame_count()))
        .collect()
}
