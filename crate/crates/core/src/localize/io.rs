//! Prediction files (tab-separated text) and score track files (binary).
//!
//! Track file layout, little-endian:
//!
//! ```text
//! magic "FSNT" | version u32 | track count u32
//! per track: id length u32 | id bytes | layout u8 | frames u32 | columns u32 | f64 scores
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{FsnError, Result};
use crate::localize::{FrameScoreTrack, ScoreLayout, SegmentPrediction};
use crate::nncore::SeqTensor;

pub const PREDICTION_HEADER: &str = "video_id\tstart\tend\tclass_id\tconfidence";
pub const TRACK_MAGIC: &[u8; 4] = b"FSNT";
pub const TRACK_VERSION: u32 = 1;

pub fn encode_predictions(preds: &[SegmentPrediction]) -> String {
    let mut out = String::with_capacity(32 * (preds.len() + 1));
    out.push_str(PREDICTION_HEADER);
    out.push('\n');
    for p in preds {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{:.6}",
            p.video_id, p.start, p.end, p.class_id, p.confidence
        );
    }
    out
}

pub fn write_predictions(path: &Path, preds: &[SegmentPrediction]) -> Result<()> {
    fs::write(path, encode_predictions(preds)).map_err(|e| FsnError::io(path, e))
}

pub fn parse_predictions(text: &str, path: &Path) -> Result<Vec<SegmentPrediction>> {
    let mut preds = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() || line.starts_with('#') || line == PREDICTION_HEADER {
            continue;
        }
        let fail = |msg: String| FsnError::Annotation {
            path: path.to_path_buf(),
            line: line_no,
            msg,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(fail(format!("expected 5 tab-separated fields, found {}", fields.len())));
        }
        let int = |s: &str, what: &str| {
            s.parse::<usize>()
                .map_err(|_| fail(format!("bad {what} `{s}`")))
        };
        let start = int(fields[1], "start")?;
        let end = int(fields[2], "end")?;
        let class_id = int(fields[3], "class id")?;
        let confidence: f64 = fields[4]
            .parse()
            .map_err(|_| fail(format!("bad confidence `{}`", fields[4])))?;
        if start >= end {
            return Err(fail(format!("empty segment [{start}, {end})")));
        }
        if class_id == 0 {
            return Err(fail("class id 0 is background".into()));
        }
        if !confidence.is_finite() {
            return Err(fail(format!("non-finite confidence {confidence}")));
        }
        preds.push(SegmentPrediction {
            video_id: fields[0].to_string(),
            start,
            end,
            class_id,
            confidence,
        });
    }
    Ok(preds)
}

pub fn load_predictions(path: &Path) -> Result<Vec<SegmentPrediction>> {
    let text = fs::read_to_string(path).map_err(|e| FsnError::io(path, e))?;
    parse_predictions(&text, path)
}

pub fn encode_tracks(tracks: &[FrameScoreTrack]) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(TRACK_MAGIC);
    buf.extend_from_slice(&TRACK_VERSION.to_le_bytes());
    buf.extend_from_slice(&(tracks.len() as u32).to_le_bytes());
    for t in tracks {
        buf.extend_from_slice(&(t.video_id.len() as u32).to_le_bytes());
        buf.extend_from_slice(t.video_id.as_bytes());
        buf.push(t.layout().code());
        let (frames, cols) = t.scores().shape();
        buf.extend_from_slice(&(frames as u32).to_le_bytes());
        buf.extend_from_slice(&(cols as u32).to_le_bytes());
        for v in t.scores().as_slice() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    buf
}

pub fn decode_tracks(bytes: &[u8], path: &Path) -> Result<Vec<FrameScoreTrack>> {
    let fail = |msg: String| FsnError::format(path, msg);
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        if bytes.len() - pos < n {
            return Err(FsnError::format(path, format!("truncated at byte {pos}")));
        }
        pos += n;
        Ok(&bytes[pos - n..pos])
    };
    if take(4)? != TRACK_MAGIC {
        return Err(fail("bad magic, expected FSNT".into()));
    }
    let u32_at = |s: &[u8]| u32::from_le_bytes(s.try_into().unwrap()) as usize;
    let version = u32_at(take(4)?);
    if version != TRACK_VERSION as usize {
        return Err(fail(format!("unsupported track version {version}")));
    }
    let count = u32_at(take(4)?);
    let mut tracks = Vec::new();
    for _ in 0..count {
        let id_len = u32_at(take(4)?);
        let id = std::str::from_utf8(take(id_len)?)
            .map_err(|_| FsnError::format(path, "video id is not UTF-8"))?
            .to_string();
        let code = take(1)?[0];
        let layout = ScoreLayout::from_code(code)
            .ok_or_else(|| FsnError::format(path, format!("unknown layout {code}")))?;
        let frames = u32_at(take(4)?);
        let cols = u32_at(take(4)?);
        let n = frames
            .checked_mul(cols)
            .and_then(|v| v.checked_mul(8))
            .ok_or_else(|| FsnError::format(path, "track size overflow"))?;
        let data = take(n)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let scores = SeqTensor::new(frames, cols, data).map_err(|e| FsnError::format(path, e.to_string()))?;
        tracks.push(FrameScoreTrack::new(id, scores, layout).map_err(|e| FsnError::format(path, e.to_string()))?);
    }
    if pos != bytes.len() {
        return Err(fail(format!("{} trailing bytes", bytes.len() - pos)));
    }
    Ok(tracks)
}

pub fn write_tracks(path: &Path, tracks: &[FrameScoreTrack]) -> Result<()> {
    fs::write(path, encode_tracks(tracks)).map_err(|e| FsnError::io(path, e))
}

pub fn read_tracks(bytes: &[u8], path: &Path) -> Result<Vec<FrameScoreTrack>> {
    decode_tracks(bytes, path)
}

pub fn load_tracks(path: &Path) -> Result<Vec<FrameScoreTrack>> {
    let bytes = fs::read(path).map_err(|e| FsnError::io(path, e))?;
    decode_tracks(&bytes, path)
}
