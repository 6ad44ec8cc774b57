use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{FsnError, Result};

/// One annotated action instance over the half-open frame range `[start, end)`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GroundTruthSegment {
    pub video_id: String,
    pub start: usize,
    pub end: usize,
    /// `1..=K`; 0 is reserved for background.
    pub class_id: usize,
}

impl GroundTruthSegment {
    pub fn new(video_id: impl Into<String>, start: usize, end: usize, class_id: usize) -> Self {
        Self {
            video_id: video_id.into(),
            start,
            end,
            class_id,
        }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

/// Contents of an annotation file.
#[derive(Clone, Debug, PartialEq)]
pub struct AnnotationSet {
    pub class_names: Vec<String>,
    pub segments: Vec<GroundTruthSegment>,
    /// 1-based source line of each segment, empty when built in memory.
    pub lines: Vec<usize>,
    pub source: Option<PathBuf>,
}

impl AnnotationSet {
    pub fn new(class_names: Vec<String>, segments: Vec<GroundTruthSegment>) -> Self {
        Self {
            class_names,
            segments,
            lines: Vec::new(),
            source: None,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Segments of one video, in file order.
    pub fn for_video(&self, video_id: &str) -> Vec<GroundTruthSegment> {
        self.segments
            .iter()
            .filter(|s| s.video_id == video_id)
            .cloned()
            .collect()
    }

    /// Checks every interval against its video's frame count.
    pub fn validate(&self, frame_counts: &BTreeMap<String, usize>) -> Result<()> {
        for (i, seg) in self.segments.iter().enumerate() {
            let fail = |msg: String| match (&self.source, self.lines.get(i)) {
                (Some(path), Some(&line)) => FsnError::Annotation {
                    path: path.clone(),
                    line,
                    msg,
                },
                _ => FsnError::invalid(format!("annotation #{i}: {msg}")),
            };
            let Some(&frames) = frame_counts.get(&seg.video_id) else {
                return Err(fail(format!("unknown video `{}`", seg.video_id)));
            };
            if seg.start >= seg.end || seg.end > frames {
                return Err(fail(format!(
                    "segment [{}, {}) outside video `{}` of {frames} frames",
                    seg.start, seg.end, seg.video_id
                )));
            }
        }
        Ok(())
    }
}

/// Text format: a header `K=<K>` followed by tab-separated class names, then
/// one `video_id<TAB>start<TAB>end<TAB>class_id` record per line. Lines
/// starting with `#` are comments.
pub fn encode_annotations(set: &AnnotationSet) -> String {
    let mut out = String::from("# video_id\tstart\tend\tclass_id (frames, [start, end), 0-based)\n");
    write!(out, "K={}", set.num_classes()).unwrap();
    for name in &set.class_names {
        write!(out, "\t{name}").unwrap();
    }
    out.push('\n');
    for s in &set.segments {
        writeln!(out, "{}\t{}\t{}\t{}", s.video_id, s.start, s.end, s.class_id).unwrap();
    }
    out
}

pub fn write_annotations(path: &Path, set: &AnnotationSet) -> Result<()> {
    fs::write(path, encode_annotations(set)).map_err(|e| FsnError::io(path, e))
}

pub fn parse_annotations(text: &str, path: &Path) -> Result<AnnotationSet> {
    let err = |line: usize, msg: String| FsnError::Annotation {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut class_names: Option<Vec<String>> = None;
    let mut segments = Vec::new();
    let mut lines = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let Some(names) = &class_names else {
            let k = fields[0]
                .strip_prefix("K=")
                .and_then(|k| k.trim().parse::<usize>().ok())
                .ok_or_else(|| err(line_no, "expected header `K=<count>`".into()))?;
            let names: Vec<String> = fields[1..].iter().map(|s| s.to_string()).collect();
            if k == 0 || names.len() != k {
                return Err(err(line_no, format!("K={k} but {} class names", names.len())));
            }
            class_names = Some(names);
            continue;
        };
        if fields.len() != 4 {
            return Err(err(line_no, format!("expected 4 fields, found {}", fields.len())));
        }
        let num = |s: &str, what: &str| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| err(line_no, format!("bad {what} `{s}`")))
        };
        let seg = GroundTruthSegment::new(
            fields[0],
            num(fields[1], "start")?,
            num(fields[2], "end")?,
            num(fields[3], "class_id")?,
        );
        if seg.start >= seg.end {
            return Err(err(line_no, format!("empty interval [{}, {})", seg.start, seg.end)));
        }
        if seg.class_id == 0 || seg.class_id > names.len() {
            return Err(err(
                line_no,
                format!("class_id {} outside 1..={}", seg.class_id, names.len()),
            ));
        }
        segments.push(seg);
        lines.push(line_no);
    }
    let class_names = class_names.ok_or_else(|| err(1, "missing `K=` header".into()))?;
    Ok(AnnotationSet {
        class_names,
        segments,
        lines,
        source: Some(path.to_path_buf()),
    })
}

pub fn load_annotations(path: &Path) -> Result<AnnotationSet> {
    let text = fs::read_to_string(path).map_err(|e| FsnError::io(path, e))?;
    parse_annotations(&text, path)
}

/// Per-frame class ids (0 = background). Where segments overlap, the
/// earliest-starting one wins; equal starts keep input order.
pub fn frame_labels(frame_count: usize, segments: &[GroundTruthSegment]) -> Vec<usize> {
    let mut order: Vec<&GroundTruthSegment> = segments.iter().collect();
    order.sort_by_key(|s| s.start);
    let mut labels = vec![0; frame_count];
    for s in order {
        for l in &mut labels[s.start.min(frame_count)..s.end.min(frame_count)] {
            if *l == 0 {
                *l = s.class_id;
            }
        }
    }
    labels
}
