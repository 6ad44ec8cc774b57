//! Seeded synthetic localization datasets.
//!
//! Background frames carry a shared background prototype plus Gaussian noise.
//! Every action instance is a two-phase pattern: the first half of its frames
//! shows one prototype, the second half another. With `context_ambiguity`
//! on, classes are paired and the two members of a pair use the same two
//! prototypes in opposite order, so a single frame cannot tell them apart
//! while a window spanning the phase change can.
//!
//! `context_halo` frames on each side of an instance may additionally carry a
//! weak class-specific context prototype (scene context that correlates with
//! the action but is not part of it).

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::annotations::{AnnotationSet, GroundTruthSegment};
use crate::data::features::VideoFeatures;
use crate::error::{FsnError, Result};
use crate::nncore::SeqTensor;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub num_videos: usize,
    /// The last `num_test` videos form the test split.
    pub num_test: usize,
    pub frames_per_video: usize,
    pub num_classes: usize,
    pub feature_dim: usize,
    /// Standard deviation of the per-frame Gaussian noise.
    pub prototype_noise: f64,
    pub context_ambiguity: bool,
    /// Target fraction of action frames, in (0, 1).
    pub instance_density: f64,
    pub min_instance_len: usize,
    pub max_instance_len: usize,
    /// One class per video (all instances share it).
    pub single_label: bool,
    /// Frames of class context on each side of an instance.
    pub context_halo: usize,
    pub halo_strength: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_videos: 80,
            num_test: 20,
            frames_per_video: 600,
            num_classes: 4,
            feature_dim: 16,
            prototype_noise: 1.0,
            context_ambiguity: true,
            instance_density: 0.3,
            min_instance_len: 30,
            max_instance_len: 70,
            single_label: false,
            context_halo: 0,
            halo_strength: 0.0,
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(FsnError::Config(m));
        if self.num_videos == 0 || self.frames_per_video == 0 || self.num_classes == 0 || self.feature_dim == 0 {
            return bad("synthetic counts must be positive".into());
        }
        if self.num_test > self.num_videos {
            return bad(format!("num_test {} exceeds num_videos {}", self.num_test, self.num_videos));
        }
        if !(self.instance_density > 0.0 && self.instance_density < 1.0) {
            return bad(format!("instance_density {} outside (0, 1)", self.instance_density));
        }
        if self.context_ambiguity && self.num_classes < 2 {
            return bad("context_ambiguity needs at least 2 classes".into());
        }
        if self.min_instance_len < 2 || self.min_instance_len > self.max_instance_len {
            return bad(format!(
                "instance length range {}..={} invalid",
                self.min_instance_len, self.max_instance_len
            ));
        }
        if self.max_instance_len > self.frames_per_video {
            return bad("instances longer than the video".into());
        }
        if !(self.prototype_noise >= 0.0) || !(self.halo_strength >= 0.0) {
            return bad("noise and halo strength must be non-negative".into());
        }
        Ok(())
    }

    /// `key = value` lines, also used in the dataset manifest.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        for (k, v) in [
            ("num_videos", self.num_videos.to_string()),
            ("num_test", self.num_test.to_string()),
            ("frames_per_video", self.frames_per_video.to_string()),
            ("num_classes", self.num_classes.to_string()),
            ("feature_dim", self.feature_dim.to_string()),
            ("prototype_noise", self.prototype_noise.to_string()),
            ("context_ambiguity", self.context_ambiguity.to_string()),
            ("instance_density", self.instance_density.to_string()),
            ("min_instance_len", self.min_instance_len.to_string()),
            ("max_instance_len", self.max_instance_len.to_string()),
            ("single_label", self.single_label.to_string()),
            ("context_halo", self.context_halo.to_string()),
            ("halo_strength", self.halo_strength.to_string()),
            ("seed", self.seed.to_string()),
        ] {
            writeln!(s, "{k} = {v}").unwrap();
        }
        s
    }
}

/// Prototype vectors behind a dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct Prototypes {
    pub background: Vec<f64>,
    /// Distinct action prototypes; classes index into this list.
    pub action: Vec<Vec<f64>>,
    /// `(first, second)` phase prototype index per class, `phases[k - 1]`.
    pub phases: Vec<(usize, usize)>,
    /// Context prototype per class.
    pub context: Vec<Vec<f64>>,
}

impl Prototypes {
    fn generate(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Self {
        let mut draw = || -> Vec<f64> {
            (0..cfg.feature_dim)
                .map(|_| StandardNormal.sample(&mut *rng))
                .collect()
        };
        let background = draw();
        let k = cfg.num_classes;
        let mut action = Vec::new();
        let mut phases = Vec::with_capacity(k);
        if cfg.context_ambiguity {
            for pair in 0..k / 2 {
                action.push(draw());
                action.push(draw());
                let (a, b) = (2 * pair, 2 * pair + 1);
                phases.push((a, b));
                phases.push((b, a));
            }
            if k % 2 == 1 {
                action.push(draw());
                let a = action.len() - 1;
                phases.push((a, a));
            }
        } else {
            for _ in 0..k {
                action.push(draw());
                action.push(draw());
                let a = action.len() - 2;
                phases.push((a, a + 1));
            }
        }
        let context = (0..k).map(|_| draw()).collect();
        Self {
            background,
            action,
            phases,
            context,
        }
    }

    /// Prototype of frame `offset` within an instance of class `k` and length `len`.
    pub fn instance_frame(&self, class_id: usize, offset: usize, len: usize) -> &[f64] {
        let (first, second) = self.phases[class_id - 1];
        if offset < len / 2 {
            &self.action[first]
        } else {
            &self.action[second]
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticDataset {
    pub config: SynthConfig,
    pub videos: Vec<VideoFeatures>,
    pub annotations: AnnotationSet,
    pub splits: Vec<Split>,
    pub prototypes: Prototypes,
}

impl SyntheticDataset {
    pub fn ids(&self, split: Split) -> Vec<String> {
        self.videos
            .iter()
            .zip(&self.splits)
            .filter(|(_, s)| **s == split)
            .map(|(v, _)| v.video_id.clone())
            .collect()
    }

    pub fn videos_in(&self, split: Split) -> Vec<VideoFeatures> {
        self.videos
            .iter()
            .zip(&self.splits)
            .filter(|(_, s)| **s == split)
            .map(|(v, _)| v.clone())
            .collect()
    }
}

pub fn video_id(index: usize) -> String {
    format!("video_{index:04}")
}

/// Instance lengths summing to about `target` frames.
fn instance_lengths(cfg: &SynthConfig, target: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let (lo, hi) = (cfg.min_instance_len, cfg.max_instance_len);
    let mut lengths = Vec::new();
    let mut remaining = target;
    while remaining >= lo {
        let len = rng.gen_range(lo..=hi.min(remaining));
        lengths.push(len);
        remaining -= len;
    }
    // Spread the leftover over instances that still have room.
    let mut i = 0;
    while remaining > 0 && !lengths.is_empty() && lengths.iter().any(|l| *l < hi) {
        if lengths[i] < hi {
            lengths[i] += 1;
            remaining -= 1;
        }
        i = (i + 1) % lengths.len();
    }
    lengths
}

/// Places instances with random gaps; returns `(start, len)` pairs in order.
fn layout(cfg: &SynthConfig, mut lengths: Vec<usize>, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let frames = cfg.frames_per_video;
    let min_gap = (2 * cfg.context_halo).max(5);
    while !lengths.is_empty() {
        let used: usize = lengths.iter().sum::<usize>() + (lengths.len() - 1) * min_gap;
        if used <= frames {
            break;
        }
        lengths.pop();
    }
    if lengths.is_empty() {
        return Vec::new();
    }
    let used: usize = lengths.iter().sum::<usize>() + (lengths.len() - 1) * min_gap;
    let extra = frames - used;
    let mut cuts: Vec<usize> = (0..lengths.len()).map(|_| rng.gen_range(0..=extra)).collect();
    cuts.sort_unstable();
    let mut out = Vec::with_capacity(lengths.len());
    let mut pos = 0;
    let mut prev_cut = 0;
    for (i, (len, cut)) in lengths.iter().zip(&cuts).enumerate() {
        pos += cut - prev_cut + if i > 0 { min_gap } else { 0 };
        prev_cut = *cut;
        out.push((pos, *len));
        pos += len;
    }
    out
}

fn render_video(
    cfg: &SynthConfig,
    protos: &Prototypes,
    id: &str,
    instances: &[(usize, usize, usize)],
    rng: &mut ChaCha8Rng,
) -> Result<VideoFeatures> {
    let frames = cfg.frames_per_video;
    let d = cfg.feature_dim;
    let mut data = Vec::with_capacity(frames * d);
    let mut owner = vec![None; frames];
    let mut halo = vec![None; frames];
    for &(start, len, class_id) in instances {
        for (off, o) in owner[start..start + len].iter_mut().enumerate() {
            *o = Some((class_id, off, len));
        }
        let lo = start.saturating_sub(cfg.context_halo);
        let hi = (start + len + cfg.context_halo).min(frames);
        for h in &mut halo[lo..hi] {
            h.get_or_insert(class_id);
        }
    }
    for t in 0..frames {
        let base: Vec<f64> = match (owner[t], halo[t]) {
            (Some((k, off, len)), _) => protos.instance_frame(k, off, len).to_vec(),
            (None, Some(k)) if cfg.halo_strength > 0.0 => protos
                .background
                .iter()
                .zip(&protos.context[k - 1])
                .map(|(b, c)| b + cfg.halo_strength * c)
                .collect(),
            _ => protos.background.clone(),
        };
        for b in base {
            let noise: f64 = StandardNormal.sample(&mut *rng);
            // Stored as f32 on disk; keep the in-memory copy identical.
            data.push((b + cfg.prototype_noise * noise) as f32 as f64);
        }
    }
    Ok(VideoFeatures::new(id, SeqTensor::new(frames, d, data)?))
}

/// Generates the full dataset. Deterministic in `config`.
pub fn synth_generate(config: &SynthConfig) -> Result<SyntheticDataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let protos = Prototypes::generate(config, &mut rng);
    let target = (config.instance_density * config.frames_per_video as f64).round() as usize;
    let mut videos = Vec::with_capacity(config.num_videos);
    let mut segments = Vec::new();
    let mut splits = Vec::with_capacity(config.num_videos);
    for v in 0..config.num_videos {
        let id = video_id(v);
        let lengths = instance_lengths(config, target, &mut rng);
        let placed = layout(config, lengths, &mut rng);
        let video_class = 1 + v % config.num_classes;
        let instances: Vec<(usize, usize, usize)> = placed
            .into_iter()
            .map(|(s, l)| {
                let k = if config.single_label {
                    video_class
                } else {
                    rng.gen_range(1..=config.num_classes)
                };
                (s, l, k)
            })
            .collect();
        videos.push(render_video(config, &protos, &id, &instances, &mut rng)?);
        segments.extend(
            instances
                .iter()
                .map(|&(s, l, k)| GroundTruthSegment::new(id.clone(), s, s + l, k)),
        );
        splits.push(if v + config.num_test >= config.num_videos {
            Split::Test
        } else {
            Split::Train
        });
    }
    let class_names = (1..=config.num_classes).map(|k| format!("action_{k}")).collect();
    Ok(SyntheticDataset {
        config: config.clone(),
        videos,
        annotations: AnnotationSet::new(class_names, segments),
        splits,
        prototypes: protos,
    })
}

/// A held-out video with exactly one instance of `class_id`, drawn from the
/// same prototypes as [`synth_generate`] for this config. `instance_len`
/// defaults to the middle of the configured length range.
pub fn synth_single_instance(
    config: &SynthConfig,
    class_id: usize,
    instance_len: Option<usize>,
    seed: u64,
) -> Result<(VideoFeatures, GroundTruthSegment)> {
    config.validate()?;
    if !(1..=config.num_classes).contains(&class_id) {
        return Err(FsnError::invalid(format!("class {class_id} outside 1..={}", config.num_classes)));
    }
    let mut proto_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let protos = Prototypes::generate(config, &mut proto_rng);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = instance_len.unwrap_or((config.min_instance_len + config.max_instance_len) / 2);
    if len == 0 || len > config.frames_per_video {
        return Err(FsnError::invalid(format!("instance length {len}")));
    }
    let start = rng.gen_range(0..=config.frames_per_video - len);
    let id = format!("single_{seed}");
    let video = render_video(config, &protos, &id, &[(start, len, class_id)], &mut rng)?;
    Ok((video, GroundTruthSegment::new(id, start, start + len, class_id)))
}

/// Manifest text: config echo followed by one `video<TAB>id<TAB>split` line per video.
pub fn manifest_text(ds: &SyntheticDataset) -> String {
    let mut s = String::from("# fsn synthetic dataset manifest\n");
    for line in ds.config.echo().lines() {
        writeln!(s, "config.{line}").unwrap();
    }
    for (v, split) in ds.videos.iter().zip(&ds.splits) {
        writeln!(s, "video\t{}\t{}", v.video_id, split.as_str()).unwrap();
    }
    s
}

/// Parses the video list of a manifest into `(id, split)` pairs.
pub fn parse_manifest(text: &str) -> Result<Vec<(String, Split)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let Some(rest) = line.strip_prefix("video\t") else {
            continue;
        };
        let (id, split) = rest
            .split_once('\t')
            .ok_or_else(|| FsnError::Config(format!("manifest line {}: missing split", i + 1)))?;
        let split = match split.trim() {
            "train" => Split::Train,
            "test" => Split::Test,
            other => {
                return Err(FsnError::Config(format!("manifest line {}: split `{other}`", i + 1)))
            }
        };
        out.push((id.to_string(), split));
    }
    Ok(out)
}

/// A permutation of `0..n`, deterministic in `seed`.
pub fn shuffled_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut v: Vec<usize> = (0..n).collect();
    v.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    v
}

/// Shuffled copy of `items`, deterministic in `seed`.
pub fn shuffled<T: Clone>(items: &[T], seed: u64) -> Vec<T> {
    let mut v = items.to_vec();
    v.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::annotations::frame_labels;
    use crate::data::features::encode_features;

    fn small() -> SynthConfig {
        SynthConfig {
            num_videos: 12,
            num_test: 4,
            frames_per_video: 400,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = synth_generate(&small()).unwrap();
        let b = synth_generate(&small()).unwrap();
        for (x, y) in a.videos.iter().zip(&b.videos) {
            assert_eq!(encode_features(x), encode_features(y));
        }
        assert_eq!(a.annotations, b.annotations);
        assert_eq!(manifest_text(&a), manifest_text(&b));
        let c = synth_generate(&SynthConfig { seed: 7, ..small() }).unwrap();
        assert_ne!(a.videos[0], c.videos[0]);
    }

    #[test]
    fn density_within_ten_percent() {
        for density in [0.1, 0.15, 0.3] {
            let cfg = SynthConfig { instance_density: density, ..small() };
            let ds = synth_generate(&cfg).unwrap();
            let action: usize = ds.annotations.segments.iter().map(|s| s.len()).sum();
            let total = cfg.num_videos * cfg.frames_per_video;
            let frac = action as f64 / total as f64;
            assert!((frac - density).abs() <= 0.1 * density, "density {density}: {frac}");
        }
    }

    #[test]
    fn segments_valid_and_disjoint() {
        let ds = synth_generate(&small()).unwrap();
        let counts = crate::data::features::frame_counts(&ds.videos);
        ds.annotations.validate(&counts).unwrap();
        for v in &ds.videos {
            let segs = ds.annotations.for_video(&v.video_id);
            for w in segs.windows(2) {
                assert!(w[0].end < w[1].start);
            }
        }
        assert_eq!(ds.ids(Split::Test).len(), 4);
        assert_eq!(ds.ids(Split::Train).len(), 8);
    }

    #[test]
    fn single_label_videos_have_one_class() {
        let cfg = SynthConfig { single_label: true, context_ambiguity: false, instance_density: 0.15, ..small() };
        let ds = synth_generate(&cfg).unwrap();
        for v in &ds.videos {
            let segs = ds.annotations.for_video(&v.video_id);
            assert!(!segs.is_empty());
            assert!(segs.iter().all(|s| s.class_id == segs[0].class_id));
        }
    }

    /// Nearest-prototype oracle: map each action frame to its nearest action
    /// prototype, then score the best possible per-prototype class decision.
    #[test]
    fn ambiguous_pair_is_not_separable_per_frame() {
        let ds = synth_generate(&SynthConfig { prototype_noise: 0.5, num_videos: 40, num_test: 10, ..small() }).unwrap();
        let p = &ds.prototypes;
        // counts[proto][class in pair {1, 2}]
        let mut counts = vec![[0usize; 2]; p.action.len()];
        for v in &ds.videos {
            let labels = frame_labels(v.frame_count(), &ds.annotations.for_video(&v.video_id));
            for (t, &k) in labels.iter().enumerate() {
                if k != 1 && k != 2 {
                    continue;
                }
                let x = v.features.row(t);
                let nearest = (0..p.action.len())
                    .min_by(|&a, &b| {
                        let da: f64 = x.iter().zip(&p.action[a]).map(|(u, w)| (u - w).powi(2)).sum();
                        let db: f64 = x.iter().zip(&p.action[b]).map(|(u, w)| (u - w).powi(2)).sum();
                        da.total_cmp(&db)
                    })
                    .unwrap();
                counts[nearest][k - 1] += 1;
            }
        }
        let total: usize = counts.iter().map(|c| c[0] + c[1]).sum();
        let best: usize = counts.iter().map(|c| c[0].max(c[1])).sum();
        let acc = best as f64 / total as f64;
        assert!(total > 1000);
        assert!(acc <= 0.55, "single-frame accuracy on ambiguous pair {acc}");
    }

    #[test]
    fn single_instance_video() {
        let (v, gt) = synth_single_instance(&small(), 2, None, 99).unwrap();
        assert_eq!(v.frame_count(), 400);
        assert_eq!(gt.len(), 50);
        assert_eq!(gt.class_id, 2);
    }

    #[test]
    fn manifest_parses_back() {
        let ds = synth_generate(&small()).unwrap();
        let text = manifest_text(&ds);
        assert!(text.contains("config.num_videos = 12"));
        let list = parse_manifest(&text).unwrap();
        assert_eq!(list.len(), 12);
        assert_eq!(list[11].1, Split::Test);
    }

    #[test]
    fn rejects_bad_config() {
        assert!(SynthConfig { num_classes: 1, ..small() }.validate().is_err());
        assert!(SynthConfig { instance_density: 1.0, ..small() }.validate().is_err());
        assert!(SynthConfig { num_test: 13, ..small() }.validate().is_err());
    }
}
