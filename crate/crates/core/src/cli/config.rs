//! Flat `key = value` run configuration.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::{SynthConfig, DEFAULT_WEAK_SEGMENTS};
use crate::error::{FsnError, Result};
use crate::eval::{EvalConfig, STRONG_IOU_THRESHOLDS, WEAK_IOU_THRESHOLDS};
use crate::localize::WeakExpansion;
use crate::model::config::{DEFAULT_CLIP_LEN, DEFAULT_DILATIONS, DEFAULT_HIDDEN_CHANNELS, DEFAULT_SNIPPET_LEN};
use crate::model::ModelConfig;
use crate::nncore::Pooling;

pub const DEFAULT_SEED: u64 = 42;
pub const LOG_EVERY: usize = 50;

/// Strong head architecture to train.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StrongHead {
    Fsn,
    Ablation,
}

impl FromStr for StrongHead {
    type Err = FsnError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fsn" => Ok(StrongHead::Fsn),
            "ablation" => Ok(StrongHead::Ablation),
            other => Err(FsnError::Config(format!("unknown head `{other}`"))),
        }
    }
}

impl std::fmt::Display for StrongHead {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StrongHead::Fsn => "fsn",
            StrongHead::Ablation => "ablation",
        })
    }
}

/// Which comparison `ablate` runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AblateMode {
    Strong,
    Weak,
    Both,
}

impl FromStr for AblateMode {
    type Err = FsnError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strong" => Ok(AblateMode::Strong),
            "weak" => Ok(AblateMode::Weak),
            "both" => Ok(AblateMode::Both),
            other => Err(FsnError::Config(format!("unknown ablate mode `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub threads: Option<usize>,
    pub out_dir: PathBuf,
    /// Dataset directory; `<out_dir>/data` when unset.
    pub data_dir: Option<PathBuf>,
    pub model_file: PathBuf,
    pub predictions_file: PathBuf,
    pub tracks_file: PathBuf,
    pub report_file: PathBuf,
    pub train_log_file: PathBuf,

    pub synth: SynthConfig,

    pub head: StrongHead,
    pub hidden_channels: usize,
    pub snippet_len: usize,
    pub clip_len: usize,
    pub dilations: Vec<usize>,

    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub clip_stride: usize,

    pub weak_segments: usize,
    pub pooling: Pooling,
    pub weak_expansion: WeakExpansion,

    /// Evaluation thresholds; mode default when unset.
    pub eval_iou: Option<Vec<f64>>,
    /// Evaluation IoU that sets the suppression threshold at prediction time.
    pub predict_iou: f64,
    pub pr_curves: bool,

    pub ablate: AblateMode,

    pub gradcheck_seeds: usize,
    pub gradcheck_tolerance: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            threads: None,
            out_dir: PathBuf::from("out"),
            data_dir: None,
            model_file: PathBuf::from("model.fsn"),
            predictions_file: PathBuf::from("predictions.tsv"),
            tracks_file: PathBuf::from("tracks.fsnt"),
            report_file: PathBuf::from("report.csv"),
            train_log_file: PathBuf::from("train_log.csv"),
            synth: SynthConfig::default(),
            head: StrongHead::Fsn,
            hidden_channels: DEFAULT_HIDDEN_CHANNELS,
            snippet_len: DEFAULT_SNIPPET_LEN,
            clip_len: DEFAULT_CLIP_LEN,
            dilations: DEFAULT_DILATIONS.to_vec(),
            learning_rate: 1e-4,
            momentum: 0.9,
            weight_decay: 5e-4,
            batch_size: 12,
            iterations: 2000,
            clip_stride: DEFAULT_CLIP_LEN / 5,
            weak_segments: DEFAULT_WEAK_SEGMENTS,
            pooling: Pooling::Gmp,
            weak_expansion: WeakExpansion::Nearest,
            eval_iou: None,
            predict_iou: 0.5,
            pr_curves: false,
            ablate: AblateMode::Strong,
            gradcheck_seeds: 20,
            gradcheck_tolerance: 1e-5,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| FsnError::Config(format!("bad value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(FsnError::Config(format!("bad boolean `{value}` for `{key}`"))),
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Applies one setting. Keys may carry a `synth.` prefix for generator
    /// fields.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let key = key.trim();
        let bare = key.strip_prefix("synth.").unwrap_or(key);
        let s = &mut self.synth;
        match bare {
            "num_videos" => s.num_videos = parse(key, value)?,
            "num_test" => s.num_test = parse(key, value)?,
            "frames_per_video" => s.frames_per_video = parse(key, value)?,
            "num_classes" => s.num_classes = parse(key, value)?,
            "feature_dim" => s.feature_dim = parse(key, value)?,
            "prototype_noise" => s.prototype_noise = parse(key, value)?,
            "context_ambiguity" => s.context_ambiguity = parse_bool(key, value)?,
            "instance_density" => s.instance_density = parse(key, value)?,
            "min_instance_len" => s.min_instance_len = parse(key, value)?,
            "max_instance_len" => s.max_instance_len = parse(key, value)?,
            "single_label" => s.single_label = parse_bool(key, value)?,
            "context_halo" => s.context_halo = parse(key, value)?,
            "halo_strength" => s.halo_strength = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "threads" => self.threads = Some(parse(key, value)?),
            "out_dir" => self.out_dir = PathBuf::from(value),
            "data_dir" => self.data_dir = Some(PathBuf::from(value)),
            "model_file" => self.model_file = PathBuf::from(value),
            "predictions_file" => self.predictions_file = PathBuf::from(value),
            "tracks_file" => self.tracks_file = PathBuf::from(value),
            "report_file" => self.report_file = PathBuf::from(value),
            "train_log_file" => self.train_log_file = PathBuf::from(value),
            "head" => self.head = value.parse()?,
            "hidden_channels" => self.hidden_channels = parse(key, value)?,
            "snippet_len" => self.snippet_len = parse(key, value)?,
            "clip_len" => self.clip_len = parse(key, value)?,
            "dilations" => self.dilations = parse_list(key, value)?,
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "momentum" => self.momentum = parse(key, value)?,
            "weight_decay" => self.weight_decay = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "iterations" => self.iterations = parse(key, value)?,
            "clip_stride" => self.clip_stride = parse(key, value)?,
            "weak_segments" => self.weak_segments = parse(key, value)?,
            "pooling" => self.pooling = value.parse()?,
            "weak_expansion" => self.weak_expansion = value.parse()?,
            "eval_iou" => self.eval_iou = Some(parse_list(key, value)?),
            "predict_iou" => self.predict_iou = parse(key, value)?,
            "pr_curves" => self.pr_curves = parse_bool(key, value)?,
            "ablate" => self.ablate = value.parse()?,
            "gradcheck_seeds" => self.gradcheck_seeds = parse(key, value)?,
            "gradcheck_tolerance" => self.gradcheck_tolerance = parse(key, value)?,
            _ => return Err(FsnError::Config(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    /// Applies every `key = value` line of `text`; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, source: &Path) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                FsnError::Config(format!("{}:{}: expected `key = value`", source.display(), i + 1))
            })?;
            self.set(k, v)
                .map_err(|e| FsnError::Config(format!("{}:{}: {e}", source.display(), i + 1)))?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| FsnError::io(path, e))?;
        let mut c = Self::default();
        c.apply_text(&text, path)?;
        Ok(c)
    }

    /// Generator settings, seeded from the run seed.
    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            seed: self.seed,
            ..self.synth.clone()
        }
    }

    pub fn model_config(&self, num_classes: usize, feature_dim: usize) -> Result<ModelConfig> {
        let c = ModelConfig {
            num_classes,
            feature_dim,
            hidden_channels: self.hidden_channels,
            snippet_len: self.snippet_len,
            clip_len: self.clip_len,
            dilations: self.dilations.clone(),
        };
        c.validate()?;
        Ok(c)
    }

    pub fn eval_config(&self, num_classes: usize, weak: bool) -> Result<EvalConfig> {
        let th = match &self.eval_iou {
            Some(t) => t.clone(),
            None if weak => WEAK_IOU_THRESHOLDS.to_vec(),
            None => STRONG_IOU_THRESHOLDS.to_vec(),
        };
        EvalConfig::new(th, num_classes)
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.out_dir.join(p)
        }
    }

    pub fn data_path(&self) -> PathBuf {
        self.data_dir.clone().unwrap_or_else(|| self.out_dir.join("data"))
    }

    pub fn model_path(&self) -> PathBuf {
        self.resolve(&self.model_file)
    }

    pub fn predictions_path(&self) -> PathBuf {
        self.resolve(&self.predictions_file)
    }

    pub fn tracks_path(&self) -> PathBuf {
        self.resolve(&self.tracks_file)
    }

    pub fn report_path(&self) -> PathBuf {
        self.resolve(&self.report_file)
    }

    pub fn train_log_path(&self) -> PathBuf {
        self.resolve(&self.train_log_file)
    }

    /// Every setting as `key = value` lines; parses back to the same config.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        put("seed", self.seed.to_string());
        if let Some(t) = self.threads {
            put("threads", t.to_string());
        }
        put("out_dir", self.out_dir.display().to_string());
        if let Some(d) = &self.data_dir {
            put("data_dir", d.display().to_string());
        }
        put("model_file", self.model_file.display().to_string());
        put("predictions_file", self.predictions_file.display().to_string());
        put("tracks_file", self.tracks_file.display().to_string());
        put("report_file", self.report_file.display().to_string());
        put("train_log_file", self.train_log_file.display().to_string());
        for line in self.synth.echo().lines() {
            if let Some((k, v)) = line.split_once(" = ") {
                if k != "seed" {
                    put(&format!("synth.{k}"), v.to_string());
                }
            }
        }
        put("head", self.head.to_string());
        put("hidden_channels", self.hidden_channels.to_string());
        put("snippet_len", self.snippet_len.to_string());
        put("clip_len", self.clip_len.to_string());
        put("dilations", join(&self.dilations));
        put("learning_rate", self.learning_rate.to_string());
        put("momentum", self.momentum.to_string());
        put("weight_decay", self.weight_decay.to_string());
        put("batch_size", self.batch_size.to_string());
        put("iterations", self.iterations.to_string());
        put("clip_stride", self.clip_stride.to_string());
        put("weak_segments", self.weak_segments.to_string());
        put("pooling", self.pooling.to_string());
        put(
            "weak_expansion",
            match self.weak_expansion {
                WeakExpansion::Nearest => "nearest",
                WeakExpansion::Bilinear => "bilinear",
            }
            .to_string(),
        );
        if let Some(t) = &self.eval_iou {
            put("eval_iou", join(t));
        }
        put("predict_iou", self.predict_iou.to_string());
        put("pr_curves", self.pr_curves.to_string());
        put(
            "ablate",
            match self.ablate {
                AblateMode::Strong => "strong",
                AblateMode::Weak => "weak",
                AblateMode::Both => "both",
            }
            .to_string(),
        );
        put("gradcheck_seeds", self.gradcheck_seeds.to_string());
        put("gradcheck_tolerance", self.gradcheck_tolerance.to_string());
        out
    }
}
