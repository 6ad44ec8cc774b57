//! Finite-difference checks over every layer type and both heads.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{ClipSample, WeakSample};
use crate::error::Result;
use crate::model::train::{FsnLossObjective, WfsnLossObjective};
use crate::model::{AblationHead, FrameHead, FsnHead, ModelConfig, WfsnHead};
use crate::nncore::gradcheck::sign_pattern_hash;
use crate::nncore::{
    bilinear_upsample_1d, bilinear_upsample_1d_backward, framewise_cross_entropy, gradient_check, relu,
    relu_backward, temporal_pool, temporal_pool_backward, ConvLayer1D, GradCheckReport, LossInput, Objective,
    Pooling, SeqTensor,
};

fn random_seq(rng: &mut ChaCha8Rng, len: usize, ch: usize) -> SeqTensor {
    SeqTensor::from_fn(len, ch, |_, _| rng.gen_range(-1.0..1.0))
}

fn weighted_sum(a: &SeqTensor, r: &SeqTensor) -> f64 {
    a.as_slice().iter().zip(r.as_slice()).map(|(x, y)| x * y).sum()
}

/// `sum(R * conv(x))` over weights, bias and input.
struct ConvObjective {
    layer: ConvLayer1D,
    len: usize,
    r: SeqTensor,
    /// Scales the weight gradient; anything but 1 is a broken backward pass.
    corrupt: f64,
}

impl ConvObjective {
    fn split(&self, p: &[f64]) -> Result<(ConvLayer1D, SeqTensor)> {
        let l = &self.layer;
        let nw = l.weights().len();
        let nb = l.bias().len();
        let layer = ConvLayer1D::with_params(
            l.in_channels(),
            l.out_channels(),
            l.kernel_size(),
            l.dilation(),
            p[..nw].to_vec(),
            p[nw..nw + nb].to_vec(),
        )?;
        let x = SeqTensor::new(self.len, l.in_channels(), p[nw + nb..].to_vec())?;
        Ok((layer, x))
    }
}

impl Objective for ConvObjective {
    fn value(&self, p: &[f64]) -> Result<f64> {
        let (layer, x) = self.split(p)?;
        Ok(weighted_sum(&layer.forward(&x)?, &self.r))
    }

    fn gradient(&self, p: &[f64]) -> Result<Vec<f64>> {
        let (layer, x) = self.split(p)?;
        let g = layer.backward(&x, &self.r)?;
        let mut out: Vec<f64> = g.weights.iter().map(|v| v * self.corrupt).collect();
        out.extend_from_slice(&g.bias);
        out.extend_from_slice(g.input.as_slice());
        Ok(out)
    }
}

struct ReluObjective {
    r: SeqTensor,
}

impl Objective for ReluObjective {
    fn value(&self, p: &[f64]) -> Result<f64> {
        let x = SeqTensor::new(self.r.len(), self.r.channels(), p.to_vec())?;
        Ok(weighted_sum(&relu(&x), &self.r))
    }

    fn gradient(&self, p: &[f64]) -> Result<Vec<f64>> {
        let x = SeqTensor::new(self.r.len(), self.r.channels(), p.to_vec())?;
        Ok(relu_backward(&x, &self.r)?.into_vec())
    }

    fn region(&self, p: &[f64]) -> u64 {
        sign_pattern_hash(p)
    }
}

struct UpsampleObjective {
    src_len: usize,
    r: SeqTensor,
}

impl Objective for UpsampleObjective {
    fn value(&self, p: &[f64]) -> Result<f64> {
        let x = SeqTensor::new(self.src_len, self.r.channels(), p.to_vec())?;
        Ok(weighted_sum(&bilinear_upsample_1d(&x, self.r.len())?, &self.r))
    }

    fn gradient(&self, _p: &[f64]) -> Result<Vec<f64>> {
        Ok(bilinear_upsample_1d_backward(&self.r, self.src_len)?.into_vec())
    }
}

/// Frame-wise softmax cross-entropy over a batch of logit sequences.
struct SoftmaxCeObjective {
    shapes: Vec<(usize, usize)>,
    labels: Vec<Vec<usize>>,
}

impl SoftmaxCeObjective {
    fn input(&self, p: &[f64]) -> Result<LossInput> {
        let mut off = 0;
        let mut logits = Vec::new();
        for &(len, ch) in &self.shapes {
            logits.push(SeqTensor::new(len, ch, p[off..off + len * ch].to_vec())?);
            off += len * ch;
        }
        LossInput::from_class_ids(logits, &self.labels)
    }
}

impl Objective for SoftmaxCeObjective {
    fn value(&self, p: &[f64]) -> Result<f64> {
        Ok(framewise_cross_entropy(&self.input(p)?)?.0)
    }

    fn gradient(&self, p: &[f64]) -> Result<Vec<f64>> {
        let (_, grads) = framewise_cross_entropy(&self.input(p)?)?;
        Ok(grads.into_iter().flat_map(SeqTensor::into_vec).collect())
    }
}

struct PoolObjective {
    mode: Pooling,
    len: usize,
    r: Vec<f64>,
}

impl PoolObjective {
    fn seq(&self, p: &[f64]) -> Result<SeqTensor> {
        SeqTensor::new(self.len, self.r.len(), p.to_vec())
    }
}

impl Objective for PoolObjective {
    fn value(&self, p: &[f64]) -> Result<f64> {
        let pooled = temporal_pool(&self.seq(p)?, self.mode);
        Ok(pooled.iter().zip(&self.r).map(|(a, b)| a * b).sum())
    }

    fn gradient(&self, p: &[f64]) -> Result<Vec<f64>> {
        Ok(temporal_pool_backward(&self.seq(p)?, self.mode, &self.r)?.into_vec())
    }

    fn region(&self, p: &[f64]) -> u64 {
        let Ok(x) = self.seq(p) else { return 0 };
        if self.mode == Pooling::Gap {
            return 0;
        }
        // The max position of each channel identifies the smooth piece.
        let pooled = temporal_pool(&x, self.mode);
        let mut h = 0u64;
        for (c, m) in pooled.iter().enumerate() {
            let arg = (0..x.len()).find(|&t| x.get(t, c) == *m).unwrap_or(0);
            h = h.rotate_left(9) ^ arg as u64;
        }
        h
    }
}

/// Aggregate of one check over all seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckSummary {
    pub name: String,
    pub max_relative_error: f64,
    pub checked: usize,
    pub skipped: usize,
    pub runs: usize,
    pub tolerance: f64,
}

impl CheckSummary {
    fn new(name: &str, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            max_relative_error: 0.0,
            checked: 0,
            skipped: 0,
            runs: 0,
            tolerance,
        }
    }

    fn add(&mut self, r: &GradCheckReport) {
        self.max_relative_error = self.max_relative_error.max(r.max_relative_error);
        self.checked += r.checked;
        self.skipped += r.skipped;
        self.runs += 1;
    }

    pub fn passed(&self) -> bool {
        self.checked > 0 && self.max_relative_error < self.tolerance
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteReport {
    pub seeds: usize,
    pub tolerance: f64,
    pub checks: Vec<CheckSummary>,
    /// Conv check with a deliberately scaled weight gradient; must fail.
    pub negative_control: CheckSummary,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckSummary::passed) && !self.negative_control.passed()
    }

    pub fn render(&self) -> String {
        let mut s = format!(
            "gradient check: {} seeds, tolerance {:e}\n{:<22} {:>14} {:>9} {:>8}  result\n",
            self.seeds, self.tolerance, "check", "max rel err", "checked", "skipped"
        );
        let mut line = |c: &CheckSummary, ok: bool| {
            let _ = writeln!(
                s,
                "{:<22} {:>14.3e} {:>9} {:>8}  {}",
                c.name,
                c.max_relative_error,
                c.checked,
                c.skipped,
                if ok { "ok" } else { "FAIL" }
            );
        };
        for c in &self.checks {
            line(c, c.passed());
        }
        let nc = &self.negative_control;
        line(nc, !nc.passed());
        let _ = writeln!(s, "overall: {}", if self.passed() { "PASS" } else { "FAIL" });
        s
    }
}

fn conv_objective(rng: &mut ChaCha8Rng, corrupt: f64) -> Result<(ConvObjective, Vec<f64>)> {
    let cin = rng.gen_range(1..=4);
    let cout = rng.gen_range(1..=4);
    let k = [1, 3, 5][rng.gen_range(0..3)];
    let d = rng.gen_range(1..=3);
    let len = rng.gen_range(1..=12);
    let w: Vec<f64> = (0..cin * cout * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let b: Vec<f64> = (0..cout).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let x = random_seq(rng, len, cin);
    let mut params = w.clone();
    params.extend_from_slice(&b);
    params.extend_from_slice(x.as_slice());
    let layer = ConvLayer1D::with_params(cin, cout, k, d, w, b)?;
    let r = random_seq(rng, len, cout);
    Ok((ConvObjective { layer, len, r, corrupt }, params))
}

fn toy_clips(rng: &mut ChaCha8Rng, d: usize, k: usize, n: usize, snippet: usize, count: usize) -> Vec<ClipSample> {
    (0..count)
        .map(|i| ClipSample {
            video_id: format!("clip{i}"),
            start: 0,
            features: random_seq(rng, n, d),
            labels: (0..n * snippet).map(|_| rng.gen_range(0..=k)).collect(),
        })
        .collect()
}

fn toy_weak(rng: &mut ChaCha8Rng, d: usize, k: usize, m: usize, count: usize) -> Vec<WeakSample> {
    (0..count)
        .map(|i| {
            let mut label: Vec<bool> = (0..k).map(|_| rng.gen_bool(0.4)).collect();
            label[i % k] = true;
            WeakSample {
                video_id: format!("w{i}"),
                features: random_seq(rng, m, d),
                video_label: label,
            }
        })
        .collect()
}

/// Runs every check for seeds `0..seeds`.
pub fn run_gradcheck_suite(seeds: usize, tolerance: f64) -> Result<SuiteReport> {
    let names = [
        "conv1d",
        "relu",
        "upsample",
        "softmax_ce",
        "pool_gap",
        "pool_gmp",
        "fsn_head_loss",
        "ablation_head_loss",
        "wfsn_gap_loss",
        "wfsn_gmp_loss",
    ];
    let mut checks: Vec<CheckSummary> = names.iter().map(|n| CheckSummary::new(n, tolerance)).collect();
    let mut negative = CheckSummary::new("negative_control", tolerance);
    for seed in 0..seeds as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        let (obj, p) = conv_objective(&mut rng, 1.0)?;
        checks[0].add(&gradient_check(&obj, &p, tolerance)?);

        let (len, ch) = (rng.gen_range(1..=10), rng.gen_range(1..=4));
        let x = random_seq(&mut rng, len, ch);
        let r = random_seq(&mut rng, x.len(), x.channels());
        checks[1].add(&gradient_check(&ReluObjective { r }, x.as_slice(), tolerance)?);

        let ch = rng.gen_range(1..=3);
        let src_len = rng.gen_range(1..=8);
        let target = src_len * rng.gen_range(1..=5);
        let x = random_seq(&mut rng, src_len, ch);
        let r = random_seq(&mut rng, target, ch);
        checks[2].add(&gradient_check(&UpsampleObjective { src_len, r }, x.as_slice(), tolerance)?);

        let ch = rng.gen_range(2..=5);
        let shapes: Vec<(usize, usize)> = (0..rng.gen_range(1..=3)).map(|_| (rng.gen_range(1..=6), ch)).collect();
        let labels = shapes
            .iter()
            .map(|&(len, _)| (0..len).map(|_| rng.gen_range(0..ch)).collect())
            .collect();
        let p: Vec<f64> = shapes
            .iter()
            .flat_map(|&(l, c)| random_seq(&mut rng, l, c).into_vec())
            .collect();
        checks[3].add(&gradient_check(&SoftmaxCeObjective { shapes, labels }, &p, tolerance)?);

        for (slot, mode) in [(4, Pooling::Gap), (5, Pooling::Gmp)] {
            let len = rng.gen_range(1..=10);
            let ch = rng.gen_range(1..=4);
            let x = random_seq(&mut rng, len, ch);
            let r: Vec<f64> = (0..ch).map(|_| rng.gen_range(-1.0..1.0)).collect();
            checks[slot].add(&gradient_check(&PoolObjective { mode, len, r }, x.as_slice(), tolerance)?);
        }

        // End-to-end heads on the small configuration D=8, hidden 16, K=2, N=7.
        let config = ModelConfig::new(2, 8).with_hidden(16);
        let clips = toy_clips(&mut rng, 8, 2, 7, 5, 2);
        let fsn = FsnHead::init(config.clone(), seed)?;
        let obj = FsnLossObjective { net: fsn.net(), batch: &clips };
        checks[6].add(&gradient_check(&obj, &fsn.net().flat_params(), tolerance)?);
        let abl = AblationHead::init(config.clone(), seed)?;
        let obj = FsnLossObjective { net: abl.net(), batch: &clips };
        checks[7].add(&gradient_check(&obj, &abl.net().flat_params(), tolerance)?);

        let weak_config = ModelConfig::new(3, 6).with_hidden(8);
        let samples = toy_weak(&mut rng, 6, 3, 12, 2);
        for (slot, pooling) in [(8, Pooling::Gap), (9, Pooling::Gmp)] {
            let head = WfsnHead::init(weak_config.clone(), pooling, seed)?;
            let obj = WfsnLossObjective { net: head.net(), pooling, batch: &samples };
            checks[slot].add(&gradient_check(&obj, &head.net().flat_params(), tolerance)?);
        }

        let (obj, p) = conv_objective(&mut rng, 1.0 + 1e-3)?;
        negative.add(&gradient_check(&obj, &p, tolerance)?);
    }
    Ok(SuiteReport {
        seeds,
        tolerance,
        checks,
        negative_control: negative,
    })
}
