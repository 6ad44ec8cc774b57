use rayon::prelude::*;

use crate::data::{ClipSample, WeakSample};
use crate::error::{FsnError, Result};
use crate::model::heads::{FrameHead, WfsnHead};
use crate::model::net::{NetGrads, TemporalNet};
use crate::nncore::gradcheck::Objective;
use crate::nncore::ops::{compensated_sum, log_softmax_vec};
use crate::nncore::{
    bilinear_upsample_1d, bilinear_upsample_1d_backward, framewise_cross_entropy, sgd_update,
    softmax_vec, temporal_pool, temporal_pool_backward, LossInput, OptimizerState, Pooling,
    SeqTensor,
};

struct SampleResult {
    loss: f64,
    grads: NetGrads,
    region: u64,
}

fn check_dim(net: &TemporalNet, features: &SeqTensor) -> Result<()> {
    if features.channels() != net.in_channels() {
        return Err(FsnError::shape(format!(
            "sample features have dimension {}, model expects {}",
            features.channels(),
            net.in_channels()
        )));
    }
    Ok(())
}

fn clip_loss(net: &TemporalNet, clip: &ClipSample) -> Result<SampleResult> {
    check_dim(net, &clip.features)?;
    let cache = net.forward_cached(&clip.features)?;
    let logits = cache.logits();
    let up = bilinear_upsample_1d(logits, clip.labels.len())?;
    let input = LossInput::from_class_ids(vec![up], std::slice::from_ref(&clip.labels))?;
    let (loss, mut grads) = framewise_cross_entropy(&input)?;
    let grad_logits = bilinear_upsample_1d_backward(&grads.remove(0), logits.len())?;
    let (grads, _) = net.backward(&cache, &grad_logits)?;
    Ok(SampleResult {
        loss,
        grads,
        region: cache.relu_pattern(),
    })
}

/// Cross-entropy against every positive class, averaged over positives.
fn weak_loss(net: &TemporalNet, pooling: Pooling, sample: &WeakSample) -> Result<SampleResult> {
    check_dim(net, &sample.features)?;
    let k = net.out_channels();
    if sample.video_label.len() != k {
        return Err(FsnError::shape(format!(
            "video label has {} classes, head has {k}",
            sample.video_label.len()
        )));
    }
    let positives = sample.positives();
    if positives == 0 {
        return Err(FsnError::Labels(format!(
            "weak sample `{}` has no positive class",
            sample.video_id
        )));
    }
    let cache = net.forward_cached(&sample.features)?;
    let scores = cache.logits();
    let pooled = temporal_pool(scores, pooling);
    let logp = log_softmax_vec(&pooled);
    let p = softmax_vec(&pooled);
    let weight = 1.0 / positives as f64;
    let mut loss = 0.0;
    let mut grad_pooled = p;
    for (c, &pos) in sample.video_label.iter().enumerate() {
        if pos {
            loss -= weight * logp[c];
            grad_pooled[c] -= weight;
        }
    }
    let grad_scores = temporal_pool_backward(scores, pooling, &grad_pooled)?;
    let (grads, _) = net.backward(&cache, &grad_scores)?;
    let mut region = cache.relu_pattern();
    if pooling == Pooling::Gmp {
        // The argmax position is part of the piece too.
        for c in 0..k {
            let col = scores.channel(c);
            let arg = col
                .iter()
                .enumerate()
                .fold(0, |b, (i, v)| if *v > col[b] { i } else { b });
            region = region.rotate_left(7) ^ arg as u64;
        }
    }
    Ok(SampleResult {
        loss,
        grads,
        region,
    })
}

/// Sums per-sample results in batch order, so the result does not depend on
/// how the samples were scheduled across threads.
fn reduce(net: &TemporalNet, results: Vec<SampleResult>) -> (f64, NetGrads, u64) {
    let scale = 1.0 / results.len() as f64;
    let mut total = NetGrads::zeros_like(net);
    let mut region = 0u64;
    let loss = compensated_sum(results.iter().map(|r| r.loss));
    for r in &results {
        total.add_assign(&r.grads);
        region = region.rotate_left(13) ^ r.region;
    }
    total.scale(scale);
    (loss * scale, total, region)
}

/// Batch loss (frame-wise cross-entropy, mean over clips) and its gradient.
pub fn fsn_batch_gradient(net: &TemporalNet, batch: &[ClipSample]) -> Result<(f64, NetGrads)> {
    let (loss, grads, _) = fsn_batch_eval(net, batch)?;
    Ok((loss, grads))
}

fn fsn_batch_eval(net: &TemporalNet, batch: &[ClipSample]) -> Result<(f64, NetGrads, u64)> {
    if batch.is_empty() {
        return Err(FsnError::invalid("empty training batch"));
    }
    let results = batch
        .par_iter()
        .map(|c| clip_loss(net, c))
        .collect::<Result<Vec<_>>>()?;
    Ok(reduce(net, results))
}

pub fn wfsn_batch_gradient(
    net: &TemporalNet,
    pooling: Pooling,
    batch: &[WeakSample],
) -> Result<(f64, NetGrads)> {
    let (loss, grads, _) = wfsn_batch_eval(net, pooling, batch)?;
    Ok((loss, grads))
}

fn wfsn_batch_eval(
    net: &TemporalNet,
    pooling: Pooling,
    batch: &[WeakSample],
) -> Result<(f64, NetGrads, u64)> {
    if batch.is_empty() {
        return Err(FsnError::invalid("empty training batch"));
    }
    let results = batch
        .par_iter()
        .map(|s| weak_loss(net, pooling, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(reduce(net, results))
}

fn apply(net: &mut TemporalNet, grads: &NetGrads, loss: f64, opt: &mut OptimizerState) -> Result<f64> {
    if !loss.is_finite() {
        return Err(FsnError::NonFinite(format!("training loss {loss}; step aborted")));
    }
    let slices = grads.slices();
    sgd_update(&mut net.param_slots(), &slices, opt)?;
    Ok(loss)
}

/// One SGD step on a batch of clips. Returns the loss before the update.
pub fn fsn_train_step<H: FrameHead>(
    batch: &[ClipSample],
    head: &mut H,
    opt: &mut OptimizerState,
) -> Result<f64> {
    let (loss, grads) = fsn_batch_gradient(head.net(), batch)?;
    apply(head.net_mut(), &grads, loss, opt)
}

/// One SGD step of the weak head on a batch of videos.
pub fn wfsn_train_step(
    batch: &[WeakSample],
    head: &mut WfsnHead,
    opt: &mut OptimizerState,
) -> Result<f64> {
    let (loss, grads) = wfsn_batch_gradient(head.net(), head.pooling(), batch)?;
    apply(head.net_mut(), &grads, loss, opt)
}

/// Strong-head batch loss as a function of the flattened parameters.
pub struct FsnLossObjective<'a> {
    pub net: &'a TemporalNet,
    pub batch: &'a [ClipSample],
}

/// Weak-head batch loss as a function of the flattened parameters.
pub struct WfsnLossObjective<'a> {
    pub net: &'a TemporalNet,
    pub pooling: Pooling,
    pub batch: &'a [WeakSample],
}

fn with_params(net: &TemporalNet, params: &[f64]) -> Result<TemporalNet> {
    let mut n = net.clone();
    n.set_flat_params(params)?;
    Ok(n)
}

impl Objective for FsnLossObjective<'_> {
    fn value(&self, params: &[f64]) -> Result<f64> {
        Ok(fsn_batch_eval(&with_params(self.net, params)?, self.batch)?.0)
    }

    fn gradient(&self, params: &[f64]) -> Result<Vec<f64>> {
        Ok(fsn_batch_eval(&with_params(self.net, params)?, self.batch)?.1.flatten())
    }

    fn region(&self, params: &[f64]) -> u64 {
        with_params(self.net, params)
            .and_then(|n| fsn_batch_eval(&n, self.batch))
            .map_or(0, |r| r.2)
    }

    fn probe(&self, params: &[f64]) -> Result<(f64, u64)> {
        let (loss, _, region) = fsn_batch_eval(&with_params(self.net, params)?, self.batch)?;
        Ok((loss, region))
    }
}

impl Objective for WfsnLossObjective<'_> {
    fn value(&self, params: &[f64]) -> Result<f64> {
        Ok(wfsn_batch_eval(&with_params(self.net, params)?, self.pooling, self.batch)?.0)
    }

    fn gradient(&self, params: &[f64]) -> Result<Vec<f64>> {
        Ok(wfsn_batch_eval(&with_params(self.net, params)?, self.pooling, self.batch)?
            .1
            .flatten())
    }

    fn region(&self, params: &[f64]) -> u64 {
        with_params(self.net, params)
            .and_then(|n| wfsn_batch_eval(&n, self.pooling, self.batch))
            .map_or(0, |r| r.2)
    }

    fn probe(&self, params: &[f64]) -> Result<(f64, u64)> {
        let (loss, _, region) =
            wfsn_batch_eval(&with_params(self.net, params)?, self.pooling, self.batch)?;
        Ok((loss, region))
    }
}
