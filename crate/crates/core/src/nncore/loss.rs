use crate::error::{FsnError, Result};
use crate::nncore::ops::{compensated_sum, log_softmax_vec, softmax_vec};
use crate::nncore::SeqTensor;

/// Batch of per-frame logits with matching one-hot targets.
#[derive(Clone, Debug)]
pub struct LossInput {
    pub logits: Vec<SeqTensor>,
    pub labels: Vec<SeqTensor>,
}

impl LossInput {
    /// Builds one-hot targets from per-frame class indices.
    pub fn from_class_ids(logits: Vec<SeqTensor>, class_ids: &[Vec<usize>]) -> Result<Self> {
        if logits.len() != class_ids.len() {
            return Err(FsnError::shape("logits and labels differ in batch size"));
        }
        let labels = logits
            .iter()
            .zip(class_ids)
            .map(|(l, ids)| one_hot(ids, l.channels()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { logits, labels })
    }
}

pub fn one_hot(ids: &[usize], classes: usize) -> Result<SeqTensor> {
    if ids.is_empty() {
        return Err(FsnError::Labels("empty label sequence".into()));
    }
    let mut y = SeqTensor::zeros(ids.len(), classes);
    for (t, &k) in ids.iter().enumerate() {
        if k >= classes {
            return Err(FsnError::Labels(format!(
                "label {k} at frame {t} outside 0..{classes}"
            )));
        }
        y.set(t, k, 1.0);
    }
    Ok(y)
}

fn hot_index(row: &[f64]) -> Option<usize> {
    let mut hot = None;
    for (k, &v) in row.iter().enumerate() {
        if v == 1.0 {
            if hot.is_some() {
                return None;
            }
            hot = Some(k);
        } else if v != 0.0 {
            return None;
        }
    }
    hot
}

/// Frame-wise softmax cross-entropy: summed over time and classes, averaged
/// over the batch. Returns the loss and its gradient with respect to every
/// logit.
pub fn framewise_cross_entropy(input: &LossInput) -> Result<(f64, Vec<SeqTensor>)> {
    let batch = input.logits.len();
    if batch == 0 || input.labels.len() != batch {
        return Err(FsnError::shape("loss needs a non-empty batch of matching labels"));
    }
    let scale = 1.0 / batch as f64;
    let mut terms = Vec::new();
    let mut grads = Vec::with_capacity(batch);
    for (b, (o, y)) in input.logits.iter().zip(&input.labels).enumerate() {
        y.ensure_shape(o.len(), o.channels(), "loss labels")?;
        let mut g = SeqTensor::zeros(o.len(), o.channels());
        for t in 0..o.len() {
            let k = hot_index(y.row(t)).ok_or_else(|| {
                FsnError::Labels(format!("label row ({b}, {t}) is not one-hot"))
            })?;
            let logp = log_softmax_vec(o.row(t));
            terms.push(-logp[k]);
            let p = softmax_vec(o.row(t));
            for (c, gv) in g.row_mut(t).iter_mut().enumerate() {
                *gv = scale * (p[c] - if c == k { 1.0 } else { 0.0 });
            }
        }
        grads.push(g);
    }
    let loss = compensated_sum(terms) * scale;
    if !loss.is_finite() {
        return Err(FsnError::NonFinite(format!("cross-entropy loss is {loss}")));
    }
    Ok((loss, grads))
}
