use std::fmt;
use std::str::FromStr;

use crate::error::{FsnError, Result};
use crate::nncore::SeqTensor;

pub fn relu(x: &SeqTensor) -> SeqTensor {
    let mut out = x.clone();
    for v in out.as_mut_slice() {
        *v = v.max(0.0);
    }
    out
}

/// Masks `grad_out` where the forward input was `<= 0`.
pub fn relu_backward(x: &SeqTensor, grad_out: &SeqTensor) -> Result<SeqTensor> {
    grad_out.ensure_shape(x.len(), x.channels(), "relu backward")?;
    let mut g = grad_out.clone();
    for (gv, xv) in g.as_mut_slice().iter_mut().zip(x.as_slice()) {
        if *xv <= 0.0 {
            *gv = 0.0;
        }
    }
    Ok(g)
}

/// Source taps for one output position of the endpoint-aligned linear
/// interpolation: `(lo, hi, alpha)` with `out = (1 - alpha) x[lo] + alpha x[hi]`.
fn upsample_taps(t: usize, src_len: usize, dst_len: usize) -> (usize, usize, f64) {
    if src_len == 1 || dst_len == 1 {
        return (0, 0, 0.0);
    }
    // s = t (N-1) / (T-1), kept as an exact rational so N == T is the identity.
    let num = t * (src_len - 1);
    let den = dst_len - 1;
    let lo = num / den;
    let rem = num % den;
    if rem == 0 {
        (lo, lo, 0.0)
    } else {
        (lo, lo + 1, rem as f64 / den as f64)
    }
}

/// Parameter-free linear interpolation along time from `N` to `target_len` rows.
pub fn bilinear_upsample_1d(x: &SeqTensor, target_len: usize) -> Result<SeqTensor> {
    let n = x.len();
    if target_len < n {
        return Err(FsnError::invalid(format!(
            "upsample target {target_len} shorter than input {n}"
        )));
    }
    let c = x.channels();
    let mut out = SeqTensor::zeros(target_len, c);
    for t in 0..target_len {
        let (lo, hi, a) = upsample_taps(t, n, target_len);
        let (xl, xh) = (x.row(lo), x.row(hi));
        for (k, o) in out.row_mut(t).iter_mut().enumerate() {
            *o = if a == 0.0 {
                xl[k]
            } else {
                (1.0 - a) * xl[k] + a * xh[k]
            };
        }
    }
    Ok(out)
}

/// Transpose of [`bilinear_upsample_1d`].
pub fn bilinear_upsample_1d_backward(grad_out: &SeqTensor, src_len: usize) -> Result<SeqTensor> {
    let target_len = grad_out.len();
    if src_len == 0 || target_len < src_len {
        return Err(FsnError::invalid(format!(
            "upsample backward: cannot map {target_len} rows back to {src_len}"
        )));
    }
    let c = grad_out.channels();
    let mut grad = SeqTensor::zeros(src_len, c);
    for t in 0..target_len {
        let (lo, hi, a) = upsample_taps(t, src_len, target_len);
        let g = grad_out.row(t).to_vec();
        for (k, gv) in g.iter().enumerate() {
            let lo_v = grad.get(lo, k);
            grad.set(lo, k, lo_v + (1.0 - a) * gv);
            if a != 0.0 {
                let hi_v = grad.get(hi, k);
                grad.set(hi, k, hi_v + a * gv);
            }
        }
    }
    Ok(grad)
}

pub fn softmax_vec(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Log-softmax of one row, stable for large logits.
pub fn log_softmax_vec(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = x.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    x.iter().map(|v| (v - max) - log_sum).collect()
}

/// Neumaier-compensated sum. Loss totals go through this so that central
/// differences of the loss are not swamped by accumulation rounding.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut carry = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            carry += (sum - t) + v;
        } else {
            carry += (v - t) + sum;
        }
        sum = t;
    }
    sum + carry
}

/// Independent softmax over the channels of every time step.
pub fn framewise_softmax(x: &SeqTensor) -> SeqTensor {
    let mut out = x.clone();
    for t in 0..x.len() {
        let s = softmax_vec(x.row(t));
        out.row_mut(t).copy_from_slice(&s);
    }
    out
}

/// Temporal pooling mode for the weakly supervised head.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Pooling {
    /// Global average pooling.
    Gap,
    /// Global max pooling.
    Gmp,
}

impl Pooling {
    pub fn code(self) -> u8 {
        match self {
            Pooling::Gap => 1,
            Pooling::Gmp => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(Pooling::Gap),
            2 => Some(Pooling::Gmp),
            _ => None,
        }
    }
}

impl fmt::Display for Pooling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pooling::Gap => "gap",
            Pooling::Gmp => "gmp",
        })
    }
}

impl FromStr for Pooling {
    type Err = FsnError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gap" | "avg" | "average" => Ok(Pooling::Gap),
            "gmp" | "max" => Ok(Pooling::Gmp),
            other => Err(FsnError::Config(format!("unknown pooling mode `{other}`"))),
        }
    }
}

/// Collapses the time axis to one value per channel.
pub fn temporal_pool(x: &SeqTensor, mode: Pooling) -> Vec<f64> {
    let (len, c) = x.shape();
    match mode {
        Pooling::Gap => {
            let mut acc = vec![0.0; c];
            for row in x.rows() {
                for (a, v) in acc.iter_mut().zip(row) {
                    *a += v;
                }
            }
            acc.iter_mut().for_each(|a| *a /= len as f64);
            acc
        }
        Pooling::Gmp => (0..c).map(|k| x.get(argmax_time(x, k), k)).collect(),
    }
}

/// Earliest time index holding the channel maximum.
fn argmax_time(x: &SeqTensor, k: usize) -> usize {
    let mut best = 0;
    for t in 1..x.len() {
        if x.get(t, k) > x.get(best, k) {
            best = t;
        }
    }
    best
}

pub fn temporal_pool_backward(x: &SeqTensor, mode: Pooling, grad_pooled: &[f64]) -> Result<SeqTensor> {
    let (len, c) = x.shape();
    if grad_pooled.len() != c {
        return Err(FsnError::shape(format!(
            "pool backward: expected {c} gradients, got {}",
            grad_pooled.len()
        )));
    }
    let mut g = SeqTensor::zeros(len, c);
    match mode {
        Pooling::Gap => {
            for t in 0..len {
                for (k, gp) in grad_pooled.iter().enumerate() {
                    g.set(t, k, gp / len as f64);
                }
            }
        }
        Pooling::Gmp => {
            for (k, gp) in grad_pooled.iter().enumerate() {
                g.set(argmax_time(x, k), k, *gp);
            }
        }
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn relu_examples() {
        let x = SeqTensor::column(&[-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&x).as_slice(), &[0.0, 0.0, 2.0]);
        let g = SeqTensor::column(&[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(relu_backward(&x, &g).unwrap().as_slice(), &[0.0, 0.0, 1.0]);
        let pos = SeqTensor::column(&[0.5, 3.0]).unwrap();
        assert_eq!(relu(&pos), pos);
    }

    #[test]
    fn upsample_two_to_five() {
        let x = SeqTensor::column(&[0.0, 1.0]).unwrap();
        let y = bilinear_upsample_1d(&x, 5).unwrap();
        assert_eq!(y.as_slice(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn upsample_identity_and_single_row() {
        let x = SeqTensor::from_fn(7, 3, |t, c| (t * 3 + c) as f64 * 0.37 - 1.0);
        assert_eq!(bilinear_upsample_1d(&x, 7).unwrap(), x);
        let one = SeqTensor::from_rows(&[vec![2.0, -1.0]]).unwrap();
        let y = bilinear_upsample_1d(&one, 4).unwrap();
        assert!(y.rows().all(|r| r == [2.0, -1.0]));
        assert!(bilinear_upsample_1d(&x, 6).is_err());
    }

    #[test]
    fn upsample_backward_is_transpose() {
        // <U x, g> == <x, U^T g> for random x, g.
        let x = SeqTensor::from_fn(7, 2, |t, c| ((t * 7 + c * 3) % 5) as f64 - 2.0);
        let g = SeqTensor::from_fn(35, 2, |t, c| ((t * 11 + c) % 9) as f64 * 0.1);
        let ux = bilinear_upsample_1d(&x, 35).unwrap();
        let utg = bilinear_upsample_1d_backward(&g, 7).unwrap();
        let lhs: f64 = ux.as_slice().iter().zip(g.as_slice()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.as_slice().iter().zip(utg.as_slice()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn softmax_examples() {
        let s = framewise_softmax(&SeqTensor::zeros(1, 3));
        for v in s.as_slice() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let e = std::f64::consts::E;
        let s = softmax_vec(&[1.0, 2.0]);
        assert!((s[0] - 1.0 / (1.0 + e)).abs() < 1e-15);
        assert!((s[0] - 0.2689).abs() < 1e-4 && (s[1] - 0.7311).abs() < 1e-4);
        let s = softmax_vec(&[0.0, 3f64.ln()]);
        assert!((s[0] - 0.25).abs() < 1e-15 && (s[1] - 0.75).abs() < 1e-15);
        assert_eq!(softmax_vec(&[0.0; 4]), vec![0.25; 4]);
    }

    #[test]
    fn pooling_examples() {
        let x = SeqTensor::column(&[1.0, 5.0, 3.0]).unwrap();
        assert_eq!(temporal_pool(&x, Pooling::Gap), vec![3.0]);
        assert_eq!(temporal_pool(&x, Pooling::Gmp), vec![5.0]);
        let c = SeqTensor::from_fn(4, 2, |_, k| k as f64 + 0.5);
        assert_eq!(temporal_pool(&c, Pooling::Gap), temporal_pool(&c, Pooling::Gmp));
    }

    #[test]
    fn gmp_tie_routes_to_earliest() {
        let x = SeqTensor::column(&[5.0, 5.0]).unwrap();
        let g = temporal_pool_backward(&x, Pooling::Gmp, &[1.0]).unwrap();
        assert_eq!(g.as_slice(), &[1.0, 0.0]);
        // One-sided differences on perturbed copies: raising index 0 raises the
        // max, lowering index 1 leaves it unchanged.
        let h = 1e-4;
        let up0 = temporal_pool(&SeqTensor::column(&[5.0 + h, 5.0]).unwrap(), Pooling::Gmp)[0];
        let dn1 = temporal_pool(&SeqTensor::column(&[5.0, 5.0 - h]).unwrap(), Pooling::Gmp)[0];
        assert!(((up0 - 5.0) / h - 1.0).abs() < 1e-9);
        assert_eq!(dn1, 5.0);
    }

    proptest! {
        #[test]
        fn softmax_rows_normalized_and_shift_invariant(
            rows in proptest::collection::vec(proptest::collection::vec(-15.0f64..15.0, 3), 1..6),
            shift in -50.0f64..50.0,
        ) {
            let x = SeqTensor::from_rows(&rows).unwrap();
            let s = framewise_softmax(&x);
            let mut shifted = x.clone();
            shifted.as_mut_slice().iter_mut().for_each(|v| *v += shift);
            let s2 = framewise_softmax(&shifted);
            for t in 0..s.len() {
                let sum: f64 = s.row(t).iter().sum();
                prop_assert!((sum - 1.0).abs() < 1e-9);
                prop_assert!(s.row(t).iter().all(|v| *v > 0.0 && *v < 1.0));
            }
            prop_assert!(s.max_abs_diff(&s2) <= 1e-9);
        }

        #[test]
        fn softmax_preserves_argmax(x in proptest::collection::vec(-10.0f64..10.0, 2..8)) {
            let s = softmax_vec(&x);
            let am = |v: &[f64]| v.iter().enumerate().fold(0, |b, (i, y)| if *y > v[b] { i } else { b });
            prop_assert_eq!(am(&x), am(&s));
        }

        #[test]
        fn upsample_exact_on_affine(
            n in 1usize..10, extra in 0usize..30,
            a in proptest::collection::vec(-5.0f64..5.0, 2),
            b in proptest::collection::vec(-5.0f64..5.0, 2),
        ) {
            let target = n + extra;
            let x = SeqTensor::from_fn(n, 2, |t, c| a[c] + b[c] * t as f64);
            let y = bilinear_upsample_1d(&x, target).unwrap();
            for t in 0..target {
                let s = if n == 1 || target == 1 { 0.0 } else { t as f64 * (n - 1) as f64 / (target - 1) as f64 };
                for c in 0..2 {
                    prop_assert!((y.get(t, c) - (a[c] + b[c] * s)).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn gmp_dominates_gap(vals in proptest::collection::vec(-10.0f64..10.0, 1..12)) {
            let x = SeqTensor::column(&vals).unwrap();
            let gap = temporal_pool(&x, Pooling::Gap)[0];
            let gmp = temporal_pool(&x, Pooling::Gmp)[0];
            let constant = vals.iter().all(|v| *v == vals[0]);
            prop_assert!(gmp >= gap - 1e-12);
            if !constant {
                prop_assert!(gmp > gap);
            }
        }
    }
}
