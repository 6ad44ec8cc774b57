use crate::error::{FsnError, Result};
use crate::nncore::SeqTensor;

/// One stride-1 temporal convolution with symmetric zero padding, so the
/// output has the same time length as the input.
///
/// Weights are laid out `[out][in][tap]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer1D {
    in_channels: usize,
    out_channels: usize,
    kernel_size: usize,
    dilation: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

/// Gradients of a scalar loss with respect to one layer's input and parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvGrads {
    pub input: SeqTensor,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvLayer1D {
    /// Zero-initialized layer.
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel_size: usize,
        dilation: usize,
    ) -> Result<Self> {
        if in_channels == 0 || out_channels == 0 {
            return Err(FsnError::invalid("conv channels must be positive"));
        }
        if kernel_size % 2 == 0 {
            return Err(FsnError::invalid(format!(
                "kernel size must be odd, got {kernel_size}"
            )));
        }
        if dilation == 0 {
            return Err(FsnError::invalid("dilation must be positive"));
        }
        Ok(Self {
            in_channels,
            out_channels,
            kernel_size,
            dilation,
            weights: vec![0.0; out_channels * in_channels * kernel_size],
            bias: vec![0.0; out_channels],
        })
    }

    pub fn with_params(
        in_channels: usize,
        out_channels: usize,
        kernel_size: usize,
        dilation: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        let mut layer = Self::new(in_channels, out_channels, kernel_size, dilation)?;
        if weights.len() != layer.weights.len() || bias.len() != out_channels {
            return Err(FsnError::shape(format!(
                "conv parameters: expected {} weights and {} biases, got {} and {}",
                layer.weights.len(),
                out_channels,
                weights.len(),
                bias.len()
            )));
        }
        layer.weights = weights;
        layer.bias = bias;
        Ok(layer)
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn kernel_size(&self) -> usize {
        self.kernel_size
    }

    pub fn dilation(&self) -> usize {
        self.dilation
    }

    /// Zero frames added on each side of the input.
    pub fn padding(&self) -> usize {
        self.dilation * (self.kernel_size - 1) / 2
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    /// Mutable views of weights and bias at once.
    pub fn params_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.weights, &mut self.bias)
    }

    #[inline]
    fn w_index(&self, o: usize, i: usize, j: usize) -> usize {
        (o * self.in_channels + i) * self.kernel_size + j
    }

    /// Input row read by tap `j` at output step `t`, if it is not padding.
    #[inline]
    fn source_row(&self, t: usize, j: usize, len: usize) -> Option<usize> {
        let pos = (t + j * self.dilation).checked_sub(self.padding())?;
        (pos < len).then_some(pos)
    }

    pub fn forward(&self, x: &SeqTensor) -> Result<SeqTensor> {
        if x.channels() != self.in_channels {
            return Err(FsnError::shape(format!(
                "conv expects {} input channels, got {}",
                self.in_channels,
                x.channels()
            )));
        }
        let len = x.len();
        let cin = self.in_channels;
        let wt = self.tap_major();
        let mut out = SeqTensor::zeros(len, self.out_channels);
        for t in 0..len {
            let row = out.row_mut(t);
            row.copy_from_slice(&self.bias);
            for j in 0..self.kernel_size {
                let Some(src) = self.source_row(t, j, len) else {
                    continue;
                };
                let xin = x.row(src);
                let tap = &wt[j * self.out_channels * cin..(j + 1) * self.out_channels * cin];
                for (acc, w) in row.iter_mut().zip(tap.chunks_exact(cin)) {
                    *acc += dot(w, xin);
                }
            }
        }
        Ok(out)
    }

    /// Backward pass given the forward input `x` and the upstream gradient.
    pub fn backward(&self, x: &SeqTensor, grad_out: &SeqTensor) -> Result<ConvGrads> {
        if x.channels() != self.in_channels {
            return Err(FsnError::shape("conv backward: cached input has wrong channels"));
        }
        grad_out.ensure_shape(x.len(), self.out_channels, "conv backward grad_out")?;
        let len = x.len();
        let (cin, cout, k) = (self.in_channels, self.out_channels, self.kernel_size);
        let wt = self.tap_major();
        let mut grad_in = SeqTensor::zeros(len, cin);
        let mut grad_wt = vec![0.0; self.weights.len()];
        let mut grad_b = vec![0.0; cout];
        for t in 0..len {
            let g = grad_out.row(t);
            for (gb, gv) in grad_b.iter_mut().zip(g) {
                *gb += gv;
            }
            for j in 0..k {
                let Some(src) = self.source_row(t, j, len) else {
                    continue;
                };
                let xin = x.row(src);
                let gin = grad_in.row_mut(src);
                let base = j * cout * cin;
                for (o, &go) in g.iter().enumerate() {
                    if go == 0.0 {
                        continue;
                    }
                    let at = base + o * cin;
                    axpy(go, xin, &mut grad_wt[at..at + cin]);
                    axpy(go, &wt[at..at + cin], gin);
                }
            }
        }
        let mut grad_w = vec![0.0; self.weights.len()];
        for j in 0..k {
            for o in 0..cout {
                for i in 0..cin {
                    grad_w[self.w_index(o, i, j)] = grad_wt[(j * cout + o) * cin + i];
                }
            }
        }
        Ok(ConvGrads {
            input: grad_in,
            weights: grad_w,
            bias: grad_b,
        })
    }

    /// Weights reordered `[tap][out][in]` so inner loops run over contiguous input channels.
    fn tap_major(&self) -> Vec<f64> {
        let (cin, cout, k) = (self.in_channels, self.out_channels, self.kernel_size);
        let mut wt = vec![0.0; self.weights.len()];
        for j in 0..k {
            for o in 0..cout {
                for i in 0..cin {
                    wt[(j * cout + o) * cin + i] = self.weights[self.w_index(o, i, j)];
                }
            }
        }
        wt
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yv, xv) in y.iter_mut().zip(x) {
        *yv += alpha * xv;
    }
}

/// Convenience wrapper matching the free-function naming used elsewhere.
pub fn dilated_conv1d_forward(x: &SeqTensor, layer: &ConvLayer1D) -> Result<SeqTensor> {
    layer.forward(x)
}

pub fn dilated_conv1d_backward(
    grad_out: &SeqTensor,
    x: &SeqTensor,
    layer: &ConvLayer1D,
) -> Result<ConvGrads> {
    layer.backward(x, grad_out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::gradcheck::max_relative_error;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Explicitly pads the input, then runs the textbook triple loop.
    fn naive_conv(x: &SeqTensor, layer: &ConvLayer1D) -> Vec<Vec<f64>> {
        let (len, cin) = x.shape();
        let k = layer.kernel_size();
        let d = layer.dilation();
        let pad = d * (k - 1) / 2;
        let mut padded = vec![vec![0.0; cin]; len + 2 * pad];
        for t in 0..len {
            padded[t + pad] = x.row(t).to_vec();
        }
        let mut out = vec![vec![0.0; layer.out_channels()]; len];
        for (t, row) in out.iter_mut().enumerate() {
            for (o, v) in row.iter_mut().enumerate() {
                *v = layer.bias()[o];
                for i in 0..cin {
                    for j in 0..k {
                        *v += layer.weights()[(o * cin + i) * k + j] * padded[t + j * d][i];
                    }
                }
            }
        }
        out
    }

    fn random_layer(rng: &mut ChaCha8Rng, cin: usize, cout: usize, k: usize, d: usize) -> ConvLayer1D {
        let w = (0..cout * cin * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b = (0..cout).map(|_| rng.gen_range(-1.0..1.0)).collect();
        ConvLayer1D::with_params(cin, cout, k, d, w, b).unwrap()
    }

    fn random_seq(rng: &mut ChaCha8Rng, len: usize, c: usize) -> SeqTensor {
        SeqTensor::from_fn(len, c, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn identity_kernel_passes_input_through() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_seq(&mut rng, 6, 3);
        let mut w = vec![0.0; 3 * 3 * 3];
        for c in 0..3 {
            w[(c * 3 + c) * 3 + 1] = 1.0;
        }
        let layer = ConvLayer1D::with_params(3, 3, 3, 2, w, vec![0.0; 3]).unwrap();
        assert_eq!(layer.forward(&x).unwrap(), x);
        // Transpose of the identity map is the identity.
        let g = random_seq(&mut rng, 6, 3);
        assert_eq!(layer.backward(&x, &g).unwrap().input, g);
    }

    #[test]
    fn dilation_two_hand_unrolled() {
        let x = SeqTensor::column(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let layer = ConvLayer1D::with_params(1, 1, 3, 2, vec![1.0; 3], vec![0.0]).unwrap();
        let expected = naive_conv(&x, &layer);
        let frozen = [4.0, 6.0, 9.0, 6.0, 8.0];
        for (t, v) in frozen.iter().enumerate() {
            assert_eq!(expected[t][0], *v);
        }
        assert_eq!(layer.forward(&x).unwrap().as_slice(), &frozen);
    }

    #[test]
    fn matches_naive_oracle_on_all_small_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for len in 1..=12 {
            for cin in 1..=4 {
                for cout in 1..=4 {
                    for d in [1, 2, 4] {
                        let layer = random_layer(&mut rng, cin, cout, 3, d);
                        let x = random_seq(&mut rng, len, cin);
                        let got = layer.forward(&x).unwrap();
                        let want = naive_conv(&x, &layer);
                        assert_eq!(got.len(), len);
                        for t in 0..len {
                            for o in 0..cout {
                                assert!((got.get(t, o) - want[t][o]).abs() <= 1e-12);
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn zero_grad_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let layer = random_layer(&mut rng, 2, 3, 3, 1);
        let x = random_seq(&mut rng, 5, 2);
        let g = layer.backward(&x, &SeqTensor::zeros(5, 3)).unwrap();
        assert!(g.input.as_slice().iter().all(|v| *v == 0.0));
        assert!(g.weights.iter().all(|v| *v == 0.0));
        assert!(g.bias.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn backward_matches_finite_differences() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let d = [1, 2, 4][seed as usize % 3];
            let layer = random_layer(&mut rng, 3, 2, 3, d);
            let x = random_seq(&mut rng, 9, 3);
            let probe = random_seq(&mut rng, 9, 2);
            let loss = |l: &ConvLayer1D, xx: &SeqTensor| -> f64 {
                let y = l.forward(xx).unwrap();
                y.as_slice().iter().zip(probe.as_slice()).map(|(a, b)| a * b).sum()
            };
            let grads = layer.backward(&x, &probe).unwrap();
            let h = 1e-4;
            let mut analytic = Vec::new();
            let mut numeric = Vec::new();
            for idx in 0..x.as_slice().len() {
                let mut xp = x.clone();
                xp.as_mut_slice()[idx] += h;
                let mut xm = x.clone();
                xm.as_mut_slice()[idx] -= h;
                numeric.push((loss(&layer, &xp) - loss(&layer, &xm)) / (2.0 * h));
                analytic.push(grads.input.as_slice()[idx]);
            }
            for idx in 0..layer.weights().len() {
                let mut lp = layer.clone();
                lp.weights_mut()[idx] += h;
                let mut lm = layer.clone();
                lm.weights_mut()[idx] -= h;
                numeric.push((loss(&lp, &x) - loss(&lm, &x)) / (2.0 * h));
                analytic.push(grads.weights[idx]);
            }
            for idx in 0..layer.bias().len() {
                let mut lp = layer.clone();
                lp.bias_mut()[idx] += h;
                let mut lm = layer.clone();
                lm.bias_mut()[idx] -= h;
                numeric.push((loss(&lp, &x) - loss(&lm, &x)) / (2.0 * h));
                analytic.push(grads.bias[idx]);
            }
            assert!(max_relative_error(&analytic, &numeric) < 1e-5);
        }
    }

    #[test]
    fn rejects_bad_geometry() {
        assert!(ConvLayer1D::new(1, 1, 3, 0).is_err());
        assert!(ConvLayer1D::new(1, 1, 2, 1).is_err());
        let layer = ConvLayer1D::new(2, 1, 3, 1).unwrap();
        assert!(layer.forward(&SeqTensor::zeros(4, 3)).is_err());
        assert!(layer
            .backward(&SeqTensor::zeros(4, 2), &SeqTensor::zeros(3, 1))
            .is_err());
        assert_eq!(layer.param_count(), 1 * (2 * 3 + 1));
    }
}
