use crate::error::{FsnError, Result};
use crate::nncore::gradcheck::sign_pattern_hash;
use crate::nncore::{relu, relu_backward, ConvLayer1D, ParamMut, SeqTensor};

/// A stack of temporal conv layers with ReLU between consecutive layers. The
/// last layer's output is returned without activation.
#[derive(Clone, Debug, PartialEq)]
pub struct TemporalNet {
    layers: Vec<ConvLayer1D>,
}

/// Activations kept by the forward pass for the backward pass.
#[derive(Clone, Debug)]
pub struct NetCache {
    /// Input of every layer.
    inputs: Vec<SeqTensor>,
    /// Pre-activation output of every layer; the last one is the logits.
    outputs: Vec<SeqTensor>,
}

impl NetCache {
    pub fn logits(&self) -> &SeqTensor {
        self.outputs.last().expect("non-empty net")
    }

    /// Identifies the ReLU activation pattern of this pass.
    pub fn relu_pattern(&self) -> u64 {
        let hidden = &self.outputs[..self.outputs.len() - 1];
        sign_pattern_hash(hidden.iter().flat_map(|o| o.as_slice()))
    }
}

/// Parameter gradients of one layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrads {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Parameter gradients of a whole net, in layer order.
#[derive(Clone, Debug, PartialEq)]
pub struct NetGrads {
    pub layers: Vec<LayerGrads>,
}

impl NetGrads {
    pub fn zeros_like(net: &TemporalNet) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrads {
                    weights: vec![0.0; l.weights().len()],
                    bias: vec![0.0; l.bias().len()],
                })
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &NetGrads) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights.iter_mut().zip(&b.weights).for_each(|(x, y)| *x += y);
            a.bias.iter_mut().zip(&b.bias).for_each(|(x, y)| *x += y);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.bias.iter_mut()).for_each(|v| *v *= s);
        }
    }

    /// Flattened in the same order as [`TemporalNet::flat_params`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    /// Slices in the order expected by [`TemporalNet::param_slots`].
    pub fn slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
            .collect()
    }
}

impl TemporalNet {
    pub fn new(layers: Vec<ConvLayer1D>) -> Result<Self> {
        if layers.is_empty() {
            return Err(FsnError::invalid("temporal net needs at least one layer"));
        }
        for pair in layers.windows(2) {
            if pair[0].out_channels() != pair[1].in_channels() {
                return Err(FsnError::shape(format!(
                    "layer emits {} channels but next layer expects {}",
                    pair[0].out_channels(),
                    pair[1].in_channels()
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[ConvLayer1D] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [ConvLayer1D] {
        &mut self.layers
    }

    pub fn in_channels(&self) -> usize {
        self.layers[0].in_channels()
    }

    pub fn out_channels(&self) -> usize {
        self.layers[self.layers.len() - 1].out_channels()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(ConvLayer1D::param_count).sum()
    }

    pub fn forward_cached(&self, x: &SeqTensor) -> Result<NetCache> {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut outputs = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.forward(&h)?;
            inputs.push(h);
            h = if i + 1 < self.layers.len() {
                relu(&z)
            } else {
                z.clone()
            };
            outputs.push(z);
        }
        Ok(NetCache { inputs, outputs })
    }

    pub fn forward(&self, x: &SeqTensor) -> Result<SeqTensor> {
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(&h)?;
            if i + 1 < self.layers.len() {
                h = relu(&h);
            }
        }
        Ok(h)
    }

    /// Parameter gradients plus the gradient with respect to the net input.
    pub fn backward(&self, cache: &NetCache, grad_logits: &SeqTensor) -> Result<(NetGrads, SeqTensor)> {
        if cache.inputs.len() != self.layers.len() {
            return Err(FsnError::shape("cache was produced by a different net"));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut g = grad_logits.clone();
        for i in (0..self.layers.len()).rev() {
            if i + 1 < self.layers.len() {
                g = relu_backward(&cache.outputs[i], &g)?;
            }
            let cg = self.layers[i].backward(&cache.inputs[i], &g)?;
            grads.push(LayerGrads {
                weights: cg.weights,
                bias: cg.bias,
            });
            g = cg.input;
        }
        grads.reverse();
        Ok((NetGrads { layers: grads }, g))
    }

    /// All parameters, layer by layer, weights before bias.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(l.weights());
            out.extend_from_slice(l.bias());
        }
        out
    }

    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(FsnError::shape(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                params.len()
            )));
        }
        let mut offset = 0;
        for l in &mut self.layers {
            let (w, b) = l.params_mut();
            w.copy_from_slice(&params[offset..offset + w.len()]);
            offset += w.len();
            b.copy_from_slice(&params[offset..offset + b.len()]);
            offset += b.len();
        }
        Ok(())
    }

    /// Optimizer views: weights decay, biases do not.
    pub fn param_slots(&mut self) -> Vec<ParamMut<'_>> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                let (w, b) = l.params_mut();
                [
                    ParamMut {
                        values: w,
                        decay: true,
                    },
                    ParamMut {
                        values: b,
                        decay: false,
                    },
                ]
            })
            .collect()
    }
}
