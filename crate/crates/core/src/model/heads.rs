use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{FsnError, Result};
use crate::model::config::{ModelConfig, KERNEL_SIZE};
use crate::model::net::TemporalNet;
use crate::nncore::{
    bilinear_upsample_1d, framewise_softmax, softmax_vec, temporal_pool, ConvLayer1D, Pooling,
    SeqTensor,
};

/// A head that maps snippet features to dense `K + 1` frame scores
/// (actions plus background).
pub trait FrameHead {
    fn config(&self) -> &ModelConfig;
    fn net(&self) -> &TemporalNet;
    fn net_mut(&mut self) -> &mut TemporalNet;
}

/// Strongly supervised head: three dilated hidden layers and a classifier.
#[derive(Clone, Debug, PartialEq)]
pub struct FsnHead {
    config: ModelConfig,
    net: TemporalNet,
}

/// Weakly supervised head: same conv stack, `K` outputs, temporal pooling.
#[derive(Clone, Debug, PartialEq)]
pub struct WfsnHead {
    config: ModelConfig,
    net: TemporalNet,
    pooling: Pooling,
}

/// Baseline head without temporal context: one kernel-1 classifier.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationHead {
    config: ModelConfig,
    net: TemporalNet,
}

/// Glorot-uniform initialization, `U(-a, a)` with `a = sqrt(6 / (fan_in + fan_out))`
/// and zero bias. Layers are filled in order from one seeded stream.
fn glorot_layers(shapes: &[(usize, usize, usize, usize)], seed: u64) -> Result<Vec<ConvLayer1D>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shapes
        .iter()
        .map(|&(cin, cout, k, d)| {
            let fan_in = (cin * k) as f64;
            let fan_out = (cout * k) as f64;
            let a = (6.0 / (fan_in + fan_out)).sqrt();
            let w = (0..cin * cout * k).map(|_| rng.gen_range(-a..=a)).collect();
            ConvLayer1D::with_params(cin, cout, k, d, w, vec![0.0; cout])
        })
        .collect()
}

fn stack_shapes(config: &ModelConfig, outputs: usize) -> Vec<(usize, usize, usize, usize)> {
    let mut shapes = Vec::new();
    let mut cin = config.feature_dim;
    for &d in &config.dilations {
        shapes.push((cin, config.hidden_channels, KERNEL_SIZE, d));
        cin = config.hidden_channels;
    }
    shapes.push((cin, outputs, KERNEL_SIZE, 1));
    shapes
}

/// Checks a loaded layer stack against the head geometry.
fn check_stack(config: &ModelConfig, net: &TemporalNet, expected: &[(usize, usize, usize, usize)]) -> Result<()> {
    let got: Vec<_> = net
        .layers()
        .iter()
        .map(|l| (l.in_channels(), l.out_channels(), l.kernel_size(), l.dilation()))
        .collect();
    if got != expected {
        return Err(FsnError::shape(format!(
            "layer table {got:?} does not match config (K={}, D={}, hidden={}): expected {expected:?}",
            config.num_classes, config.feature_dim, config.hidden_channels
        )));
    }
    Ok(())
}

fn check_features(config: &ModelConfig, features: &SeqTensor) -> Result<()> {
    if features.channels() != config.feature_dim {
        return Err(FsnError::shape(format!(
            "features have dimension {}, model expects {}",
            features.channels(),
            config.feature_dim
        )));
    }
    Ok(())
}

impl FsnHead {
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let layers = glorot_layers(&stack_shapes(&config, config.num_classes + 1), seed)?;
        Ok(Self {
            net: TemporalNet::new(layers)?,
            config,
        })
    }

    pub fn from_parts(config: ModelConfig, net: TemporalNet) -> Result<Self> {
        config.validate()?;
        check_stack(&config, &net, &stack_shapes(&config, config.num_classes + 1))?;
        Ok(Self { config, net })
    }
}

impl AblationHead {
    /// The baseline has no hidden layers, so `config.dilations` is cleared.
    pub fn init(mut config: ModelConfig, seed: u64) -> Result<Self> {
        config.dilations.clear();
        config.validate()?;
        let shapes = [(config.feature_dim, config.num_classes + 1, 1, 1)];
        Ok(Self {
            net: TemporalNet::new(glorot_layers(&shapes, seed)?)?,
            config,
        })
    }

    pub fn from_parts(mut config: ModelConfig, net: TemporalNet) -> Result<Self> {
        config.dilations.clear();
        config.validate()?;
        check_stack(&config, &net, &[(config.feature_dim, config.num_classes + 1, 1, 1)])?;
        Ok(Self { config, net })
    }
}

impl WfsnHead {
    pub fn init(config: ModelConfig, pooling: Pooling, seed: u64) -> Result<Self> {
        config.validate()?;
        let layers = glorot_layers(&stack_shapes(&config, config.num_classes), seed)?;
        Ok(Self {
            net: TemporalNet::new(layers)?,
            config,
            pooling,
        })
    }

    pub fn from_parts(config: ModelConfig, net: TemporalNet, pooling: Pooling) -> Result<Self> {
        config.validate()?;
        check_stack(&config, &net, &stack_shapes(&config, config.num_classes))?;
        Ok(Self {
            config,
            net,
            pooling,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn net(&self) -> &TemporalNet {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut TemporalNet {
        &mut self.net
    }

    pub fn pooling(&self) -> Pooling {
        self.pooling
    }
}

macro_rules! impl_frame_head {
    ($t:ty) => {
        impl FrameHead for $t {
            fn config(&self) -> &ModelConfig {
                &self.config
            }
            fn net(&self) -> &TemporalNet {
                &self.net
            }
            fn net_mut(&mut self) -> &mut TemporalNet {
                &mut self.net
            }
        }
    };
}

impl_frame_head!(FsnHead);
impl_frame_head!(AblationHead);

/// Default strongly supervised head for `config`.
pub fn init_params(config: ModelConfig, seed: u64) -> Result<FsnHead> {
    FsnHead::init(config, seed)
}

/// Pre-softmax scores at frame resolution: conv stack, then linear
/// upsampling from `N` snippets to `target_len` frames.
pub fn fsn_frame_logits<H: FrameHead + ?Sized>(
    features: &SeqTensor,
    head: &H,
    target_len: usize,
) -> Result<SeqTensor> {
    check_features(head.config(), features)?;
    let logits = head.net().forward(features)?;
    bilinear_upsample_1d(&logits, target_len)
}

/// Per-frame class probabilities, `target_len x (K + 1)`.
pub fn fsn_forward<H: FrameHead + ?Sized>(
    features: &SeqTensor,
    head: &H,
    target_len: usize,
) -> Result<SeqTensor> {
    Ok(framewise_softmax(&fsn_frame_logits(features, head, target_len)?))
}

/// Pre-softmax per-position scores of the weak head, `M x K`.
pub fn wfsn_position_logits(features: &SeqTensor, head: &WfsnHead) -> Result<SeqTensor> {
    check_features(head.config(), features)?;
    head.net().forward(features)
}

/// Video-level class distribution: pooled position scores through softmax.
pub fn wfsn_forward_train(features: &SeqTensor, head: &WfsnHead) -> Result<Vec<f64>> {
    let scores = wfsn_position_logits(features, head)?;
    Ok(softmax_vec(&temporal_pool(&scores, head.pooling())))
}

/// Dense prediction mode: pooling removed, softmax over `K` at every position.
pub fn wfsn_forward_predict(features: &SeqTensor, head: &WfsnHead) -> Result<SeqTensor> {
    Ok(framewise_softmax(&wfsn_position_logits(features, head)?))
}

/// Temporal extent seen by one output position.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReceptiveField {
    pub snippets: usize,
    pub frames: usize,
}

/// `1 + sum((kernel - 1) * dilation)` snippets, times the snippet length.
pub fn receptive_field(net: &TemporalNet, snippet_len: usize) -> ReceptiveField {
    let snippets = 1 + net
        .layers()
        .iter()
        .map(|l| (l.kernel_size() - 1) * l.dilation())
        .sum::<usize>();
    ReceptiveField {
        snippets,
        frames: snippets * snippet_len,
    }
}
