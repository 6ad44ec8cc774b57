//! Binary model files.
//!
//! Layout (all integers little-endian `u32` unless noted):
//!
//! ```text
//! magic "FSN1" | version | head kind (u8) | pooling (u8) | reserved (u16)
//! K | D | hidden width | snippet_len | clip_len | layer count
//! layer table: (kernel, dilation, in, out) per layer
//! payload: per layer, weights [out][in][tap] then bias, as f64
//! ```

use std::fs;
use std::path::Path;

use crate::error::{FsnError, Result};
use crate::model::config::ModelConfig;
use crate::model::heads::{AblationHead, FrameHead, FsnHead, WfsnHead};
use crate::model::net::TemporalNet;
use crate::nncore::{ConvLayer1D, Pooling};

pub const MODEL_MAGIC: &[u8; 4] = b"FSN1";
pub const MODEL_VERSION: u32 = 1;

const KIND_FSN: u8 = 1;
const KIND_WFSN: u8 = 2;
const KIND_ABLATION: u8 = 3;

/// Any head that can be stored in a model file.
#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Fsn(FsnHead),
    Wfsn(WfsnHead),
    Ablation(AblationHead),
}

impl Model {
    pub fn config(&self) -> &ModelConfig {
        match self {
            Model::Fsn(h) => h.config(),
            Model::Wfsn(h) => h.config(),
            Model::Ablation(h) => h.config(),
        }
    }

    pub fn net(&self) -> &TemporalNet {
        match self {
            Model::Fsn(h) => h.net(),
            Model::Wfsn(h) => h.net(),
            Model::Ablation(h) => h.net(),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Model::Fsn(_) => "fsn",
            Model::Wfsn(_) => "wfsn",
            Model::Ablation(_) => "ablation",
        }
    }

    pub fn pooling(&self) -> Option<Pooling> {
        match self {
            Model::Wfsn(h) => Some(h.pooling()),
            _ => None,
        }
    }

    /// Fails with a shape error unless the model matches `K` and `D`.
    pub fn check_compatible(&self, num_classes: usize, feature_dim: usize) -> Result<()> {
        let c = self.config();
        if c.num_classes != num_classes || c.feature_dim != feature_dim {
            return Err(FsnError::shape(format!(
                "model has K={}, D={} but data has K={num_classes}, D={feature_dim}",
                c.num_classes, c.feature_dim
            )));
        }
        Ok(())
    }

    pub fn encode(&self) -> Vec<u8> {
        let c = self.config();
        let (kind, pooling) = match self {
            Model::Fsn(_) => (KIND_FSN, 0),
            Model::Wfsn(h) => (KIND_WFSN, h.pooling().code()),
            Model::Ablation(_) => (KIND_ABLATION, 0),
        };
        let net = self.net();
        let mut buf = Vec::with_capacity(64 + net.param_count() * 8);
        let put = |buf: &mut Vec<u8>, v: usize| buf.extend_from_slice(&(v as u32).to_le_bytes());
        buf.extend_from_slice(MODEL_MAGIC);
        buf.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        buf.extend_from_slice(&[kind, pooling, 0, 0]);
        for v in [
            c.num_classes,
            c.feature_dim,
            c.hidden_channels,
            c.snippet_len,
            c.clip_len,
            net.layers().len(),
        ] {
            put(&mut buf, v);
        }
        for l in net.layers() {
            for v in [l.kernel_size(), l.dilation(), l.in_channels(), l.out_channels()] {
                put(&mut buf, v);
            }
        }
        for l in net.layers() {
            for v in l.weights().iter().chain(l.bias()) {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        buf
    }

    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0, path };
        if r.take(4)? != MODEL_MAGIC {
            return Err(r.fail("bad magic, expected FSN1"));
        }
        let version = r.u32()?;
        if version != MODEL_VERSION {
            return Err(r.fail(&format!("unsupported model version {version}")));
        }
        let flags = r.take(4)?;
        let (kind, pooling_code) = (flags[0], flags[1]);
        let num_classes = r.u32()? as usize;
        let feature_dim = r.u32()? as usize;
        let hidden = r.u32()? as usize;
        let snippet_len = r.u32()? as usize;
        let clip_len = r.u32()? as usize;
        let layer_count = r.u32()? as usize;
        if layer_count == 0 || layer_count > 64 {
            return Err(r.fail(&format!("implausible layer count {layer_count}")));
        }
        let mut table = Vec::with_capacity(layer_count);
        for _ in 0..layer_count {
            table.push((r.u32()? as usize, r.u32()? as usize, r.u32()? as usize, r.u32()? as usize));
        }
        let mut layers = Vec::with_capacity(layer_count);
        for &(k, d, cin, cout) in &table {
            let n_w = cout
                .checked_mul(cin)
                .and_then(|v| v.checked_mul(k))
                .ok_or_else(|| r.fail("layer table overflow"))?;
            let w = r.f64s(n_w)?;
            let b = r.f64s(cout)?;
            layers.push(
                ConvLayer1D::with_params(cin, cout, k, d, w, b).map_err(|e| r.fail(&e.to_string()))?,
            );
        }
        if r.pos != bytes.len() {
            return Err(r.fail(&format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        let net = TemporalNet::new(layers)?;
        // Hidden dilations are recovered from the layer table.
        let dilations = if kind == KIND_ABLATION {
            Vec::new()
        } else {
            table[..layer_count - 1].iter().map(|t| t.1).collect()
        };
        let config = ModelConfig {
            num_classes,
            feature_dim,
            hidden_channels: hidden,
            snippet_len,
            clip_len,
            dilations,
        };
        match kind {
            KIND_FSN => Ok(Model::Fsn(FsnHead::from_parts(config, net)?)),
            KIND_ABLATION => Ok(Model::Ablation(AblationHead::from_parts(config, net)?)),
            KIND_WFSN => {
                let pooling = Pooling::from_code(pooling_code)
                    .ok_or_else(|| r.fail(&format!("unknown pooling code {pooling_code}")))?;
                Ok(Model::Wfsn(WfsnHead::from_parts(config, net, pooling)?))
            }
            other => Err(r.fail(&format!("unknown head kind {other}"))),
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn fail(&self, msg: &str) -> FsnError {
        FsnError::format(self.path, msg)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.fail(&format!("truncated at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let len = n.checked_mul(8).ok_or_else(|| self.fail("payload overflow"))?;
        Ok(self
            .take(len)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    fs::write(path, model.encode()).map_err(|e| FsnError::io(path, e))
}

pub fn load_model(path: &Path) -> Result<Model> {
    let bytes = fs::read(path).map_err(|e| FsnError::io(path, e))?;
    Model::decode(&bytes, path)
}
