use crate::error::{FsnError, Result};

pub const DEFAULT_HIDDEN_CHANNELS: usize = 256;
pub const DEFAULT_SNIPPET_LEN: usize = 5;
pub const DEFAULT_CLIP_LEN: usize = 35;
pub const DEFAULT_DILATIONS: [usize; 3] = [1, 2, 4];
pub const KERNEL_SIZE: usize = 3;

/// Geometry shared by all heads.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    /// Number of action classes `K`, background excluded.
    pub num_classes: usize,
    pub feature_dim: usize,
    pub hidden_channels: usize,
    /// Frames per snippet; each snippet is represented by its center frame.
    pub snippet_len: usize,
    /// Frames per training clip / inference window.
    pub clip_len: usize,
    /// Dilation of each hidden conv layer.
    pub dilations: Vec<usize>,
}

impl ModelConfig {
    pub fn new(num_classes: usize, feature_dim: usize) -> Self {
        Self {
            num_classes,
            feature_dim,
            hidden_channels: DEFAULT_HIDDEN_CHANNELS,
            snippet_len: DEFAULT_SNIPPET_LEN,
            clip_len: DEFAULT_CLIP_LEN,
            dilations: DEFAULT_DILATIONS.to_vec(),
        }
    }

    pub fn with_hidden(mut self, hidden_channels: usize) -> Self {
        self.hidden_channels = hidden_channels;
        self
    }

    pub fn with_clip(mut self, clip_len: usize, snippet_len: usize) -> Self {
        self.clip_len = clip_len;
        self.snippet_len = snippet_len;
        self
    }

    /// Snippets per clip, `N = T / snippet_len`.
    pub fn snippets_per_clip(&self) -> usize {
        self.clip_len / self.snippet_len
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 {
            return Err(FsnError::Config("num_classes must be at least 1".into()));
        }
        if self.feature_dim == 0 || self.hidden_channels == 0 {
            return Err(FsnError::Config(
                "feature_dim and hidden_channels must be positive".into(),
            ));
        }
        if self.snippet_len == 0 || self.clip_len == 0 || self.clip_len % self.snippet_len != 0 {
            return Err(FsnError::Config(format!(
                "clip length {} is not a positive multiple of snippet length {}",
                self.clip_len, self.snippet_len
            )));
        }
        if self.dilations.iter().any(|d| *d == 0) {
            return Err(FsnError::Config("dilations must be positive".into()));
        }
        Ok(())
    }
}
