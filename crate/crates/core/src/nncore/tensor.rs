use crate::error::{FsnError, Result};

/// Time-major 2D activation array: `len` rows (frames or snippets) by `channels`
/// columns, stored row-major so each time step is a contiguous slice.
#[derive(Clone, Debug, PartialEq)]
pub struct SeqTensor {
    len: usize,
    channels: usize,
    data: Vec<f64>,
}

impl SeqTensor {
    /// Wraps a row-major buffer. Rejects empty shapes and non-finite entries.
    pub fn new(len: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if len == 0 || channels == 0 {
            return Err(FsnError::shape(format!(
                "sequence must be non-empty, got {len}x{channels}"
            )));
        }
        if data.len() != len * channels {
            return Err(FsnError::shape(format!(
                "buffer of {} values does not fill {len}x{channels}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(FsnError::NonFinite(format!(
                "entry ({}, {}) is {}",
                pos / channels,
                pos % channels,
                data[pos]
            )));
        }
        Ok(Self {
            len,
            channels,
            data,
        })
    }

    /// All-zero tensor. Panics on an empty shape.
    pub fn zeros(len: usize, channels: usize) -> Self {
        assert!(len > 0 && channels > 0, "empty SeqTensor shape");
        Self {
            len,
            channels,
            data: vec![0.0; len * channels],
        }
    }

    pub fn from_fn(len: usize, channels: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut out = Self::zeros(len, channels);
        for t in 0..len {
            for c in 0..channels {
                out.data[t * channels + c] = f(t, c);
            }
        }
        out
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let channels = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != channels) {
            return Err(FsnError::shape("ragged rows"));
        }
        Self::new(rows.len(), channels, rows.concat())
    }

    /// Single-channel sequence.
    pub fn column(values: &[f64]) -> Result<Self> {
        Self::new(values.len(), 1, values.to_vec())
    }

    pub fn len(&self) -> usize {
        self.len
    }

    /// Always false; kept for clippy's `len_without_is_empty`.
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.len, self.channels)
    }

    #[inline]
    pub fn get(&self, t: usize, c: usize) -> f64 {
        self.data[t * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, t: usize, c: usize, v: f64) {
        self.data[t * self.channels + c] = v;
    }

    #[inline]
    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.channels..(t + 1) * self.channels]
    }

    #[inline]
    pub fn row_mut(&mut self, t: usize) -> &mut [f64] {
        &mut self.data[t * self.channels..(t + 1) * self.channels]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.channels)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Values of one channel across time.
    pub fn channel(&self, c: usize) -> Vec<f64> {
        (0..self.len).map(|t| self.get(t, c)).collect()
    }

    /// Copies of the selected rows, in the order given.
    pub fn gather_rows(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(FsnError::shape("cannot gather zero rows"));
        }
        let mut data = Vec::with_capacity(indices.len() * self.channels);
        for &i in indices {
            if i >= self.len {
                return Err(FsnError::shape(format!(
                    "row {i} out of range for length {}",
                    self.len
                )));
            }
            data.extend_from_slice(self.row(i));
        }
        Ok(Self {
            len: indices.len(),
            channels: self.channels,
            data,
        })
    }

    /// Rows `start..end`.
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.len {
            return Err(FsnError::shape(format!(
                "row range {start}..{end} invalid for length {}",
                self.len
            )));
        }
        Ok(Self {
            len: end - start,
            channels: self.channels,
            data: self.data[start * self.channels..end * self.channels].to_vec(),
        })
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub(crate) fn ensure_shape(&self, len: usize, channels: usize, what: &str) -> Result<()> {
        if self.shape() != (len, channels) {
            return Err(FsnError::shape(format!(
                "{what}: expected {len}x{channels}, got {}x{}",
                self.len, self.channels
            )));
        }
        Ok(())
    }
}
