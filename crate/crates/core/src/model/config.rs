use serde::{Deserialize, Serialize};

use crate::corpus::N_LABELS;
use crate::error::{Error, Result};
use crate::window::DEFAULT_MAX_LEN;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub max_len: usize,
    pub vocab_size: usize,
    pub n_segments: usize,
    pub dropout: f64,
    pub n_labels: usize,
}

impl EncoderConfig {
    /// 4 layers, 4 heads, width 128.
    pub fn desk(vocab_size: usize) -> Self {
        EncoderConfig {
            n_layers: 4,
            n_heads: 4,
            d_model: 128,
            d_ff: 512,
            max_len: DEFAULT_MAX_LEN,
            vocab_size,
            n_segments: 2,
            dropout: 0.1,
            n_labels: N_LABELS,
        }
    }

    /// 2 layers, 2 heads, width 64.
    pub fn compact(vocab_size: usize) -> Self {
        EncoderConfig { n_layers: 2, n_heads: 2, d_model: 64, d_ff: 256, ..Self::desk(vocab_size) }
    }

    /// 2 layers, 2 heads, width 16, no dropout.
    pub fn tiny(vocab_size: usize) -> Self {
        EncoderConfig { n_layers: 2, n_heads: 2, d_model: 16, d_ff: 32, dropout: 0.0, ..Self::desk(vocab_size) }
    }

    pub fn d_head(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("n_layers", self.n_layers),
            ("n_heads", self.n_heads),
            ("d_model", self.d_model),
            ("d_ff", self.d_ff),
            ("max_len", self.max_len),
            ("vocab_size", self.vocab_size),
            ("n_segments", self.n_segments),
            ("n_labels", self.n_labels),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidConfig(format!("{name} must be positive")));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::InvalidConfig(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidConfig(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self::desk(crate::subword::DEFAULT_SIZE)
    }
}
