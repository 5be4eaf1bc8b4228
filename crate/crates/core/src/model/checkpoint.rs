use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::EncoderConfig;
use super::encoder::Transformer;
use super::params::{ParamSet, Params};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"CNCKPT01";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Random,
    Pretrained,
    Finetuned,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Transformer,
    pub vocab_fingerprint: String,
    pub phase: Phase,
    /// Neighbor radius the classification head was trained with.
    pub context_radius: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: EncoderConfig,
    vocab_fingerprint: String,
    phase: Phase,
    context_radius: usize,
    tensors: Vec<TensorEntry>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    dtype: String,
    /// Byte offset into the data section.
    offset: u64,
}

impl Checkpoint {
    pub fn new(model: Transformer, vocab_fingerprint: &str, phase: Phase, context_radius: usize) -> Self {
        Checkpoint { model, vocab_fingerprint: vocab_fingerprint.to_string(), phase, context_radius }
    }

    pub fn ensure_fingerprint(&self, vocab_fingerprint: &str) -> Result<()> {
        if self.vocab_fingerprint != vocab_fingerprint {
            return Err(Error::FingerprintMismatch {
                expected: self.vocab_fingerprint.clone(),
                found: vocab_fingerprint.to_string(),
            });
        }
        Ok(())
    }

    /// Magic, little-endian u64 header length, JSON header, raw f64 data.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let tensors = self.model.params.tensors();
        let mut entries = Vec::with_capacity(tensors.len());
        let mut offset = 0u64;
        for t in &tensors {
            entries.push(TensorEntry { name: t.name.clone(), shape: t.shape.clone(), dtype: "f64".into(), offset });
            offset += 8 * t.data.len() as u64;
        }
        let header = serde_json::to_vec(&Header {
            config: self.model.config.clone(),
            vocab_fingerprint: self.vocab_fingerprint.clone(),
            phase: self.phase,
            context_radius: self.context_radius,
            tensors: entries,
        })?;
        let mut out = Vec::with_capacity(16 + header.len() + offset as usize);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for t in &tensors {
            for v in t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let data_start = 16usize.checked_add(header_len).filter(|&e| e <= bytes.len()).ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(&bytes[16..data_start])?;
        header.config.validate()?;
        let data = &bytes[data_start..];
        let mut params = Params::zeros(&header.config);
        let mut expected = params.tensors_mut();
        if expected.len() != header.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                expected.len(),
                header.tensors.len()
            )));
        }
        for t in expected.iter_mut() {
            let entry = header
                .tensors
                .iter()
                .find(|e| e.name == t.name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {}", t.name)))?;
            if entry.shape != t.shape {
                return Err(Error::Checkpoint(format!("tensor {} has shape {:?}, expected {:?}", t.name, entry.shape, t.shape)));
            }
            if entry.dtype != "f64" {
                return Err(Error::Checkpoint(format!("tensor {} has dtype {}", t.name, entry.dtype)));
            }
            let start = entry.offset as usize;
            let end = start + 8 * t.data.len();
            if end > data.len() {
                return Err(Error::Checkpoint(format!("tensor {} runs past the end of the file", t.name)));
            }
            for (v, chunk) in t.data.iter_mut().zip(data[start..end].chunks_exact(8)) {
                *v = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
            }
        }
        drop(expected);
        Ok(Checkpoint {
            model: Transformer { config: header.config, params },
            vocab_fingerprint: header.vocab_fingerprint,
            phase: header.phase,
            context_radius: header.context_radius,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let model = Transformer::new(EncoderConfig::tiny(300), 5).unwrap();
        Checkpoint::new(model, "abc", Phase::Random, 2)
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let c = sample();
        let bytes = c.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = sample().to_bytes().unwrap();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 8]).is_err());
        assert!(Checkpoint::from_bytes(b"nope").is_err());
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(Checkpoint::from_bytes(&wrong).is_err());
    }

    #[test]
    fn fingerprint_check() {
        let c = sample();
        assert!(c.ensure_fingerprint("abc").is_ok());
        assert!(matches!(c.ensure_fingerprint("abd"), Err(Error::FingerprintMismatch { .. })));
    }
}
