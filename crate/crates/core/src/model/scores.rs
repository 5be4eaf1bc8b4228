use serde::{Deserialize, Serialize};

use crate::corpus::{SentenceRef, N_LABELS};
use crate::error::{Error, Result};

/// Per-sentence label probabilities, row-aligned with `index`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix {
    pub index: Vec<SentenceRef>,
    pub scores: Vec<[f64; N_LABELS]>,
}

impl ScoreMatrix {
    pub fn new(index: Vec<SentenceRef>, scores: Vec<[f64; N_LABELS]>) -> Result<Self> {
        if index.len() != scores.len() {
            return Err(Error::InvalidConfig(format!("{} index entries for {} score rows", index.len(), scores.len())));
        }
        if let Some(r) = scores.iter().position(|row| row.iter().any(|v| !(0.0..=1.0).contains(v))) {
            return Err(Error::InvalidConfig(format!("score row {r} has a value outside [0, 1]")));
        }
        Ok(ScoreMatrix { index, scores })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn max_scores(&self) -> Vec<f64> {
        self.scores.iter().map(|r| r.iter().copied().fold(0.0, f64::max)).collect()
    }
}
