//! Extraction of follow-up action items from hospital discharge notes.
//!
//! The pipeline treats extraction as multi-label sentence classification:
//! notes are segmented into sentences ([`corpus`]), encoded with a trained
//! subword vocabulary ([`subword`]), assembled into focus-plus-neighbors
//! inputs ([`window`]) and scored by a from-scratch transformer encoder
//! ([`model`]). Unlabeled notes can be filtered by a seed classifier
//! ([`ttp`]) and used for auxiliary pre-training ([`pretrain`]) before
//! supervised fine-tuning ([`train`]). [`eval`] holds the multi-label
//! metrics and threshold tuning.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod model;
pub mod pretrain;
pub mod seed;
pub mod subword;
pub mod train;
pub mod ttp;
pub mod window;

pub use corpus::{Document, Label, LabelSet, Sentence, SentenceRef, Span, N_LABELS};
pub use error::{Error, Result};
pub use eval::{MetricsReport, Thresholds};
pub use model::{Checkpoint, EncoderConfig, ScoreMatrix, Transformer};
pub use subword::SubwordVocab;
pub use window::ContextWindow;
