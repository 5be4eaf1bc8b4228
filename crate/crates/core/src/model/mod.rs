//! Context encoder, its heads and losses, checkpoints, and the two
//! sentence-only baselines.

pub mod bow;
pub mod checkpoint;
pub mod cnn;
pub mod config;
pub mod fidelity;
pub mod encoder;
pub mod gradcheck;
pub mod heads;
pub mod optim;
pub mod params;
pub mod scores;

pub use bow::{bow_logreg_train, BowLogReg, TfIdf};
pub use checkpoint::{Checkpoint, Phase};
pub use cnn::{cnn_train, Cnn, CnnConfig, CnnParams};
pub use config::EncoderConfig;
pub use encoder::{Batch, EncoderCache, Mode, Transformer};
pub use fidelity::{gradient_fidelity, FidelityReport};
pub use gradcheck::{grad_check, GradCheckReport};
pub use heads::{multilabel_bce_loss, PretrainLoss};
pub use optim::{AdamW, AdamWConfig};
pub use params::{ParamSet, Params};
pub use scores::ScoreMatrix;
