//! Finite-difference checks of the three trainable objectives on a small
//! random batch: encoder classification BCE, MLM plus switch loss, and the
//! CNN baseline.

use std::time::Instant;

use ndarray::Array2;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::cnn::{Cnn, CnnConfig, CnnParams, WordVocab};
use super::config::EncoderConfig;
use super::encoder::{Batch, Mode, Transformer};
use super::gradcheck::{grad_check, GradCheckReport};
use super::params::{ParamSet, Params};
use crate::corpus::{LabelSet, N_LABELS};
use crate::error::Result;
use crate::seed;
use crate::subword::{SubwordVocab, MASK};
use crate::window::{ContextWindow, EncodedDocument, SEGMENT_CONTEXT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub classification: GradCheckReport,
    pub pretrain: GradCheckReport,
    pub cnn: GradCheckReport,
    pub elapsed_s: f64,
}

impl FidelityReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.classification.passed(tol) && self.pretrain.passed(tol) && self.cnn.passed(tol)
    }

    pub fn min_checked(&self) -> usize {
        self.classification.n_checked.min(self.pretrain.n_checked).min(self.cnn.n_checked)
    }
}

/// Scales weight matrices up and puts a small ripple on vectors, so layer
/// norms, biases and attention all see inputs away from their init values.
fn roughen<P: ParamSet>(p: &mut P, scale: f64) {
    let mut k = 0u64;
    for t in p.tensors_mut() {
        let matrix = t.shape.len() == 2;
        for v in t.data.iter_mut() {
            k += 1;
            *v = if matrix { *v * scale } else { *v + 0.1 * (k as f64 * 0.7).sin() };
        }
    }
}

fn random_windows(vocab_size: usize, rng: &mut seed::Rng) -> Vec<ContextWindow> {
    let lens = [4usize, 6, 3, 5, 2];
    let sentences: Vec<Vec<u32>> =
        lens.iter().map(|&n| (0..n).map(|_| rng.gen_range(5..vocab_size as u32)).collect()).collect();
    let doc = EncodedDocument { doc_id: "probe".into(), labels: vec![LabelSet::EMPTY; lens.len()], sentences };
    vec![doc.window(0, 2, 512), doc.window(2, 2, 512), doc.window(4, 1, 512)]
}

fn random_targets(n: usize, rng: &mut seed::Rng) -> Array2<f64> {
    Array2::from_shape_fn((n, N_LABELS), |_| if rng.gen_bool(0.3) { 1.0 } else { 0.0 })
}

/// Runs all three checks with at least `samples` parameters each.
pub fn gradient_fidelity(cfg: &EncoderConfig, samples: usize, eps: f64, root_seed: u64) -> Result<FidelityReport> {
    let start = Instant::now();
    let mut rng = seed::stream(root_seed, "fidelity");
    let mut model = Transformer::new(cfg.clone(), root_seed)?;
    roughen(&mut model.params, 4.0);

    let windows = random_windows(cfg.vocab_size, &mut rng);
    let batch = Batch::pack(&windows);
    let y = random_targets(windows.len(), &mut rng);
    let (_, g) = model.classification_grad(&batch, &y, 2.0)?;
    let cls_loss = |p: &Params| {
        let m = Transformer { config: model.config.clone(), params: p.clone() };
        m.classification_loss(&batch, &y, 2.0, Mode::Eval, None)
    };
    let classification = grad_check(&model.params, &g, cls_loss, samples, eps, root_seed)?;

    // mask one context token per window (where there is one) and switch two
    let mut masked = windows.clone();
    let mut mlm = Vec::new();
    for w in masked.iter_mut() {
        let ctx: Vec<usize> =
            (0..w.len()).filter(|&j| w.segment_ids[j] == SEGMENT_CONTEXT && !SubwordVocab::is_special(w.token_ids[j])).collect();
        let mut targets = Vec::new();
        if let Some(&j) = ctx.first() {
            targets.push((j, w.token_ids[j]));
            w.token_ids[j] = MASK;
        }
        mlm.push(targets);
    }
    let mbatch = Batch::pack(&masked);
    let switched = vec![true, false, true];
    let mut g = model.params.zeros_like();
    model.pretrain_loss(&mbatch, &mlm, &switched, Mode::Eval, Some(&mut g))?;
    let pt_loss = |p: &Params| {
        let m = Transformer { config: model.config.clone(), params: p.clone() };
        Ok(m.pretrain_loss(&mbatch, &mlm, &switched, Mode::Eval, None)?.total)
    };
    let pretrain = grad_check(&model.params, &g, pt_loss, samples, eps, root_seed.wrapping_add(1))?;

    let texts = ["call the clinic tomorrow", "take aspirin daily", "x", "follow up with cardiology in two weeks", "no driving"];
    let vocab = WordVocab::fit(&texts);
    let mut cnn = Cnn::new(CnnConfig { emb_dim: 12, n_filters: 10, seed: root_seed, ..CnnConfig::default() }, vocab)?;
    cnn.params.emb.mapv_inplace(|v| v * 5.0);
    let cy = random_targets(texts.len(), &mut rng);
    let data: Vec<(Vec<usize>, [f64; N_LABELS])> = texts
        .iter()
        .enumerate()
        .map(|(i, t)| (cnn.encode(t), std::array::from_fn(|k| cy[[i, k]])))
        .collect();
    let mut g = cnn.params.zeros_like();
    cnn.loss(&data, Some(&mut g));
    let cnn_loss = |p: &CnnParams| {
        let mut c = cnn.clone();
        c.params = p.clone();
        Ok(c.loss(&data, None))
    };
    let cnn_report = grad_check(&cnn.params, &g, cnn_loss, samples, eps, root_seed.wrapping_add(2))?;

    Ok(FidelityReport { classification, pretrain, cnn: cnn_report, elapsed_s: start.elapsed().as_secs_f64() })
}
