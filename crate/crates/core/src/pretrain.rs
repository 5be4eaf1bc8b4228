//! Auxiliary pre-training: masked-token prediction restricted to context
//! sentences, and prediction of whether the focus sentence was swapped for
//! another sentence of the same note.

use std::io::{BufRead, Write};
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::optim::clip_grad_norm;
use crate::model::{AdamW, AdamWConfig, Batch, Mode, ParamSet, PretrainLoss, Transformer};
use crate::seed::{self, Rng};
use crate::subword::{SubwordVocab, MASK};
use crate::train::{EarlyStopping, Progress};
use crate::window::{truncate_window, ContextWindow, EncodedDocument, DEFAULT_MAX_LEN, DEFAULT_RADIUS, SEGMENT_CONTEXT};

pub const MASK_PROB: f64 = 0.15;
pub const SWITCH_PROB: f64 = 0.25;

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainExample {
    pub window: ContextWindow,
    /// `(position, original token id)`, positions increasing.
    pub mlm_targets: Vec<(usize, u32)>,
    pub switched: bool,
}

/// Replaces each non-special context token by `[MASK]` with probability `p`.
pub fn mask_context(window: &ContextWindow, p: f64, rng: &mut Rng) -> PretrainExample {
    let mut w = window.clone();
    let mut targets = Vec::new();
    for (pos, (tok, &seg)) in w.token_ids.iter_mut().zip(&window.segment_ids).enumerate() {
        if seg == SEGMENT_CONTEXT && !SubwordVocab::is_special(*tok) && rng.gen::<f64>() < p {
            targets.push((pos, *tok));
            *tok = MASK;
        }
    }
    PretrainExample { window: w, mlm_targets: targets, switched: false }
}

/// With probability `p`, swaps the focus of sentence `i` for a uniformly
/// chosen other sentence of the same document, keeping the context.
pub fn switch_focus(doc: &EncodedDocument, i: usize, k: usize, max_len: usize, p: f64, rng: &mut Rng) -> (ContextWindow, bool) {
    let n = doc.len();
    if n < 2 || rng.gen::<f64>() >= p {
        return (doc.window(i, k, max_len), false);
    }
    let mut j = rng.gen_range(0..n - 1);
    if j >= i {
        j += 1;
    }
    let parts = doc.parts_with_focus(i, k, doc.sentences[j].clone());
    (truncate_window(parts, max_len).assemble(&doc.doc_id, i), true)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainConfig {
    pub k: usize,
    pub max_len: usize,
    pub mask_prob: f64,
    pub switch_prob: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub heldout_fraction: f64,
    pub optimizer: AdamWConfig,
    pub grad_clip: Option<f64>,
    pub time_budget_s: Option<f64>,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            k: DEFAULT_RADIUS,
            max_len: DEFAULT_MAX_LEN,
            mask_prob: MASK_PROB,
            switch_prob: SWITCH_PROB,
            batch_size: 32,
            max_epochs: 10,
            patience: 3,
            heldout_fraction: 0.1,
            optimizer: AdamWConfig::default(),
            grad_clip: None,
            time_budget_s: None,
            seed: 1,
        }
    }
}

/// Switch first, then mask the resulting window.
pub fn make_example(
    doc: &EncodedDocument,
    i: usize,
    cfg: &PretrainConfig,
    switch_rng: &mut Rng,
    mask_rng: &mut Rng,
) -> PretrainExample {
    let (w, switched) = switch_focus(doc, i, cfg.k, cfg.max_len, cfg.switch_prob, switch_rng);
    let mut ex = mask_context(&w, cfg.mask_prob, mask_rng);
    ex.switched = switched;
    ex
}

/// Losses of one batch of examples in the given mode.
pub fn pretrain_losses(
    model: &Transformer,
    examples: &[PretrainExample],
    mode: Mode,
    grads: Option<&mut crate::model::Params>,
) -> Result<PretrainLoss> {
    let batch = Batch::pack(examples.iter().map(|e| &e.window));
    let mlm: Vec<Vec<(usize, u32)>> = examples.iter().map(|e| e.mlm_targets.clone()).collect();
    let switched: Vec<bool> = examples.iter().map(|e| e.switched).collect();
    model.pretrain_loss(&batch, &mlm, &switched, mode, grads)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainEpoch {
    pub epoch: usize,
    pub train_loss: f64,
    pub heldout_loss: f64,
    pub heldout_mlm: f64,
    pub elapsed_s: f64,
}

#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    pub model: Transformer,
    pub history: Vec<PretrainEpoch>,
    /// 1-based; 0 means no epoch beat the initial held-out loss.
    pub best_epoch: usize,
    pub initial: PretrainLoss,
}

fn mean_loss(model: &Transformer, examples: &[PretrainExample], batch_size: usize) -> Result<PretrainLoss> {
    let mut acc = PretrainLoss { mlm: 0.0, switch: 0.0, total: 0.0 };
    for chunk in examples.chunks(batch_size.max(1)) {
        let l = pretrain_losses(model, chunk, Mode::Eval, None)?;
        let w = chunk.len() as f64 / examples.len() as f64;
        acc.mlm += w * l.mlm;
        acc.switch += w * l.switch;
        acc.total += w * l.total;
    }
    Ok(acc)
}

/// Trains on `refs` (document, sentence) pairs, holding out a fraction
/// for early stopping on total loss. Returns the best epoch's weights.
pub fn pretrain_loop(
    model: Transformer,
    docs: &[EncodedDocument],
    refs: &[(usize, usize)],
    cfg: &PretrainConfig,
    progress: &mut dyn Progress<PretrainEpoch>,
) -> Result<PretrainOutcome> {
    if !(cfg.heldout_fraction > 0.0 && cfg.heldout_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!("held-out fraction {} outside (0, 1)", cfg.heldout_fraction)));
    }
    if refs.len() < 2 {
        return Err(Error::Empty("pre-training corpus".into()));
    }
    let start = Instant::now();
    let mut order = refs.to_vec();
    order.shuffle(&mut seed::stream(cfg.seed, seed::SPLIT));
    let n_held = ((refs.len() as f64 * cfg.heldout_fraction).round() as usize).clamp(1, refs.len() - 1);
    let (held, train) = order.split_at(n_held);

    let mut held_switch = seed::stream(cfg.seed, "heldout-switching");
    let mut held_mask = seed::stream(cfg.seed, "heldout-masking");
    let heldout: Vec<PretrainExample> =
        held.iter().map(|&(d, i)| make_example(&docs[d], i, cfg, &mut held_switch, &mut held_mask)).collect();

    let mut model = model;
    let initial = mean_loss(&model, &heldout, cfg.batch_size)?;
    let mut best_params = model.params.clone();
    let mut stopper = EarlyStopping::minimize(cfg.patience);
    stopper.observe(0, initial.total);

    let mut opt = AdamW::new(cfg.optimizer, &model.params);
    let mut shuffle = seed::stream(cfg.seed, seed::SHUFFLING);
    let mut switch_rng = seed::stream(cfg.seed, seed::SWITCHING);
    let mut mask_rng = seed::stream(cfg.seed, seed::MASKING);
    let mut dropout_rng = seed::stream(cfg.seed, seed::DROPOUT);
    let mut train_order = train.to_vec();
    let mut history = Vec::new();
    let over_budget = |s: &Instant| cfg.time_budget_s.is_some_and(|b| s.elapsed().as_secs_f64() > b);

    for epoch in 1..=cfg.max_epochs {
        train_order.shuffle(&mut shuffle);
        let mut sum = 0.0;
        let mut seen = 0usize;
        for chunk in train_order.chunks(cfg.batch_size.max(1)) {
            let examples: Vec<PretrainExample> =
                chunk.iter().map(|&(d, i)| make_example(&docs[d], i, cfg, &mut switch_rng, &mut mask_rng)).collect();
            let mut g = model.params.zeros_like();
            let l = pretrain_losses(&model, &examples, Mode::Train(&mut dropout_rng), Some(&mut g))?;
            if let Some(c) = cfg.grad_clip {
                clip_grad_norm(&mut g, c);
            }
            opt.step(&mut model.params, &g);
            sum += l.total * chunk.len() as f64;
            seen += chunk.len();
            if over_budget(&start) {
                break;
            }
        }
        let h = mean_loss(&model, &heldout, cfg.batch_size)?;
        let record = PretrainEpoch {
            epoch,
            train_loss: sum / seen.max(1) as f64,
            heldout_loss: h.total,
            heldout_mlm: h.mlm,
            elapsed_s: start.elapsed().as_secs_f64(),
        };
        progress.epoch(&record);
        history.push(record);
        let step = stopper.observe(epoch, h.total);
        if step.improved {
            best_params = model.params.clone();
        }
        if step.stop || over_budget(&start) {
            break;
        }
    }
    model.params = best_params;
    Ok(PretrainOutcome { model, history, best_epoch: stopper.best_epoch(), initial })
}

/// One line of the pre-training dataset file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PretrainRef {
    pub doc_id: String,
    pub sentence_index: usize,
}

pub fn write_dataset(refs: &[PretrainRef], path: impl AsRef<Path>) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in refs {
        serde_json::to_writer(&mut f, r)?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Vec<PretrainRef>> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (n, line) in f.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse(format!("line {}: {e}", n + 1)))?);
    }
    Ok(out)
}

/// Maps references to `(document, sentence)` indices, reporting every
/// reference that does not resolve.
pub fn resolve(refs: &[PretrainRef], docs: &[EncodedDocument]) -> Result<Vec<(usize, usize)>> {
    resolve_in(refs, docs.iter().map(|d| (d.doc_id.as_str(), d.len())))
}

/// [`resolve`] against `(doc_id, n_sentences)` pairs.
pub fn resolve_in<'a>(refs: &[PretrainRef], docs: impl IntoIterator<Item = (&'a str, usize)>) -> Result<Vec<(usize, usize)>> {
    let docs: Vec<(&str, usize)> = docs.into_iter().collect();
    let by_id: std::collections::HashMap<&str, usize> = docs.iter().enumerate().map(|(i, d)| (d.0, i)).collect();
    let mut out = Vec::with_capacity(refs.len());
    let mut dangling = Vec::new();
    for r in refs {
        match by_id.get(r.doc_id.as_str()) {
            Some(&d) if r.sentence_index < docs[d].1 => out.push((d, r.sentence_index)),
            _ => dangling.push((r.doc_id.clone(), r.sentence_index)),
        }
    }
    if !dangling.is_empty() {
        return Err(Error::DanglingReferences(dangling));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::LabelSet;
    use crate::subword::{DOC_END, DOC_START, SEP};

    fn doc() -> EncodedDocument {
        let sentences = vec![vec![100, 101], vec![200, 201, 202], vec![300], vec![400, 401]];
        EncodedDocument { doc_id: "d".into(), labels: vec![LabelSet::EMPTY; 4], sentences }
    }

    #[test]
    fn masking_extremes() {
        let w = doc().window(1, 2, 512);
        let mut rng = seed::stream(1, seed::MASKING);
        let none = mask_context(&w, 0.0, &mut rng);
        assert!(none.mlm_targets.is_empty());
        assert_eq!(none.window, w);
        let all = mask_context(&w, 1.0, &mut rng);
        let eligible: Vec<usize> = (0..w.len())
            .filter(|&t| w.segment_ids[t] == SEGMENT_CONTEXT && !SubwordVocab::is_special(w.token_ids[t]))
            .collect();
        assert_eq!(all.mlm_targets.iter().map(|t| t.0).collect::<Vec<_>>(), eligible);
        for (t, (&a, &b)) in all.window.token_ids.iter().zip(&w.token_ids).enumerate() {
            if [SEP, DOC_START, DOC_END].contains(&b) || w.segment_ids[t] != SEGMENT_CONTEXT {
                assert_eq!(a, b);
            } else {
                assert_eq!(a, MASK);
            }
        }
    }

    #[test]
    fn switching_extremes() {
        let d = doc();
        let mut rng = seed::stream(1, seed::SWITCHING);
        let (w, s) = switch_focus(&d, 2, 2, 512, 0.0, &mut rng);
        assert!(!s);
        assert_eq!(w, d.window(2, 2, 512));
        let two = EncodedDocument { doc_id: "t".into(), sentences: vec![vec![10], vec![20, 21]], labels: vec![LabelSet::EMPTY; 2] };
        let (w, s) = switch_focus(&two, 0, 2, 512, 1.0, &mut rng);
        assert!(s);
        assert_eq!(&w.token_ids[w.focus_token_range.0..w.focus_token_range.1], &[20, 21]);
        let one = EncodedDocument { doc_id: "o".into(), sentences: vec![vec![10]], labels: vec![LabelSet::EMPTY] };
        assert!(!switch_focus(&one, 0, 2, 512, 1.0, &mut rng).1);
    }

    #[test]
    fn switch_keeps_context() {
        let d = doc();
        let mut rng = seed::stream(3, seed::SWITCHING);
        let plain = d.window(1, 2, 512);
        for _ in 0..50 {
            let (w, s) = switch_focus(&d, 1, 2, 512, 1.0, &mut rng);
            assert!(s);
            let ctx = |x: &ContextWindow| -> Vec<u32> {
                x.token_ids.iter().zip(&x.segment_ids).filter(|(_, &g)| g == SEGMENT_CONTEXT).map(|(t, _)| *t).collect()
            };
            assert_eq!(ctx(&w), ctx(&plain));
            assert_ne!(&w.token_ids[w.focus_token_range.0..w.focus_token_range.1], &[200, 201, 202]);
        }
    }

    #[test]
    fn dangling_references_are_listed() {
        let refs = vec![
            PretrainRef { doc_id: "d".into(), sentence_index: 3 },
            PretrainRef { doc_id: "d".into(), sentence_index: 4 },
            PretrainRef { doc_id: "x".into(), sentence_index: 0 },
        ];
        match resolve(&refs, &[doc()]) {
            Err(Error::DanglingReferences(v)) => assert_eq!(v, vec![("d".to_string(), 4), ("x".to_string(), 0)]),
            other => panic!("{other:?}"),
        }
        assert_eq!(resolve(&refs[..1], &[doc()]).unwrap(), vec![(0, 3)]);
    }
}
