//! Supervised fine-tuning with early stopping on validation macro AUROC,
//! corpus scoring, and per-document extraction reports.

use std::fmt::Write as _;
use std::time::Instant;

use ndarray::Array2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Label, LabelSet, PerLabel, SentenceRef, Span, N_LABELS};
use crate::error::{Error, Result};
use crate::eval::{macro_auroc, Thresholds};
use crate::model::optim::clip_grad_norm;
use crate::model::{AdamW, AdamWConfig, Batch, Checkpoint, Mode, ParamSet, Phase, ScoreMatrix, Transformer};
use crate::seed;
use crate::subword::SubwordVocab;
use crate::window::{ContextWindow, EncodedDocument, DEFAULT_MAX_LEN, DEFAULT_RADIUS};

/// Receives one record per finished epoch.
pub trait Progress<R> {
    fn epoch(&mut self, record: &R);
}

/// Discards progress records.
pub struct Silent;

impl<R> Progress<R> for Silent {
    fn epoch(&mut self, _: &R) {}
}

impl<R, F: FnMut(&R)> Progress<R> for F {
    fn epoch(&mut self, record: &R) {
        self(record)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StopStep {
    pub improved: bool,
    pub stop: bool,
}

/// Patience-based stopping on a scalar that must strictly improve.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    maximize: bool,
    best: Option<(usize, f64)>,
    stale: usize,
}

impl EarlyStopping {
    pub fn maximize(patience: usize) -> Self {
        EarlyStopping { patience: patience.max(1), maximize: true, best: None, stale: 0 }
    }

    pub fn minimize(patience: usize) -> Self {
        EarlyStopping { maximize: false, ..Self::maximize(patience) }
    }

    pub fn observe(&mut self, epoch: usize, value: f64) -> StopStep {
        let better = match self.best {
            None => !value.is_nan(),
            Some((_, b)) => {
                if self.maximize {
                    value > b
                } else {
                    value < b
                }
            }
        };
        if better {
            self.best = Some((epoch, value));
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        StopStep { improved: better, stop: self.stale >= self.patience }
    }

    pub fn best_epoch(&self) -> usize {
        self.best.map_or(0, |b| b.0)
    }

    pub fn best_value(&self) -> Option<f64> {
        self.best.map(|b| b.1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub optimizer: AdamWConfig,
    pub max_epochs: usize,
    pub patience: usize,
    /// Neighbor sentences per side; 0 classifies sentences alone.
    pub k: usize,
    pub max_len: usize,
    pub pos_weight: f64,
    pub grad_clip: Option<f64>,
    pub time_budget_s: Option<f64>,
    pub eval_batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            optimizer: AdamWConfig::default(),
            max_epochs: 20,
            patience: 3,
            k: DEFAULT_RADIUS,
            max_len: DEFAULT_MAX_LEN,
            pos_weight: 1.0,
            grad_clip: None,
            time_budget_s: None,
            eval_batch_size: 64,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.eval_batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be at least 1".into()));
        }
        if self.patience == 0 {
            return Err(Error::InvalidConfig("patience must be at least 1".into()));
        }
        if self.max_len < 2 {
            return Err(Error::InvalidConfig("max_len must be at least 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainEpoch {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_macro_auroc: f64,
    pub elapsed_s: f64,
}

#[derive(Debug, Clone)]
pub struct FinetuneOutcome {
    pub model: Transformer,
    pub history: Vec<TrainEpoch>,
    pub best_epoch: usize,
    pub best_val_macro_auroc: f64,
}

/// Windows and targets for every sentence of `docs`.
pub fn labeled_windows(docs: &[EncodedDocument], k: usize, max_len: usize) -> Vec<(ContextWindow, LabelSet)> {
    docs.iter()
        .flat_map(|d| (0..d.len()).map(move |i| (d.window(i, k, max_len), d.labels[i])))
        .collect()
}

fn targets(labels: &[LabelSet]) -> Array2<f64> {
    Array2::from_shape_fn((labels.len(), N_LABELS), |(i, k)| labels[i].to_targets()[k])
}

/// Fine-tunes every parameter on BCE over all seven labels and keeps the
/// epoch with the highest validation macro AUROC.
pub fn finetune(
    init: Transformer,
    train: &[EncodedDocument],
    val: &[EncodedDocument],
    cfg: &TrainConfig,
    progress: &mut dyn Progress<TrainEpoch>,
) -> Result<FinetuneOutcome> {
    cfg.validate()?;
    let train_w = labeled_windows(train, cfg.k, cfg.max_len);
    if train_w.is_empty() {
        return Err(Error::Empty("training split".into()));
    }
    let val_w = labeled_windows(val, cfg.k, cfg.max_len);
    if val_w.is_empty() {
        return Err(Error::Empty("validation split".into()));
    }
    let val_windows: Vec<ContextWindow> = val_w.iter().map(|(w, _)| w.clone()).collect();
    let val_labels: Vec<LabelSet> = val_w.iter().map(|(_, l)| *l).collect();

    let start = Instant::now();
    let over_budget = |s: &Instant| cfg.time_budget_s.is_some_and(|b| s.elapsed().as_secs_f64() > b);
    let mut model = init;
    let mut best_params = model.params.clone();
    let mut opt = AdamW::new(cfg.optimizer, &model.params);
    let mut stopper = EarlyStopping::maximize(cfg.patience);
    let mut shuffle = seed::stream(cfg.seed, seed::SHUFFLING);
    let mut dropout = seed::stream(cfg.seed, seed::DROPOUT);
    let mut order: Vec<usize> = (0..train_w.len()).collect();
    let mut grads = model.params.zeros_like();
    let mut history = Vec::new();

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut shuffle);
        let (mut sum, mut seen) = (0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let batch = Batch::pack(chunk.iter().map(|&i| &train_w[i].0));
            let labels: Vec<LabelSet> = chunk.iter().map(|&i| train_w[i].1).collect();
            grads.fill(0.0);
            let loss = model.classification_loss(&batch, &targets(&labels), cfg.pos_weight, Mode::Train(&mut dropout), Some(&mut grads))?;
            if let Some(c) = cfg.grad_clip {
                clip_grad_norm(&mut grads, c);
            }
            opt.step(&mut model.params, &grads);
            sum += loss * chunk.len() as f64;
            seen += chunk.len();
            if over_budget(&start) {
                break;
            }
        }
        let scores = model.score_windows(&val_windows, cfg.eval_batch_size)?;
        let auc = macro_auroc(&scores, &val_labels).value;
        let record = TrainEpoch { epoch, train_loss: sum / seen.max(1) as f64, val_macro_auroc: auc, elapsed_s: start.elapsed().as_secs_f64() };
        progress.epoch(&record);
        history.push(record);
        let step = stopper.observe(epoch, auc);
        if step.improved {
            best_params = model.params.clone();
        }
        if step.stop || over_budget(&start) {
            break;
        }
    }
    model.params = best_params;
    Ok(FinetuneOutcome {
        model,
        history,
        best_epoch: stopper.best_epoch(),
        best_val_macro_auroc: stopper.best_value().unwrap_or(f64::NAN),
    })
}

/// Checks the vocabulary, fine-tunes, and tags the result with its radius.
pub fn finetune_checkpoint(
    init: &Checkpoint,
    vocab: &SubwordVocab,
    train: &[EncodedDocument],
    val: &[EncodedDocument],
    cfg: &TrainConfig,
    progress: &mut dyn Progress<TrainEpoch>,
) -> Result<(Checkpoint, FinetuneOutcome)> {
    init.ensure_fingerprint(vocab.fingerprint())?;
    let out = finetune(init.model.clone(), train, val, cfg, progress)?;
    let ckpt = Checkpoint::new(out.model.clone(), &init.vocab_fingerprint, Phase::Finetuned, cfg.k);
    Ok((ckpt, out))
}

/// Scores and gold labels for every sentence, in document order.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusScores {
    pub matrix: ScoreMatrix,
    pub labels: Vec<LabelSet>,
}

pub fn score_corpus(model: &Transformer, docs: &[EncodedDocument], k: usize, max_len: usize, batch_size: usize) -> Result<CorpusScores> {
    let w = labeled_windows(docs, k, max_len);
    let windows: Vec<ContextWindow> = w.iter().map(|(w, _)| w.clone()).collect();
    let scores = model.score_windows(&windows, batch_size)?;
    let index = windows.iter().map(|w| SentenceRef(w.doc_id.clone(), w.sentence_index)).collect();
    Ok(CorpusScores { matrix: ScoreMatrix::new(index, scores)?, labels: w.into_iter().map(|(_, l)| l).collect() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractedSentence {
    pub sentence_index: usize,
    /// Original casing, sliced from the raw note.
    pub text: String,
    pub span: Span,
    pub scores: PerLabel<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AspectGroup {
    pub label: Label,
    pub sentences: Vec<ExtractedSentence>,
}

/// Sentences grouped by aspect in the fixed label order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionReport {
    pub doc_id: String,
    pub aspects: Vec<AspectGroup>,
    /// Fraction of the note's sentences surfaced under at least one aspect.
    pub coverage: f64,
    pub n_sentences: usize,
}

impl ExtractionReport {
    pub fn from_scores(doc: &Document, scores: &[[f64; N_LABELS]], thresholds: &Thresholds) -> Self {
        let mut aspects: Vec<AspectGroup> = Label::ALL.iter().map(|&label| AspectGroup { label, sentences: Vec::new() }).collect();
        let mut surfaced = 0;
        for (i, (s, row)) in doc.sentences.iter().zip(scores).enumerate() {
            let predicted = thresholds.predict(row);
            if predicted.is_empty() {
                continue;
            }
            surfaced += 1;
            for l in predicted.iter() {
                aspects[l.index()].sentences.push(ExtractedSentence {
                    sentence_index: i,
                    text: doc.slice(s.span).to_string(),
                    span: s.span,
                    scores: PerLabel(*row),
                });
            }
        }
        let n = doc.sentences.len();
        ExtractionReport {
            doc_id: doc.doc_id.clone(),
            aspects,
            coverage: if n == 0 { 0.0 } else { surfaced as f64 / n as f64 },
            n_sentences: n,
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "# {}", self.doc_id).unwrap();
        writeln!(out, "coverage {:.3} of {} sentences", self.coverage, self.n_sentences).unwrap();
        for a in &self.aspects {
            if a.sentences.is_empty() {
                continue;
            }
            writeln!(out, "\n## {}", a.label).unwrap();
            for s in &a.sentences {
                writeln!(out, "- [{}] {} ({:.3})", s.sentence_index, s.text, s.scores[a.label]).unwrap();
            }
        }
        out
    }
}

/// Windows, scores and thresholds every sentence of one note.
pub fn predict_document(
    model: &Transformer,
    doc: &Document,
    vocab: &SubwordVocab,
    thresholds: &Thresholds,
    k: usize,
    max_len: usize,
) -> Result<ExtractionReport> {
    let enc = EncodedDocument::encode(doc, vocab);
    let windows: Vec<ContextWindow> = (0..enc.len()).map(|i| enc.window(i, k, max_len)).collect();
    let scores = model.score_windows(&windows, 64)?;
    Ok(ExtractionReport::from_scores(doc, &scores, thresholds))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stopping_rule() {
        let mut s = EarlyStopping::maximize(1);
        assert!(s.observe(1, 0.8).improved);
        let step = s.observe(2, 0.7);
        assert!(!step.improved && step.stop);
        assert_eq!(s.best_epoch(), 1);

        let mut s = EarlyStopping::minimize(2);
        s.observe(0, 3.0);
        s.observe(1, 2.0);
        assert!(!s.observe(2, 2.0).stop);
        assert!(s.observe(3, 2.5).stop);
        assert_eq!(s.best_epoch(), 1);
    }

    #[test]
    fn report_groups_by_aspect() {
        let doc = Document::from_raw("d", "Call the clinic. Take aspirin. Rest well.").unwrap();
        let mut a = [0.1; N_LABELS];
        a[Label::Appointment.index()] = 0.9;
        let mut b = [0.1; N_LABELS];
        b[Label::Medication.index()] = 0.8;
        b[Label::Appointment.index()] = 0.6;
        let r = ExtractionReport::from_scores(&doc, &[a, b, [0.1; N_LABELS]], &Thresholds::default());
        assert_eq!(r.aspects.len(), N_LABELS);
        let appt = &r.aspects[Label::Appointment.index()].sentences;
        assert_eq!(appt.iter().map(|s| s.text.as_str()).collect::<Vec<_>>(), vec!["Call the clinic.", "Take aspirin."]);
        assert_eq!(r.aspects[Label::Medication.index()].sentences.len(), 1);
        assert!((r.coverage - 2.0 / 3.0).abs() < 1e-12);
        assert!(r.to_text().contains("## appointment"));
        let empty = ExtractionReport::from_scores(&doc, &[[0.1; N_LABELS]; 3], &Thresholds::default());
        assert_eq!(empty.coverage, 0.0);
        assert!(empty.aspects.iter().all(|a| a.sentences.is_empty()));
    }
}
