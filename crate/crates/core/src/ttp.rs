//! Task-targeted selection of unlabeled sentences: score the pool with a
//! seed classifier, keep sentences whose highest label score reaches a
//! threshold, and emit references for context-window pre-training.

use std::collections::HashSet;
use std::path::Path;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{Document, SentenceRef, N_LABELS};
use crate::error::{Error, Result};
use crate::model::{BowLogReg, Checkpoint, ScoreMatrix};
use crate::pretrain::PretrainRef;
use crate::seed;
use crate::subword::SubwordVocab;
use crate::window::{encode_corpus, ContextWindow, DEFAULT_MAX_LEN};

/// Selection sizes as fractions of the unlabeled pool.
pub const REFERENCE_FRACTIONS: [f64; 4] = [0.025, 0.05, 0.11, 0.22];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionManifest {
    pub threshold: f64,
    pub seed_checkpoint_fingerprint: String,
    pub target_size: Option<usize>,
    pub selected: Vec<SentenceRef>,
}

impl SelectionManifest {
    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: SelectionManifest = serde_json::from_str(s)?;
        let unique: HashSet<&SentenceRef> = m.selected.iter().collect();
        if unique.len() != m.selected.len() {
            return Err(Error::Parse("manifest lists a sentence twice".into()));
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Short digest identifying a serialized seed model.
pub fn model_fingerprint(bytes: &[u8]) -> String {
    hex::encode(&Sha256::digest(bytes)[..16])
}

/// One row per unlabeled sentence, scored by the seed checkpoint with its
/// own context radius.
pub fn score_unlabeled(seed_model: &Checkpoint, vocab: &SubwordVocab, docs: &[Document], batch_size: usize) -> Result<ScoreMatrix> {
    seed_model.ensure_fingerprint(vocab.fingerprint())?;
    let max_len = seed_model.model.config.max_len.min(DEFAULT_MAX_LEN);
    let encoded = encode_corpus(docs, vocab);
    let windows: Vec<ContextWindow> = encoded
        .iter()
        .flat_map(|d| (0..d.len()).map(move |i| d.window(i, seed_model.context_radius, max_len)))
        .collect();
    let scores = seed_model.model.score_windows(&windows, batch_size)?;
    let index = windows.iter().map(|w| SentenceRef(w.doc_id.clone(), w.sentence_index)).collect();
    ScoreMatrix::new(index, scores)
}

/// The bag-of-words fallback seed model.
pub fn score_unlabeled_bow(model: &BowLogReg, docs: &[Document]) -> Result<ScoreMatrix> {
    let mut index = Vec::new();
    let mut scores: Vec<[f64; N_LABELS]> = Vec::new();
    for d in docs {
        for (i, s) in d.sentences.iter().enumerate() {
            index.push(SentenceRef(d.doc_id.clone(), i));
            scores.push(model.score(&s.text));
        }
    }
    ScoreMatrix::new(index, scores)
}

/// Rows whose maximum label score is at least `threshold`.
pub fn select_sentences(scores: &ScoreMatrix, threshold: f64, seed_fingerprint: &str) -> SelectionManifest {
    let selected = scores
        .max_scores()
        .iter()
        .zip(&scores.index)
        .filter(|(m, _)| **m >= threshold)
        .map(|(_, r)| r.clone())
        .collect();
    SelectionManifest { threshold, seed_checkpoint_fingerprint: seed_fingerprint.to_string(), target_size: None, selected }
}

/// The `target_size`-th largest per-sentence maximum score.
pub fn calibrate_threshold(scores: &ScoreMatrix, target_size: usize) -> Result<f64> {
    if target_size == 0 || target_size > scores.len() {
        return Err(Error::InvalidConfig(format!("target size {target_size} outside 1..={}", scores.len())));
    }
    let mut m = scores.max_scores();
    m.sort_by(|a, b| b.total_cmp(a));
    Ok(m[target_size - 1])
}

pub fn target_size_for(fraction: f64, pool: usize) -> Result<usize> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidConfig(format!("selection fraction {fraction} outside (0, 1]")));
    }
    Ok(((fraction * pool as f64).round() as usize).clamp(1, pool.max(1)))
}

/// Calibrates the threshold to `target_size` and selects.
pub fn select_top(scores: &ScoreMatrix, target_size: usize, seed_fingerprint: &str) -> Result<SelectionManifest> {
    let t = calibrate_threshold(scores, target_size)?;
    let mut m = select_sentences(scores, t, seed_fingerprint);
    m.target_size = Some(target_size);
    Ok(m)
}

/// Uniform random selection of `size` rows, for control runs.
pub fn select_random(scores: &ScoreMatrix, size: usize, root_seed: u64) -> Result<SelectionManifest> {
    if size > scores.len() {
        return Err(Error::InvalidConfig(format!("cannot draw {size} of {} sentences", scores.len())));
    }
    let mut rng = seed::stream(root_seed, "random-selection");
    let mut picks: Vec<usize> = sample(&mut rng, scores.len(), size).into_vec();
    picks.sort_unstable();
    Ok(SelectionManifest {
        threshold: 0.0,
        seed_checkpoint_fingerprint: "random".into(),
        target_size: Some(size),
        selected: picks.into_iter().map(|i| scores.index[i].clone()).collect(),
    })
}

/// One pre-training reference per selected sentence. Every entry must
/// resolve in `docs`; the error lists all that do not.
pub fn build_pretrain_dataset(manifest: &SelectionManifest, docs: &[Document]) -> Result<Vec<PretrainRef>> {
    let refs: Vec<PretrainRef> = manifest
        .selected
        .iter()
        .map(|SentenceRef(d, i)| PretrainRef { doc_id: d.clone(), sentence_index: *i })
        .collect();
    crate::pretrain::resolve_in(&refs, docs.iter().map(|d| (d.doc_id.as_str(), d.sentences.len())))?;
    Ok(refs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::LabelSet;
    use crate::subword::{DOC_END, DOC_START};
    use crate::window::EncodedDocument;

    fn matrix(rows: &[[f64; N_LABELS]]) -> ScoreMatrix {
        let index = (0..rows.len()).map(|i| SentenceRef("d".into(), i)).collect();
        ScoreMatrix::new(index, rows.to_vec()).unwrap()
    }

    #[test]
    fn hand_built_selection() {
        let m = matrix(&[
            [0.1, 0.2, 0.3, 0.1, 0.1, 0.1, 0.1],
            [0.1, 0.61, 0.3, 0.1, 0.1, 0.1, 0.1],
            [0.59, 0.2, 0.3, 0.1, 0.1, 0.1, 0.1],
            [0.1, 0.2, 0.3, 0.1, 0.1, 0.1, 0.6],
            [0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5],
        ]);
        let s = select_sentences(&m, 0.6, "fp");
        assert_eq!(s.selected, vec![SentenceRef("d".into(), 1), SentenceRef("d".into(), 3)]);
        assert!(select_sentences(&m, 1.0, "fp").is_empty());
        assert_eq!(select_sentences(&m, 0.0, "fp").len(), 5);
        assert_eq!(calibrate_threshold(&m, 5).unwrap(), 0.3);
        assert_eq!(select_top(&m, 2, "fp").unwrap().len(), 2);
        assert!(calibrate_threshold(&m, 0).is_err());
        assert!(calibrate_threshold(&m, 6).is_err());
    }

    #[test]
    fn manifest_round_trip() {
        let m = matrix(&[[0.9; N_LABELS], [0.1; N_LABELS]]);
        let s = select_top(&m, 1, "abc").unwrap();
        let json = s.to_json().unwrap();
        assert!(json.contains("\"selected\": [\n    [\n      \"d\",\n      0\n    ]\n  ]"));
        let back = SelectionManifest::from_json(&json).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.to_json().unwrap(), json);
        let dup = json.replace("\"selected\": [\n    [\n      \"d\",\n      0\n    ]", "\"selected\": [[\"d\", 0], [\"d\", 0]");
        assert!(SelectionManifest::from_json(&dup).is_err());
    }

    #[test]
    fn dataset_from_manifest() {
        let doc = Document::from_raw("d", "Call the clinic. Take aspirin.").unwrap();
        let enc = EncodedDocument { doc_id: "d".into(), sentences: vec![vec![10], vec![11]], labels: vec![LabelSet::EMPTY; 2] };
        let empty = SelectionManifest { threshold: 0.5, seed_checkpoint_fingerprint: "x".into(), target_size: None, selected: vec![] };
        assert!(build_pretrain_dataset(&empty, std::slice::from_ref(&doc)).unwrap().is_empty());
        let edge = SelectionManifest { selected: vec![SentenceRef("d".into(), 0)], ..empty.clone() };
        let refs = build_pretrain_dataset(&edge, std::slice::from_ref(&doc)).unwrap();
        assert_eq!(refs.len(), 1);
        let w = enc.window(refs[0].sentence_index, 2, 512);
        assert_eq!(w.token_ids[0], DOC_START);
        assert_eq!(w.token_ids[w.len() - 2], DOC_END);
        let bad = SelectionManifest { selected: vec![SentenceRef("d".into(), 2), SentenceRef("z".into(), 0)], ..empty };
        assert!(matches!(build_pretrain_dataset(&bad, &[doc]), Err(Error::DanglingReferences(v)) if v.len() == 2));
    }

    #[test]
    fn random_control_has_requested_size() {
        let m = matrix(&[[0.2; N_LABELS]; 40]);
        let r = select_random(&m, 7, 3).unwrap();
        assert_eq!(r.len(), 7);
        assert_eq!(r, select_random(&m, 7, 3).unwrap());
        assert!(select_random(&m, 41, 3).is_err());
    }
}
