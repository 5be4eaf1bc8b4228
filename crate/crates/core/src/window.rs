//! Model inputs: a focus sentence with up to `k` neighbors per side,
//! each sentence closed by `[SEP]`, and segment ids marking the focus.
//!
//! Layout for `k = 2`: `left2 SEP left1 SEP focus SEP right1 SEP right2 SEP`.
//! Neighbors beyond the document edge are `<DOC_START>`/`<DOC_END>`
//! pseudo-sentences of one token. There is no leading `[CLS]`.

use serde::{Deserialize, Serialize};

use crate::corpus::{Document, LabelSet};
use crate::subword::{SubwordVocab, DOC_END, DOC_START, PAD, SEP};

pub const DEFAULT_MAX_LEN: usize = 512;
pub const DEFAULT_RADIUS: usize = 2;

/// Segment id of the focus sentence and its closing `[SEP]`.
pub const SEGMENT_FOCUS: u8 = 0;
/// Segment id of every other token.
pub const SEGMENT_CONTEXT: u8 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextWindow {
    pub token_ids: Vec<u32>,
    pub segment_ids: Vec<u8>,
    pub position_ids: Vec<u32>,
    pub focus_sep_index: usize,
    /// Half-open range of the focus sentence's tokens (without its `[SEP]`).
    pub focus_token_range: (usize, usize),
    pub doc_id: String,
    pub sentence_index: usize,
}

impl ContextWindow {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    /// Fixture dump with the fields needed to check a layout.
    pub fn debug_json(&self) -> serde_json::Value {
        serde_json::json!({
            "token_ids": self.token_ids,
            "segment_ids": self.segment_ids,
            "focus_sep_index": self.focus_sep_index,
        })
    }
}

/// A document with each sentence already encoded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedDocument {
    pub doc_id: String,
    pub sentences: Vec<Vec<u32>>,
    pub labels: Vec<LabelSet>,
}

impl EncodedDocument {
    pub fn encode(doc: &Document, vocab: &SubwordVocab) -> Self {
        EncodedDocument {
            doc_id: doc.doc_id.clone(),
            sentences: doc.sentences.iter().map(|s| vocab.encode(&s.text)).collect(),
            labels: doc.labels(),
        }
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn parts(&self, i: usize, k: usize) -> WindowParts {
        self.parts_with_focus(i, k, self.sentences[i].clone())
    }

    /// Neighbors of sentence `i` around an arbitrary focus token sequence.
    pub fn parts_with_focus(&self, i: usize, k: usize, focus: Vec<u32>) -> WindowParts {
        let n = self.sentences.len();
        let left = (1..=k)
            .map(|d| if i >= d { self.sentences[i - d].clone() } else { vec![DOC_START] })
            .collect();
        let right = (1..=k)
            .map(|d| if i + d < n { self.sentences[i + d].clone() } else { vec![DOC_END] })
            .collect();
        WindowParts { left, focus, right }
    }

    pub fn window(&self, i: usize, k: usize, max_len: usize) -> ContextWindow {
        truncate_window(self.parts(i, k), max_len).assemble(&self.doc_id, i)
    }
}

pub fn encode_corpus(docs: &[Document], vocab: &SubwordVocab) -> Vec<EncodedDocument> {
    docs.iter().map(|d| EncodedDocument::encode(d, vocab)).collect()
}

/// Sentences of a window before assembly. Both `left` and `right` are
/// ordered innermost first, so `left[0]` immediately precedes the focus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowParts {
    pub left: Vec<Vec<u32>>,
    pub focus: Vec<u32>,
    pub right: Vec<Vec<u32>>,
}

impl WindowParts {
    /// Assembled length, counting one `[SEP]` per sentence.
    pub fn len(&self) -> usize {
        self.left.iter().chain(&self.right).map(|s| s.len() + 1).sum::<usize>() + self.focus.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn assemble(&self, doc_id: &str, sentence_index: usize) -> ContextWindow {
        let len = self.len();
        let mut token_ids = Vec::with_capacity(len);
        let mut segment_ids = Vec::with_capacity(len);
        let mut push = |tokens: &[u32], segment: u8, ids: &mut Vec<u32>| {
            ids.extend_from_slice(tokens);
            ids.push(SEP);
            segment_ids.extend(std::iter::repeat_n(segment, tokens.len() + 1));
        };
        for s in self.left.iter().rev() {
            push(s, SEGMENT_CONTEXT, &mut token_ids);
        }
        let focus_start = token_ids.len();
        push(&self.focus, SEGMENT_FOCUS, &mut token_ids);
        let focus_sep_index = token_ids.len() - 1;
        for s in &self.right {
            push(s, SEGMENT_CONTEXT, &mut token_ids);
        }
        ContextWindow {
            position_ids: (0..token_ids.len() as u32).collect(),
            token_ids,
            segment_ids,
            focus_sep_index,
            focus_token_range: (focus_start, focus_sep_index),
            doc_id: doc_id.to_string(),
            sentence_index,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Side {
    Left,
    Right,
}

/// Shrinks a window to at most `max_len` tokens.
///
/// Removes whole context sentences: first the shorter of the two outermost
/// (the right one on ties), then alternating sides moving inward. If the
/// focus alone is still too long its tail is cut, keeping the final `[SEP]`.
pub fn truncate_window(mut parts: WindowParts, max_len: usize) -> WindowParts {
    assert!(max_len >= 2, "max_len must leave room for a token and its [SEP]");
    let mut next: Option<Side> = None;
    while parts.len() > max_len && !(parts.left.is_empty() && parts.right.is_empty()) {
        let side = match (next, parts.left.last(), parts.right.last()) {
            (_, None, _) => Side::Right,
            (_, _, None) => Side::Left,
            (Some(s), _, _) => s,
            (None, Some(l), Some(r)) => {
                if l.len() < r.len() {
                    Side::Left
                } else {
                    Side::Right
                }
            }
        };
        match side {
            Side::Left => parts.left.pop(),
            Side::Right => parts.right.pop(),
        };
        next = Some(if side == Side::Left { Side::Right } else { Side::Left });
    }
    if parts.len() > max_len {
        parts.focus.truncate(max_len - 1);
    }
    parts
}

/// Builds the window for sentence `i` of `doc`.
pub fn build_window(doc: &Document, i: usize, k: usize, max_len: usize, vocab: &SubwordVocab) -> ContextWindow {
    EncodedDocument::encode(doc, vocab).window(i, k, max_len)
}

/// Right-padded batch of windows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PaddedBatch {
    pub token_ids: Vec<Vec<u32>>,
    pub segment_ids: Vec<Vec<u8>>,
    pub position_ids: Vec<Vec<u32>>,
    /// `true` for real tokens.
    pub attention_mask: Vec<Vec<bool>>,
    pub focus_sep_index: Vec<usize>,
}

impl PaddedBatch {
    pub fn from_windows(windows: &[ContextWindow]) -> Self {
        let width = windows.iter().map(ContextWindow::len).max().unwrap_or(0);
        let mut batch = PaddedBatch {
            token_ids: Vec::with_capacity(windows.len()),
            segment_ids: Vec::with_capacity(windows.len()),
            position_ids: Vec::with_capacity(windows.len()),
            attention_mask: Vec::with_capacity(windows.len()),
            focus_sep_index: Vec::with_capacity(windows.len()),
        };
        for w in windows {
            let pad = width - w.len();
            let mut tokens = w.token_ids.clone();
            tokens.extend(std::iter::repeat_n(PAD, pad));
            let mut segments = w.segment_ids.clone();
            segments.extend(std::iter::repeat_n(SEGMENT_CONTEXT, pad));
            let mut mask = vec![true; w.len()];
            mask.extend(std::iter::repeat_n(false, pad));
            batch.token_ids.push(tokens);
            batch.segment_ids.push(segments);
            batch.position_ids.push((0..width as u32).collect());
            batch.attention_mask.push(mask);
            batch.focus_sep_index.push(w.focus_sep_index);
        }
        batch
    }

    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    pub fn width(&self) -> usize {
        self.token_ids.first().map_or(0, Vec::len)
    }

    /// Token, segment and position ids of row `r` with padding removed.
    pub fn unpadded(&self, r: usize) -> (Vec<u32>, Vec<u8>, Vec<u32>) {
        let n = self.attention_mask[r].iter().filter(|&&m| m).count();
        (self.token_ids[r][..n].to_vec(), self.segment_ids[r][..n].to_vec(), self.position_ids[r][..n].to_vec())
    }
}

/// Windows for `(document, sentence)` index pairs, padded into one batch.
pub fn window_batch(docs: &[EncodedDocument], indices: &[(usize, usize)], k: usize, max_len: usize) -> PaddedBatch {
    let windows: Vec<ContextWindow> = indices.iter().map(|&(d, i)| docs[d].window(i, k, max_len)).collect();
    PaddedBatch::from_windows(&windows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(lengths: &[usize]) -> EncodedDocument {
        EncodedDocument {
            doc_id: "d".into(),
            sentences: lengths
                .iter()
                .enumerate()
                .map(|(i, &n)| (0..n as u32).map(|t| 1000 + 100 * i as u32 + t).collect())
                .collect(),
            labels: vec![LabelSet::EMPTY; lengths.len()],
        }
    }

    #[test]
    fn first_sentence_gets_doc_start_padding() {
        let d = doc(&[2, 3, 4]);
        let w = d.window(0, 2, DEFAULT_MAX_LEN);
        assert_eq!(&w.token_ids[..4], &[DOC_START, SEP, DOC_START, SEP]);
        assert_eq!(&w.token_ids[4..7], &[1000, 1001, SEP]);
        assert_eq!(w.focus_sep_index, 6);
    }

    #[test]
    fn single_sentence_document() {
        let d = doc(&[1]);
        let w = d.window(0, 2, DEFAULT_MAX_LEN);
        assert_eq!(w.token_ids, vec![DOC_START, SEP, DOC_START, SEP, 1000, SEP, DOC_END, SEP, DOC_END, SEP]);
        assert_eq!(w.segment_ids, vec![1, 1, 1, 1, 0, 0, 1, 1, 1, 1]);
        assert_eq!(w.focus_sep_index, 5);
        assert_eq!(w.focus_token_range, (4, 5));
    }

    #[test]
    fn segment_a_is_focus_plus_sep() {
        let d = doc(&[3, 5, 2, 7, 1]);
        for i in 0..5 {
            for k in [0, 1, 2, 3] {
                let w = d.window(i, k, DEFAULT_MAX_LEN);
                let a = w.segment_ids.iter().filter(|&&s| s == SEGMENT_FOCUS).count();
                assert_eq!(a, d.sentences[i].len() + 1);
                assert_eq!(w.token_ids[w.focus_sep_index], SEP);
                assert_eq!(w.position_ids, (0..w.len() as u32).collect::<Vec<_>>());
            }
        }
    }

    #[test]
    fn no_context_window() {
        let d = doc(&[3, 4]);
        let w = d.window(1, 0, DEFAULT_MAX_LEN);
        assert_eq!(w.token_ids, vec![1100, 1101, 1102, 1103, SEP]);
    }

    #[test]
    fn shorter_outermost_goes_first() {
        // left2 = 300 tokens, right2 = 250 tokens: total 600 > 512
        let d = doc(&[300, 5, 20, 10, 250]);
        let parts = truncate_window(d.parts(2, 2), 512);
        assert_eq!(parts.left.len(), 2);
        assert_eq!(parts.right.len(), 1);
    }

    #[test]
    fn already_short_is_unchanged() {
        let d = doc(&[3, 4, 5, 6, 7]);
        assert_eq!(truncate_window(d.parts(2, 2), 512), d.parts(2, 2));
    }

    #[test]
    fn oversized_focus_is_cut_at_tail() {
        let d = doc(&[10, 600, 10]);
        let w = d.window(1, 2, 512);
        assert_eq!(w.len(), 512);
        assert_eq!(w.focus_sep_index, 511);
        assert_eq!(w.token_ids[0], 1100);
        assert!(w.segment_ids.iter().all(|&s| s == SEGMENT_FOCUS));
    }

    #[test]
    fn padded_batch() {
        let d = doc(&[3, 7, 2]);
        let batch = window_batch(std::slice::from_ref(&d), &[(0, 0), (0, 1)], 1, 512);
        assert_eq!(batch.width(), 15);
        assert_eq!(batch.attention_mask[0].iter().filter(|&&m| m).count(), 14);
        let (tokens, segments, _) = batch.unpadded(0);
        assert_eq!(tokens, d.window(0, 1, 512).token_ids);
        assert_eq!(segments, d.window(0, 1, 512).segment_ids);
        assert!(window_batch(&[d], &[], 2, 512).is_empty());
    }
}
