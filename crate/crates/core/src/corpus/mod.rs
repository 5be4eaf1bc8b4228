//! Discharge-note document model, segmentation, surrogate filling,
//! synthetic corpus generation, splitting and statistics.

mod generate;
mod io;
mod labeling;
mod segment;
mod split;
mod stats;
mod surrogate;

pub use generate::{generate_corpus, CueMode, GeneratorConfig};
pub use io::{from_jsonl, read_corpus, to_jsonl, write_corpus};
pub use labeling::auto_label_instruction_sections;
pub use segment::{is_section_header, tokenize_sentences, SegmentedSentence};
pub use split::{split_corpus, strip_labels, subsample_documents, SplitRatios};
pub use stats::{compute_stats, CorpusStats};
pub use surrogate::{fill_surrogates, infer_kind, EntityKind, Filled, Replacement};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const N_LABELS: usize = 7;

/// The seven action-item aspects, in their fixed order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    PatientInstructions,
    Appointment,
    Medication,
    Lab,
    Procedure,
    Imaging,
    Other,
}

impl Label {
    pub const ALL: [Label; N_LABELS] = [
        Label::PatientInstructions,
        Label::Appointment,
        Label::Medication,
        Label::Lab,
        Label::Procedure,
        Label::Imaging,
        Label::Other,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Label> {
        Label::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::PatientInstructions => "patient_instructions",
            Label::Appointment => "appointment",
            Label::Medication => "medication",
            Label::Lab => "lab",
            Label::Procedure => "procedure",
            Label::Imaging => "imaging",
            Label::Other => "other",
        }
    }

    pub fn from_name(name: &str) -> Option<Label> {
        Label::ALL.into_iter().find(|l| l.name() == name)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Fixed-order boolean 7-vector of labels, stored as a bitmask.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LabelSet(u8);

impl LabelSet {
    pub const EMPTY: LabelSet = LabelSet(0);

    pub fn from_labels<I: IntoIterator<Item = Label>>(labels: I) -> Self {
        let mut set = LabelSet::EMPTY;
        for l in labels {
            set.insert(l);
        }
        set
    }

    pub fn from_bools(flags: &[bool; N_LABELS]) -> Self {
        let mut set = LabelSet::EMPTY;
        for (l, &f) in Label::ALL.iter().zip(flags) {
            if f {
                set.insert(*l);
            }
        }
        set
    }

    pub fn contains(self, label: Label) -> bool {
        self.0 & (1 << label.index()) != 0
    }

    pub fn insert(&mut self, label: Label) {
        self.0 |= 1 << label.index();
    }

    pub fn union(self, other: LabelSet) -> LabelSet {
        LabelSet(self.0 | other.0)
    }

    pub fn intersects(self, other: LabelSet) -> bool {
        self.0 & other.0 != 0
    }

    /// Binary reduction: does the sentence carry any label at all.
    pub fn any(self) -> bool {
        self.0 != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Label> {
        Label::ALL.into_iter().filter(move |l| self.contains(*l))
    }

    pub fn to_bools(self) -> [bool; N_LABELS] {
        let mut out = [false; N_LABELS];
        for (i, l) in Label::ALL.iter().enumerate() {
            out[i] = self.contains(*l);
        }
        out
    }

    pub fn to_targets(self) -> [f64; N_LABELS] {
        self.to_bools().map(|b| if b { 1.0 } else { 0.0 })
    }
}

impl Serialize for LabelSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for LabelSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let labels = Vec::<Label>::deserialize(d)?;
        Ok(LabelSet::from_labels(labels))
    }
}

/// Half-open span of character (not byte) offsets into a document's text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
    Unlabeled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sentence {
    /// Lowercased text of the span.
    pub text: String,
    pub span: Span,
    pub labels: LabelSet,
    pub section: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub doc_id: String,
    pub raw_text: String,
    pub sentences: Vec<Sentence>,
    pub split: Option<Split>,
}

/// `(doc_id, sentence_index)`, serialized as a two-element array.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SentenceRef(pub String, pub usize);

/// Input to [`Document::new`]: one sentence's span, labels and section.
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceSpec {
    pub span: Span,
    pub labels: LabelSet,
    pub section: Option<String>,
}

pub(crate) fn char_byte_offsets(text: &str) -> Vec<usize> {
    let mut offsets: Vec<usize> = text.char_indices().map(|(b, _)| b).collect();
    offsets.push(text.len());
    offsets
}

impl Document {
    /// Builds a document from raw text and sentence spans, checking that
    /// spans are in bounds, non-empty, strictly increasing and
    /// non-overlapping.
    pub fn new(doc_id: impl Into<String>, raw_text: impl Into<String>, specs: Vec<SentenceSpec>) -> Result<Self> {
        let doc_id = doc_id.into();
        let raw_text = raw_text.into();
        if specs.is_empty() {
            return Err(Error::Empty(format!("document {doc_id} has no sentences")));
        }
        let offsets = char_byte_offsets(&raw_text);
        let n_chars = offsets.len() - 1;
        let mut prev_end = 0;
        let mut sentences = Vec::with_capacity(specs.len());
        for (i, spec) in specs.into_iter().enumerate() {
            let Span { start, end } = spec.span;
            if start >= end || end > n_chars || start < prev_end {
                return Err(Error::Parse(format!(
                    "document {doc_id}: sentence {i} has invalid span {start}..{end}"
                )));
            }
            let text = raw_text[offsets[start]..offsets[end]].to_lowercase();
            if text.trim().is_empty() {
                return Err(Error::Parse(format!("document {doc_id}: sentence {i} is blank")));
            }
            prev_end = end;
            sentences.push(Sentence { text, span: spec.span, labels: spec.labels, section: spec.section });
        }
        Ok(Document { doc_id, raw_text, sentences, split: None })
    }

    /// Segments raw text into unlabeled sentences.
    pub fn from_raw(doc_id: impl Into<String>, raw_text: impl Into<String>) -> Result<Self> {
        let raw_text = raw_text.into();
        let specs = tokenize_sentences(&raw_text)
            .into_iter()
            .map(|s| SentenceSpec { span: s.span, labels: LabelSet::EMPTY, section: s.section })
            .collect();
        Document::new(doc_id, raw_text, specs)
    }

    /// Original-case slice of the raw text under `span`.
    pub fn slice(&self, span: Span) -> &str {
        let mut it = self.raw_text.char_indices().map(|(b, _)| b).chain(std::iter::once(self.raw_text.len()));
        let start = it.nth(span.start).unwrap_or(self.raw_text.len());
        let end = if span.end == span.start {
            start
        } else {
            it.nth(span.end - span.start - 1).unwrap_or(self.raw_text.len())
        };
        &self.raw_text[start..end]
    }

    pub fn labels(&self) -> Vec<LabelSet> {
        self.sentences.iter().map(|s| s.labels).collect()
    }
}


/// One value per label, serialized as a JSON object keyed by label name in
/// the fixed label order.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PerLabel<T>(pub [T; N_LABELS]);

impl<T> std::ops::Index<Label> for PerLabel<T> {
    type Output = T;
    fn index(&self, l: Label) -> &T {
        &self.0[l.index()]
    }
}

impl<T: Serialize> Serialize for PerLabel<T> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = s.serialize_map(Some(N_LABELS))?;
        for (l, v) in Label::ALL.iter().zip(&self.0) {
            map.serialize_entry(l.name(), v)?;
        }
        map.end()
    }
}

impl<'de, T: Deserialize<'de> + Copy + Default> Deserialize<'de> for PerLabel<T> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let map = std::collections::BTreeMap::<String, T>::deserialize(d)?;
        let mut out = [T::default(); N_LABELS];
        for (k, v) in map {
            let l = Label::from_name(&k).ok_or_else(|| serde::de::Error::custom(format!("unknown label {k}")))?;
            out[l.index()] = v;
        }
        Ok(PerLabel(out))
    }
}
