//! Line-delimited JSON corpus files, one document per line.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Document, LabelSet, SentenceSpec, Span, Split};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct SentenceRecord {
    start: usize,
    end: usize,
    labels: LabelSet,
    section: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct DocumentRecord {
    doc_id: String,
    text: String,
    sentences: Vec<SentenceRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    split: Option<Split>,
}

impl From<&Document> for DocumentRecord {
    fn from(doc: &Document) -> Self {
        DocumentRecord {
            doc_id: doc.doc_id.clone(),
            text: doc.raw_text.clone(),
            sentences: doc
                .sentences
                .iter()
                .map(|s| SentenceRecord { start: s.span.start, end: s.span.end, labels: s.labels, section: s.section.clone() })
                .collect(),
            split: doc.split,
        }
    }
}

pub fn to_jsonl(docs: &[Document]) -> String {
    let mut out = String::new();
    for doc in docs {
        out.push_str(&serde_json::to_string(&DocumentRecord::from(doc)).expect("document serializes"));
        out.push('\n');
    }
    out
}

pub fn from_jsonl(text: &str) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: DocumentRecord = serde_json::from_str(line)
            .map_err(|e| Error::Parse(format!("corpus line {}: {e}", lineno + 1)))?;
        let specs = rec
            .sentences
            .into_iter()
            .map(|s| SentenceSpec { span: Span::new(s.start, s.end), labels: s.labels, section: s.section })
            .collect();
        let mut doc = Document::new(rec.doc_id, rec.text, specs)?;
        doc.split = rec.split;
        docs.push(doc);
    }
    Ok(docs)
}

pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<Document>> {
    from_jsonl(&fs::read_to_string(path)?)
}

pub fn write_corpus(path: impl AsRef<Path>, docs: &[Document]) -> Result<()> {
    fs::write(path, to_jsonl(docs))?;
    Ok(())
}
