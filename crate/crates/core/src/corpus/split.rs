use rand::seq::SliceRandom;

use super::{Document, Split};
use crate::error::{Error, Result};
use crate::seed;

/// Train/validation/test fractions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl SplitRatios {
    pub fn new(train: f64, val: f64, test: f64) -> Result<Self> {
        let r = SplitRatios { train, val, test };
        if [train, val, test].iter().any(|x| !(0.0..=1.0).contains(x)) || ((train + val + test) - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!("split ratios must be in [0,1] and sum to 1, got {train}/{val}/{test}")));
        }
        Ok(r)
    }

    /// The 518/100/100 document split of a 718-note corpus.
    pub fn reference() -> Self {
        SplitRatios { train: 518.0 / 718.0, val: 100.0 / 718.0, test: 100.0 / 718.0 }
    }
}

/// Partitions documents (never sentences) into train/val/test. Each part
/// keeps the input order of its documents.
pub fn split_corpus(docs: Vec<Document>, ratios: SplitRatios, seed_value: u64) -> Result<(Vec<Document>, Vec<Document>, Vec<Document>)> {
    let ratios = SplitRatios::new(ratios.train, ratios.val, ratios.test)?;
    let n = docs.len();
    if n < 3 {
        return Err(Error::Empty(format!("need at least 3 documents to split, got {n}")));
    }
    let n_train = (n as f64 * ratios.train).round() as usize;
    let n_val = ((n as f64 * ratios.val).round() as usize).min(n - n_train);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::stream(seed_value, seed::SPLIT));
    let mut assignment = vec![Split::Test; n];
    for (rank, &i) in order.iter().enumerate() {
        assignment[i] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for (mut doc, split) in docs.into_iter().zip(assignment) {
        doc.split = Some(split);
        match split {
            Split::Train => train.push(doc),
            Split::Val => val.push(doc),
            _ => test.push(doc),
        }
    }
    Ok((train, val, test))
}

/// Keeps `round(fraction · n)` documents (at least one), chosen with the
/// seed, in their input order.
pub fn subsample_documents(docs: Vec<Document>, fraction: f64, seed_value: u64) -> Result<Vec<Document>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidConfig(format!("subsample fraction {fraction} outside (0, 1]")));
    }
    if docs.is_empty() {
        return Err(Error::Empty("corpus".into()));
    }
    let keep = ((docs.len() as f64 * fraction).round() as usize).max(1);
    let mut order: Vec<usize> = (0..docs.len()).collect();
    order.shuffle(&mut seed::stream(seed_value, "subsample"));
    let mut kept = vec![false; docs.len()];
    for &i in &order[..keep] {
        kept[i] = true;
    }
    Ok(docs.into_iter().zip(kept).filter(|(_, k)| *k).map(|(d, _)| d).collect())
}

/// Marks every document unlabeled and clears its sentence labels.
pub fn strip_labels(docs: &mut [Document]) {
    for d in docs {
        d.split = Some(Split::Unlabeled);
        for s in &mut d.sentences {
            s.labels = super::LabelSet::EMPTY;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn docs(n: usize) -> Vec<Document> {
        (0..n).map(|i| Document::from_raw(format!("doc{i}"), "One. Two.").unwrap()).collect()
    }

    #[test]
    fn subsample_keeps_order() {
        let kept = subsample_documents(docs(50), 0.1, 4).unwrap();
        assert_eq!(kept.len(), 5);
        let ids: Vec<usize> = kept.iter().map(|d| d.doc_id[3..].parse().unwrap()).collect();
        assert!(ids.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(kept, subsample_documents(docs(50), 0.1, 4).unwrap());
        assert!(subsample_documents(docs(5), 0.0, 4).is_err());
        assert_eq!(subsample_documents(docs(5), 0.01, 4).unwrap().len(), 1);
    }

    #[test]
    fn reference_sizes() {
        let (tr, va, te) = split_corpus(docs(718), SplitRatios::reference(), 1).unwrap();
        assert_eq!((tr.len(), va.len(), te.len()), (518, 100, 100));
    }

    #[test]
    fn minimal_split() {
        let third = 1.0 / 3.0;
        let (tr, va, te) = split_corpus(docs(3), SplitRatios { train: third, val: third, test: 1.0 - 2.0 * third }, 4).unwrap();
        assert_eq!((tr.len(), va.len(), te.len()), (1, 1, 1));
    }

    #[test]
    fn too_few_documents() {
        assert!(split_corpus(docs(2), SplitRatios::reference(), 0).is_err());
    }

    #[test]
    fn bad_ratios() {
        assert!(SplitRatios::new(0.5, 0.5, 0.5).is_err());
    }

    #[test]
    fn partition_and_determinism() {
        let a = split_corpus(docs(50), SplitRatios::reference(), 9).unwrap();
        let b = split_corpus(docs(50), SplitRatios::reference(), 9).unwrap();
        assert_eq!(a, b);
        let mut seen = HashSet::new();
        for d in a.0.iter().chain(&a.1).chain(&a.2) {
            assert!(seen.insert(d.doc_id.clone()));
        }
        assert_eq!(seen.len(), 50);
        assert!(a.0.iter().all(|d| d.split == Some(Split::Train)));
    }
}
