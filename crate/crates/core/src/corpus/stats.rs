use serde::{Deserialize, Serialize};

use super::{Document, PerLabel, N_LABELS};

/// Sentence-level label statistics of a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub per_label_prevalence: PerLabel<f64>,
    /// Fraction of sentences with at least one label.
    pub labeled_fraction: f64,
    /// Among labeled sentences, the fraction with two or more labels.
    pub multi_label_fraction: f64,
    /// Among labeled sentences, the fraction with an adjacent sentence
    /// (either side, same document) sharing at least one label.
    pub neighbor_same_label_fraction: f64,
    #[serde(default)]
    pub n_documents: usize,
    #[serde(default)]
    pub n_sentences: usize,
}

impl CorpusStats {
    /// Label statistics of the annotated discharge-note training set.
    pub fn reference_targets() -> Self {
        CorpusStats {
            per_label_prevalence: PerLabel([0.0655, 0.0459, 0.0188, 0.0069, 0.0028, 0.0018, 0.0005]),
            labeled_fraction: 0.112,
            multi_label_fraction: 0.286,
            neighbor_same_label_fraction: 0.27,
            n_documents: 0,
            n_sentences: 0,
        }
    }

    /// Same label mix with every prevalence multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.per_label_prevalence.0.iter_mut().for_each(|p| *p *= factor);
        out.labeled_fraction *= factor;
        out
    }

    pub fn zero_targets() -> Self {
        CorpusStats {
            per_label_prevalence: PerLabel([0.0; N_LABELS]),
            labeled_fraction: 0.0,
            multi_label_fraction: 0.0,
            neighbor_same_label_fraction: 0.0,
            n_documents: 0,
            n_sentences: 0,
        }
    }

    pub fn fractions_valid(&self) -> bool {
        self.per_label_prevalence
            .0
            .iter()
            .chain([&self.labeled_fraction, &self.multi_label_fraction, &self.neighbor_same_label_fraction])
            .all(|x| (0.0..=1.0).contains(x))
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn compute_stats(docs: &[Document]) -> CorpusStats {
    let mut n_sentences = 0;
    let mut n_labeled = 0;
    let mut n_multi = 0;
    let mut n_neighbor = 0;
    let mut per_label = [0usize; N_LABELS];
    for doc in docs {
        let labels = doc.labels();
        for (i, set) in labels.iter().enumerate() {
            n_sentences += 1;
            for l in set.iter() {
                per_label[l.index()] += 1;
            }
            if !set.any() {
                continue;
            }
            n_labeled += 1;
            if set.len() >= 2 {
                n_multi += 1;
            }
            let left = i > 0 && labels[i - 1].intersects(*set);
            let right = i + 1 < labels.len() && labels[i + 1].intersects(*set);
            if left || right {
                n_neighbor += 1;
            }
        }
    }
    CorpusStats {
        per_label_prevalence: PerLabel(per_label.map(|c| ratio(c, n_sentences))),
        labeled_fraction: ratio(n_labeled, n_sentences),
        multi_label_fraction: ratio(n_multi, n_labeled),
        neighbor_same_label_fraction: ratio(n_neighbor, n_labeled),
        n_documents: docs.len(),
        n_sentences,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Label, LabelSet, SentenceSpec, Span};

    fn doc_with(labels: &[LabelSet]) -> Document {
        let raw: String = labels.iter().map(|_| "x. ").collect();
        let specs = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| SentenceSpec { span: Span::new(3 * i, 3 * i + 2), labels: l, section: None })
            .collect();
        Document::new("d", raw, specs).unwrap()
    }

    #[test]
    fn reference_labeled_fraction() {
        assert!((ratio(12_079, 107_494) - 0.11236).abs() < 1e-5);
    }

    #[test]
    fn zero_label_corpus() {
        let stats = compute_stats(&[doc_with(&[LabelSet::EMPTY; 4])]);
        assert_eq!(stats.labeled_fraction, 0.0);
        assert_eq!(stats.multi_label_fraction, 0.0);
        assert_eq!(stats.neighbor_same_label_fraction, 0.0);
        assert!(stats.per_label_prevalence.0.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn hand_counted_fixture() {
        use Label::*;
        let e = LabelSet::EMPTY;
        let s = |ls: &[Label]| LabelSet::from_labels(ls.iter().copied());
        // labeled: 1,2,4,5,8 (5 of 10); multi: 2,5 ; neighbor-share: 1-2 (appointment), 4-5 (lab) -> 4
        let labels = [e, s(&[Appointment]), s(&[Appointment, Medication]), e, s(&[Lab]), s(&[Lab, Imaging]), e, e, s(&[Other]), e];
        let stats = compute_stats(&[doc_with(&labels)]);
        assert_eq!(stats.n_sentences, 10);
        assert!((stats.labeled_fraction - 0.5).abs() < 1e-15);
        assert!((stats.multi_label_fraction - 0.4).abs() < 1e-15);
        assert!((stats.neighbor_same_label_fraction - 0.8).abs() < 1e-15);
        assert!((stats.per_label_prevalence[Appointment] - 0.2).abs() < 1e-15);
        assert!((stats.per_label_prevalence[PatientInstructions]).abs() < 1e-15);
        assert!(stats.fractions_valid());
    }

    #[test]
    fn neighbors_do_not_cross_documents() {
        let a = LabelSet::from_labels([Label::Lab]);
        let stats = compute_stats(&[doc_with(&[LabelSet::EMPTY, a]), doc_with(&[a, LabelSet::EMPTY])]);
        assert_eq!(stats.neighbor_same_label_fraction, 0.0);
    }
}
