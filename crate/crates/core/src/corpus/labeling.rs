use super::segment::is_section_header;
use super::{Document, Label};

const INSTRUCTION_SECTIONS: &[&str] = &[
    "discharge instructions",
    "followup instructions",
    "follow-up instructions",
    "follow up instructions",
];

fn is_instruction_section(name: &str) -> bool {
    let normalized = name.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    INSTRUCTION_SECTIONS.contains(&normalized.as_str())
}

/// Adds `patient_instructions` to every non-header sentence under a
/// discharge- or followup-instructions section. Never removes labels.
pub fn auto_label_instruction_sections(mut doc: Document) -> Document {
    for sentence in &mut doc.sentences {
        let in_section = sentence.section.as_deref().is_some_and(is_instruction_section);
        if in_section && !is_section_header(&sentence.text) {
            sentence.labels.insert(Label::PatientInstructions);
        }
    }
    doc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{LabelSet, SentenceSpec};

    #[test]
    fn labels_sentences_in_instruction_section() {
        let raw = "Brief Hospital Course:\nHe did well.\nDISCHARGE INSTRUCTIONS:\nDo not drive. Keep the wound dry. Call with fevers.";
        let doc = auto_label_instruction_sections(Document::from_raw("d", raw).unwrap());
        let flags: Vec<bool> = doc.sentences.iter().map(|s| s.labels.contains(Label::PatientInstructions)).collect();
        assert_eq!(flags, vec![false, false, false, true, true, true]);
    }

    #[test]
    fn no_instruction_section_is_noop() {
        let doc = Document::from_raw("d", "HPI:\nChest pain. Admitted.").unwrap();
        assert_eq!(auto_label_instruction_sections(doc.clone()), doc);
    }

    #[test]
    fn union_with_existing_labels() {
        let raw = "Followup Instructions:\nSee Dr. Lee on Monday.";
        let mut doc = Document::from_raw("d", raw).unwrap();
        doc.sentences[1].labels = LabelSet::from_labels([Label::Appointment]);
        let doc = auto_label_instruction_sections(doc);
        assert_eq!(doc.sentences[1].labels, LabelSet::from_labels([Label::Appointment, Label::PatientInstructions]));
        assert!(doc.sentences[0].labels.is_empty());
    }

    #[test]
    fn monotone() {
        let specs = vec![SentenceSpec {
            span: crate::corpus::Span::new(0, 4),
            labels: LabelSet::from_labels([Label::Lab, Label::Other]),
            section: Some("discharge instructions".into()),
        }];
        let doc = Document::new("d", "text", specs).unwrap();
        let after = auto_label_instruction_sections(doc.clone());
        for (a, b) in doc.sentences.iter().zip(&after.sentences) {
            assert_eq!(a.labels.union(b.labels), b.labels);
        }
    }
}
