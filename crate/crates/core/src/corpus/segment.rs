//! Rule-based sentence segmentation for semi-structured clinical notes.
//!
//! Three kinds of units are recognized:
//! * section headers: a line starting with `Capitalized words:` (at most
//!   eight words), which opens a new section and is its own sentence;
//! * enumerated or bulleted list items (`1. ...`, `2) ...`, `- ...`), one
//!   sentence per line;
//! * prose, where consecutive lines form a paragraph that is split after
//!   `.`, `!` or `?` unless the period closes a known abbreviation.

use std::sync::OnceLock;

use regex::Regex;

use super::Span;

const MAX_HEADER_WORDS: usize = 8;

const ABBREVIATIONS: &[&str] = &[
    "dr", "mr", "mrs", "ms", "pt", "pts", "st", "vs", "no", "approx", "etc", "hx", "fx", "dx", "tx", "sx", "inc",
    "jr", "sr", "prof", "dept", "fig", "min", "max", "mg", "mcg", "ml", "tab", "tabs", "cap", "caps", "q",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentedSentence {
    pub span: Span,
    /// Normalized (lowercased, whitespace-collapsed) name of the enclosing
    /// section. Header sentences carry their own section name.
    pub section: Option<String>,
    pub is_header: bool,
}

fn header_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^([A-Z][A-Za-z /()\-]*):").unwrap())
}

fn list_item_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^(\d{1,3}[.)]|[-*\u{2022}])\s+\S").unwrap())
}

fn normalize_section(name: &str) -> String {
    name.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Length in characters of the header prefix (including the colon) if the
/// trimmed line starts with a section header.
fn header_prefix(line: &str) -> Option<(usize, String)> {
    let m = header_re().captures(line)?;
    let name = m.get(1)?.as_str();
    let words = name.split_whitespace().count();
    if words == 0 || words > MAX_HEADER_WORDS {
        return None;
    }
    // the pattern is ASCII-only, so bytes == chars
    Some((m.get(0)?.end(), normalize_section(name)))
}

/// True if the text (case-insensitive) is exactly a header such as
/// `discharge instructions:`.
pub fn is_section_header(text: &str) -> bool {
    let trimmed = text.trim();
    let mut chars = trimmed.chars();
    let Some(first) = chars.next() else { return false };
    let candidate: String = first.to_uppercase().chain(chars).collect();
    matches!(header_prefix(&candidate), Some((len, _)) if len == candidate.len())
}

fn is_abbreviation(token: &[char]) -> bool {
    // token includes the terminal period
    let body: Vec<char> = token.iter().copied().filter(|c| *c != '(' && *c != '"').collect();
    if body.len() < 2 {
        return false;
    }
    let word = &body[..body.len() - 1];
    if word.len() == 1 && word[0].is_alphabetic() {
        return true;
    }
    // dotted forms such as p.o. or e.g.
    if word.contains(&'.') && word.iter().all(|c| c.is_alphabetic() || *c == '.') {
        return true;
    }
    let lower: String = word.iter().collect::<String>().to_lowercase();
    ABBREVIATIONS.contains(&lower.as_str())
}

fn push_trimmed(chars: &[char], start: usize, end: usize, section: &Option<String>, out: &mut Vec<SegmentedSentence>) {
    let mut s = start;
    let mut e = end;
    while s < e && chars[s].is_whitespace() {
        s += 1;
    }
    while e > s && chars[e - 1].is_whitespace() {
        e -= 1;
    }
    if s < e {
        out.push(SegmentedSentence { span: Span::new(s, e), section: section.clone(), is_header: false });
    }
}

fn split_paragraph(chars: &[char], start: usize, end: usize, section: &Option<String>, out: &mut Vec<SegmentedSentence>) {
    let mut sent_start = start;
    let mut j = start;
    while j < end {
        let c = chars[j];
        if matches!(c, '.' | '!' | '?') {
            // absorb closing punctuation
            let mut k = j + 1;
            while k < end && matches!(chars[k], '.' | '!' | '?' | ')' | '"' | '\'') {
                k += 1;
            }
            let at_boundary = k == end || chars[k].is_whitespace();
            if at_boundary {
                let mut w = j;
                while w > sent_start && !chars[w - 1].is_whitespace() {
                    w -= 1;
                }
                let abbreviation = c == '.' && k == j + 1 && is_abbreviation(&chars[w..=j]);
                if !abbreviation {
                    push_trimmed(chars, sent_start, k, section, out);
                    sent_start = k;
                }
            }
            j = k;
        } else {
            j += 1;
        }
    }
    push_trimmed(chars, sent_start, end, section, out);
}

/// Splits a note into sentence spans (character offsets) with their
/// section names. Whitespace-only input yields an empty list.
pub fn tokenize_sentences(raw_text: &str) -> Vec<SegmentedSentence> {
    let chars: Vec<char> = raw_text.chars().collect();
    let mut out = Vec::new();
    let mut section: Option<String> = None;
    let mut paragraph: Option<(usize, usize)> = None;

    let flush = |paragraph: &mut Option<(usize, usize)>, section: &Option<String>, out: &mut Vec<SegmentedSentence>| {
        if let Some((s, e)) = paragraph.take() {
            split_paragraph(&chars, s, e, section, out);
        }
    };

    let mut line_start = 0;
    while line_start <= chars.len() {
        let line_end = chars[line_start..].iter().position(|&c| c == '\n').map_or(chars.len(), |p| line_start + p);
        let mut ts = line_start;
        while ts < line_end && chars[ts].is_whitespace() {
            ts += 1;
        }
        let mut te = line_end;
        while te > ts && chars[te - 1].is_whitespace() {
            te -= 1;
        }

        if ts == te {
            flush(&mut paragraph, &section, &mut out);
        } else {
            let line: String = chars[ts..te].iter().collect();
            if list_item_re().is_match(&line) {
                flush(&mut paragraph, &section, &mut out);
                out.push(SegmentedSentence { span: Span::new(ts, te), section: section.clone(), is_header: false });
            } else if let Some((len, name)) = header_prefix(&line) {
                flush(&mut paragraph, &section, &mut out);
                section = Some(name);
                out.push(SegmentedSentence {
                    span: Span::new(ts, ts + len),
                    section: section.clone(),
                    is_header: true,
                });
                if ts + len < te {
                    paragraph = Some((ts + len, te));
                }
            } else {
                paragraph = Some(match paragraph {
                    Some((s, _)) => (s, te),
                    None => (ts, te),
                });
            }
        }
        line_start = line_end + 1;
    }
    flush(&mut paragraph, &section, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(raw: &str) -> Vec<String> {
        let chars: Vec<char> = raw.chars().collect();
        tokenize_sentences(raw).iter().map(|s| chars[s.span.start..s.span.end].iter().collect()).collect()
    }

    #[test]
    fn header_then_prose() {
        let raw = "BRIEF HOSPITAL COURSE:\nPatient was stable. Discharged home.";
        let segs = tokenize_sentences(raw);
        assert_eq!(texts(raw), vec!["BRIEF HOSPITAL COURSE:", "Patient was stable.", "Discharged home."]);
        assert!(segs[0].is_header);
        assert_eq!(segs[2].section.as_deref(), Some("brief hospital course"));
    }

    #[test]
    fn single_sentence() {
        let segs = tokenize_sentences("hello.");
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].span, Span::new(0, 6));
    }

    #[test]
    fn whitespace_only_is_empty() {
        assert!(tokenize_sentences("  \n\t \n").is_empty());
        assert!(tokenize_sentences("").is_empty());
    }

    #[test]
    fn reference_segmentation_of_a_fixed_note() {
        let raw = "\
HISTORY OF PRESENT ILLNESS:
Mr. Jones is a 67 year old man with CHF.
He presented with dyspnea. He was given lasix 40 mg p.o. twice daily in the ED.

Brief Hospital Course:
The patient diuresed well.
Creatinine peaked at 1.9 and then improved!
Dr. Smith from cardiology saw the patient.

DISCHARGE MEDICATIONS:
1. Lasix 40 mg PO daily.
2. Metoprolol 25 mg PO BID.
3. Aspirin 81 mg daily.
He should weigh himself daily.
Follow up with Dr. Smith in 2 weeks. Repeat a chem 7
at that visit.
";
        let expected = vec![
            "HISTORY OF PRESENT ILLNESS:",
            "Mr. Jones is a 67 year old man with CHF.",
            "He presented with dyspnea.",
            "He was given lasix 40 mg p.o. twice daily in the ED.",
            "Brief Hospital Course:",
            "The patient diuresed well.",
            "Creatinine peaked at 1.9 and then improved!",
            "Dr. Smith from cardiology saw the patient.",
            "DISCHARGE MEDICATIONS:",
            "1. Lasix 40 mg PO daily.",
            "2. Metoprolol 25 mg PO BID.",
            "3. Aspirin 81 mg daily.",
            "He should weigh himself daily.",
            "Follow up with Dr. Smith in 2 weeks.",
            "Repeat a chem 7\nat that visit.",
        ];
        assert_eq!(texts(raw), expected);
        let segs = tokenize_sentences(raw);
        assert_eq!(segs.iter().filter(|s| s.is_header).count(), 3);
        assert_eq!(segs[13].section.as_deref(), Some("discharge medications"));
    }

    #[test]
    fn header_with_inline_text() {
        let raw = "Discharge Instructions: Do not drive. Call your doctor.";
        assert_eq!(texts(raw), vec!["Discharge Instructions:", "Do not drive.", "Call your doctor."]);
        assert_eq!(tokenize_sentences(raw)[2].section.as_deref(), Some("discharge instructions"));
    }

    #[test]
    fn long_colon_prefix_is_not_a_header() {
        let raw = "The patient and his wife were told about the plan for a scan: they agreed.";
        let segs = tokenize_sentences(raw);
        assert_eq!(segs.len(), 1);
        assert!(!segs[0].is_header);
    }

    #[test]
    fn header_detection_helper() {
        assert!(is_section_header("discharge instructions:"));
        assert!(is_section_header("Followup Instructions:"));
        assert!(!is_section_header("discharge instructions: keep dry."));
        assert!(!is_section_header("no colon here"));
    }
}
