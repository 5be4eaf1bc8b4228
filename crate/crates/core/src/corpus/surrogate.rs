//! Surrogate filling for de-identification templates of the form
//! `[**...**]`.

use std::ops::Range;
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::Rng as _;
use regex::Regex;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::seed;

const OPEN: &str = "[**";
const CLOSE: &str = "**]";

const FIRST_NAMES: &[&str] = &[
    "martha", "james", "linda", "robert", "maria", "david", "susan", "joseph", "karen", "thomas", "nancy",
    "daniel", "helen", "george", "ruth", "edward", "alice", "frank", "grace", "henry",
];
const LAST_NAMES: &[&str] = &[
    "kline", "morgan", "shah", "nguyen", "oconnor", "patel", "rivera", "fischer", "hughes", "brooks", "walsh",
    "chen", "dawson", "ortiz", "bennett", "keller", "nash", "foley", "larsen", "quinn",
];
const HOSPITALS: &[&str] = &[
    "riverside medical center",
    "north valley hospital",
    "lakeshore general hospital",
    "saint anne hospital",
    "harbor view clinic",
    "mercy regional medical center",
];
const OTHERS: &[&str] = &["unit 7", "building 4", "room 212", "location 3", "suite 110", "floor 6"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    Name,
    Date,
    Phone,
    Hospital,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Replacement {
    pub kind: EntityKind,
    /// Byte range of the template in the input text.
    pub original: Range<usize>,
    /// Byte range of the surrogate in the output text.
    pub filled: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Filled {
    pub text: String,
    pub replacements: Vec<Replacement>,
}

impl Filled {
    /// Maps a byte offset in the filled text back to the input text.
    /// Offsets inside a surrogate map to the start of its template.
    pub fn to_original(&self, offset: usize) -> usize {
        let mut shift: isize = 0;
        for r in &self.replacements {
            if offset < r.filled.start {
                break;
            }
            if offset < r.filled.end {
                return r.original.start;
            }
            shift = r.original.end as isize - r.filled.end as isize;
        }
        (offset as isize + shift) as usize
    }
}

fn date_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^(\d{4}-\d{1,2}-\d{1,2}|\d{1,2}-\d{1,2}(-\d{2,4})?|\d{4})$").unwrap())
}

/// Infers the entity kind of a template from its inner text.
pub fn infer_kind(content: &str) -> EntityKind {
    let c = content.trim();
    if date_re().is_match(c) {
        return EntityKind::Date;
    }
    let lower = c.to_lowercase();
    if lower.contains("name") {
        EntityKind::Name
    } else if lower.contains("hospital") {
        EntityKind::Hospital
    } else if lower.contains("telephone") || lower.contains("phone") || lower.contains("fax") {
        EntityKind::Phone
    } else {
        EntityKind::Other
    }
}

fn normalize_date(content: &str) -> String {
    content
        .trim()
        .split('-')
        .map(|part| if part.len() == 1 { format!("0{part}") } else { part.to_string() })
        .collect::<Vec<_>>()
        .join("-")
}

fn surrogate(kind: EntityKind, content: &str, rng: &mut seed::Rng) -> String {
    match kind {
        EntityKind::Name => {
            let first = FIRST_NAMES.choose(rng).unwrap();
            let last = LAST_NAMES.choose(rng).unwrap();
            format!("{first} {last}")
        }
        EntityKind::Date => normalize_date(content),
        EntityKind::Phone => format!("({}) {}-{:04}", rng.gen_range(200..999), rng.gen_range(200..999), rng.gen_range(0..10000)),
        EntityKind::Hospital => HOSPITALS.choose(rng).unwrap().to_string(),
        EntityKind::Other => OTHERS.choose(rng).unwrap().to_string(),
    }
}

/// Replaces every `[**...**]` template with a seeded synthetic entity.
///
/// Text without templates is returned unchanged; an unclosed template is
/// an error carrying the byte offset of its opening bracket.
pub fn fill_surrogates(raw_text: &str, seed_value: u64) -> Result<Filled> {
    let mut rng = seed::stream(seed_value, seed::SURROGATE);
    let mut text = String::with_capacity(raw_text.len());
    let mut replacements = Vec::new();
    let mut cursor = 0;
    while let Some(rel) = raw_text[cursor..].find(OPEN) {
        let open = cursor + rel;
        let inner_start = open + OPEN.len();
        let Some(close_rel) = raw_text[inner_start..].find(CLOSE) else {
            return Err(Error::MalformedTemplate { offset: open });
        };
        let inner_end = inner_start + close_rel;
        let end = inner_end + CLOSE.len();
        let content = &raw_text[inner_start..inner_end];
        if content.contains(OPEN) {
            return Err(Error::MalformedTemplate { offset: open });
        }
        text.push_str(&raw_text[cursor..open]);
        let kind = infer_kind(content);
        let value = surrogate(kind, content, &mut rng);
        let filled_start = text.len();
        text.push_str(&value);
        replacements.push(Replacement { kind, original: open..end, filled: filled_start..text.len() });
        cursor = end;
    }
    text.push_str(&raw_text[cursor..]);
    Ok(Filled { text, replacements })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_snapshot() {
        let filled = fill_surrogates("[**Name**] seen on [**2101-03-14**]", 7).unwrap();
        assert_eq!(filled.text, SNAPSHOT_SEED_7);
        assert!(!filled.text.contains("[**"));
        assert_eq!(filled.replacements[0].kind, EntityKind::Name);
        assert_eq!(filled.replacements[1].kind, EntityKind::Date);
    }

    const SNAPSHOT_SEED_7: &str = "george nash seen on 2101-03-14";

    #[test]
    fn identity_without_templates() {
        let text = "Follow up with your PCP in 2 weeks.";
        let filled = fill_surrogates(text, 3).unwrap();
        assert_eq!(filled.text, text);
        assert!(filled.replacements.is_empty());
    }

    #[test]
    fn unclosed_template_reports_offset() {
        match fill_surrogates("[**broken", 1) {
            Err(Error::MalformedTemplate { offset }) => assert_eq!(offset, 0),
            other => panic!("unexpected {other:?}"),
        }
        match fill_surrogates("ok [**Name**] then [**oops", 1) {
            Err(Error::MalformedTemplate { offset }) => assert_eq!(offset, 19),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn idempotent_on_output() {
        let once = fill_surrogates("Call [**Telephone/Fax (1) 123**] or see [**Hospital 18**] on [**3-4**].", 11).unwrap();
        let twice = fill_surrogates(&once.text, 99).unwrap();
        assert_eq!(once.text, twice.text);
        assert!(once.text.ends_with("on 03-04."));
    }

    #[test]
    fn kinds() {
        assert_eq!(infer_kind("2101-03-14"), EntityKind::Date);
        assert_eq!(infer_kind("Known firstname 123"), EntityKind::Name);
        assert_eq!(infer_kind("Hospital1 18"), EntityKind::Hospital);
        assert_eq!(infer_kind("Telephone/Fax (1) 6"), EntityKind::Phone);
        assert_eq!(infer_kind("Location (un) 5"), EntityKind::Other);
    }

    #[test]
    fn offsets_map_back_to_input() {
        let raw = "Dr. [**Name**] at [**Hospital 3**] today.";
        let filled = fill_surrogates(raw, 5).unwrap();
        let today = filled.text.find("today").unwrap();
        assert_eq!(&raw[filled.to_original(today)..], "today.");
        let inside = filled.replacements[1].filled.start + 2;
        assert_eq!(filled.to_original(inside), raw.find("[**Hospital").unwrap());
        assert_eq!(filled.to_original(0), 0);
    }
}
