//! WordPiece-style subword vocabulary trained by greedy pair merging, with
//! byte-fallback pieces so that encoding never fails.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const CLS: u32 = 2;
pub const SEP: u32 = 3;
pub const MASK: u32 = 4;
pub const DOC_START: u32 = 5;
pub const DOC_END: u32 = 6;

pub const RESERVED: [&str; 7] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "<DOC_START>", "<DOC_END>"];
pub const N_RESERVED: u32 = RESERVED.len() as u32;
const BYTE_BASE: u32 = N_RESERVED;
/// Reserved tokens plus one piece per byte value.
pub const N_BASE: usize = RESERVED.len() + 256;
pub const MIN_TRAIN_SIZE: usize = 300;
pub const DEFAULT_SIZE: usize = 8000;

pub const CONTINUATION: &str = "##";

fn byte_piece(b: u8) -> String {
    format!("<0x{b:02X}>")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubwordVocab {
    pieces: Vec<String>,
    index: HashMap<String, u32>,
    max_piece_chars: usize,
    fingerprint: String,
}

impl SubwordVocab {
    fn from_all_pieces(pieces: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(pieces.len());
        for (i, p) in pieces.iter().enumerate() {
            if p.is_empty() || p.chars().any(char::is_whitespace) {
                return Err(Error::Parse(format!("invalid vocabulary piece {p:?} at id {i}")));
            }
            if index.insert(p.clone(), i as u32).is_some() {
                return Err(Error::Parse(format!("duplicate vocabulary piece {p:?}")));
            }
        }
        for (i, r) in RESERVED.iter().enumerate() {
            if pieces.get(i).map(String::as_str) != Some(*r) {
                return Err(Error::Parse(format!("reserved token {r} must have id {i}")));
            }
        }
        for b in 0..=255u8 {
            if pieces.get((BYTE_BASE + u32::from(b)) as usize) != Some(&byte_piece(b)) {
                return Err(Error::Parse(format!("byte piece {} missing at its fixed id", byte_piece(b))));
            }
        }
        let max_piece_chars = pieces.iter().map(|p| p.trim_start_matches(CONTINUATION).chars().count()).max().unwrap_or(1);
        let fingerprint = fingerprint_of(&pieces);
        Ok(SubwordVocab { pieces, index, max_piece_chars, fingerprint })
    }

    /// Vocabulary made of the reserved tokens, the byte pieces and the
    /// given pieces, in that order.
    pub fn from_pieces<I, S>(extra: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut pieces = base_pieces();
        pieces.extend(extra.into_iter().map(Into::into));
        Self::from_all_pieces(pieces)
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn id(&self, piece: &str) -> Option<u32> {
        self.index.get(piece).copied()
    }

    pub fn piece(&self, id: u32) -> Option<&str> {
        self.pieces.get(id as usize).map(String::as_str)
    }

    pub fn contains(&self, piece: &str) -> bool {
        self.index.contains_key(piece)
    }

    pub fn pieces(&self) -> &[String] {
        &self.pieces
    }

    pub fn is_special(id: u32) -> bool {
        id < N_RESERVED
    }

    fn is_byte(id: u32) -> bool {
        (BYTE_BASE..BYTE_BASE + 256).contains(&id)
    }

    /// Longest-match-first segmentation of one whitespace-free word.
    pub fn encode_word(&self, word: &str, out: &mut Vec<u32>) {
        let chars: Vec<char> = word.chars().collect();
        let byte_offsets: Vec<usize> = word.char_indices().map(|(b, _)| b).chain(std::iter::once(word.len())).collect();
        let mut candidate = String::with_capacity(word.len() + 2);
        let mut i = 0;
        while i < chars.len() {
            let longest = (chars.len() - i).min(self.max_piece_chars);
            let mut matched = None;
            for len in (1..=longest).rev() {
                candidate.clear();
                if i > 0 {
                    candidate.push_str(CONTINUATION);
                }
                candidate.push_str(&word[byte_offsets[i]..byte_offsets[i + len]]);
                if let Some(&id) = self.index.get(candidate.as_str()) {
                    matched = Some((id, len));
                    break;
                }
            }
            match matched {
                Some((id, len)) => {
                    out.push(id);
                    i += len;
                }
                None => {
                    let mut buf = [0u8; 4];
                    for b in chars[i].encode_utf8(&mut buf).bytes() {
                        out.push(BYTE_BASE + u32::from(b));
                    }
                    i += 1;
                }
            }
        }
    }

    /// Pieces for each whitespace-separated word.
    pub fn encode_words(&self, text: &str) -> Vec<Vec<u32>> {
        text.split_whitespace()
            .map(|w| {
                let mut ids = Vec::new();
                self.encode_word(w, &mut ids);
                ids
            })
            .collect()
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        let mut ids = Vec::new();
        for w in text.split_whitespace() {
            self.encode_word(w, &mut ids);
        }
        ids
    }

    /// Joins pieces back into single-space-separated words. Byte pieces
    /// attach to the preceding piece.
    pub fn decode(&self, ids: &[u32]) -> String {
        let mut words: Vec<String> = Vec::new();
        let mut pending: Vec<u8> = Vec::new();
        let flush = |pending: &mut Vec<u8>, words: &mut Vec<String>| {
            if !pending.is_empty() {
                let s = String::from_utf8_lossy(pending).into_owned();
                match words.last_mut() {
                    Some(w) => w.push_str(&s),
                    None => words.push(s),
                }
                pending.clear();
            }
        };
        for &id in ids {
            if Self::is_byte(id) {
                pending.push((id - BYTE_BASE) as u8);
                continue;
            }
            flush(&mut pending, &mut words);
            let piece = self.piece(id).unwrap_or(RESERVED[UNK as usize]);
            match piece.strip_prefix(CONTINUATION) {
                Some(rest) if !words.is_empty() && !Self::is_special(id) => words.last_mut().unwrap().push_str(rest),
                _ => words.push(piece.to_string()),
            }
        }
        flush(&mut pending, &mut words);
        words.join(" ")
    }

    pub fn to_file_string(&self) -> String {
        let mut out = String::with_capacity(self.pieces.len() * 8);
        let _ = writeln!(out, "# fingerprint {}", self.fingerprint);
        for p in &self.pieces {
            out.push_str(p);
            out.push('\n');
        }
        out
    }

    pub fn from_file_string(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty vocabulary file".into()))?;
        let expected = header
            .strip_prefix("# fingerprint ")
            .ok_or_else(|| Error::Parse("vocabulary file must start with a fingerprint line".into()))?
            .trim()
            .to_string();
        let vocab = Self::from_all_pieces(lines.map(str::to_string).collect())?;
        if vocab.fingerprint != expected {
            return Err(Error::FingerprintMismatch { expected, found: vocab.fingerprint });
        }
        Ok(vocab)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_file_string())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_file_string(&fs::read_to_string(path)?)
    }
}

fn base_pieces() -> Vec<String> {
    let mut pieces: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
    pieces.extend((0..=255u8).map(byte_piece));
    pieces
}

fn fingerprint_of(pieces: &[String]) -> String {
    let mut hasher = Sha256::new();
    for p in pieces {
        hasher.update(p.as_bytes());
        hasher.update(b"\n");
    }
    let digest = hasher.finalize();
    hex::encode(&digest[..16])
}

/// Trains a vocabulary of at most `target_size` pieces (more only if the
/// character inventory alone exceeds it).
///
/// Starts from reserved tokens, byte pieces and every observed character
/// in both word-initial and `##` continuation form, then repeatedly merges
/// the most frequent adjacent pair within words. Ties go to the pair whose
/// pieces were created first, so the result depends only on the text.
pub fn train_vocab<I, S>(corpus: I, target_size: usize) -> Result<SubwordVocab>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    if target_size < MIN_TRAIN_SIZE {
        return Err(Error::InvalidConfig(format!("vocabulary size must be at least {MIN_TRAIN_SIZE}, got {target_size}")));
    }
    let mut counts: HashMap<String, u64> = HashMap::new();
    for text in corpus {
        for w in text.as_ref().split_whitespace() {
            *counts.entry(w.to_string()).or_default() += 1;
        }
    }
    if counts.is_empty() {
        return Err(Error::Empty("cannot train a vocabulary on an empty corpus".into()));
    }
    let mut words: Vec<(String, u64)> = counts.into_iter().collect();
    words.sort();

    let alphabet: BTreeSet<char> = words.iter().flat_map(|(w, _)| w.chars()).collect();
    let mut pieces = base_pieces();
    let mut index: HashMap<String, u32> = pieces.iter().enumerate().map(|(i, p)| (p.clone(), i as u32)).collect();
    let mut intern = |piece: String, pieces: &mut Vec<String>| -> u32 {
        if let Some(&id) = index.get(&piece) {
            return id;
        }
        let id = pieces.len() as u32;
        index.insert(piece.clone(), id);
        pieces.push(piece);
        id
    };
    let mut initial = HashMap::new();
    let mut continuation = HashMap::new();
    for &c in &alphabet {
        initial.insert(c, intern(c.to_string(), &mut pieces));
        continuation.insert(c, intern(format!("{CONTINUATION}{c}"), &mut pieces));
    }

    let mut symbols: Vec<(Vec<u32>, u64)> = words
        .iter()
        .map(|(w, n)| {
            let ids = w.chars().enumerate().map(|(i, c)| if i == 0 { initial[&c] } else { continuation[&c] }).collect();
            (ids, *n)
        })
        .collect();

    while pieces.len() < target_size {
        let mut pair_counts: HashMap<(u32, u32), u64> = HashMap::new();
        for (ids, n) in &symbols {
            for pair in ids.windows(2) {
                *pair_counts.entry((pair[0], pair[1])).or_default() += *n;
            }
        }
        let Some((&(left, right), _)) = pair_counts
            .iter()
            .max_by(|(pa, ca), (pb, cb)| ca.cmp(cb).then_with(|| pb.cmp(pa)))
        else {
            break;
        };
        let merged = format!("{}{}", pieces[left as usize], pieces[right as usize].trim_start_matches(CONTINUATION));
        let new_id = intern(merged, &mut pieces);
        for (ids, _) in &mut symbols {
            if ids.len() < 2 {
                continue;
            }
            let mut out = Vec::with_capacity(ids.len());
            let mut i = 0;
            while i < ids.len() {
                if i + 1 < ids.len() && ids[i] == left && ids[i + 1] == right {
                    out.push(new_id);
                    i += 2;
                } else {
                    out.push(ids[i]);
                    i += 1;
                }
            }
            *ids = out;
        }
    }
    SubwordVocab::from_all_pieces(pieces)
}

/// Number of whitespace tokens that split into two or more pieces.
pub fn count_oov(sentence: &str, vocab: &SubwordVocab) -> usize {
    vocab.encode_words(sentence).iter().filter(|w| w.len() >= 2).count()
}

/// Mean [`count_oov`] over sentences, rounded to two decimals.
pub fn mean_oov<S: AsRef<str>>(sentences: &[S], vocab: &SubwordVocab) -> f64 {
    if sentences.is_empty() {
        return 0.0;
    }
    let total: usize = sentences.iter().map(|s| count_oov(s.as_ref(), vocab)).sum();
    (total as f64 / sentences.len() as f64 * 100.0).round() / 100.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids_to_pieces(v: &SubwordVocab, ids: &[u32]) -> Vec<String> {
        ids.iter().map(|&i| v.piece(i).unwrap().to_string()).collect()
    }

    #[test]
    fn hand_traced_merges() {
        // [a ##a ##a ##b]: all pairs tie; (a, ##a) was created first -> "aa";
        // then [aa ##a ##b]: (##a, ##b) has the older left piece -> "##ab";
        // then [aa ##ab] -> "aaab".
        let v = train_vocab(std::iter::repeat_n("aaab", 5), 300).unwrap();
        let learned: Vec<&str> = v.pieces()[N_BASE..].iter().map(String::as_str).collect();
        assert_eq!(learned, vec!["a", "##a", "b", "##b", "aa", "##ab", "aaab"]);
        assert_eq!(ids_to_pieces(&v, &v.encode("aaab")), vec!["aaab"]);
    }

    #[test]
    fn size_limit_without_merges() {
        let corpus = "abcdefghijklmnopqrstuvwxyz zyxwvutsrqponmlkjihgfedcba";
        let target = N_BASE + 52;
        let v = train_vocab([corpus], target).unwrap();
        assert_eq!(v.len(), target);
        assert!(v.pieces()[N_BASE..].iter().all(|p| p.trim_start_matches(CONTINUATION).chars().count() == 1));
    }

    #[test]
    fn training_is_deterministic() {
        let text = ["the patient was seen", "follow up with the patient in two weeks", "the labs were seen"];
        let a = train_vocab(text, 320).unwrap();
        let b = train_vocab(text, 320).unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.len(), 320);
    }

    #[test]
    fn training_errors() {
        assert!(matches!(train_vocab(["x"], 299), Err(Error::InvalidConfig(_))));
        assert!(matches!(train_vocab(["   ", ""], 400), Err(Error::Empty(_))));
    }

    #[test]
    fn reserved_ids_are_fixed() {
        let v = SubwordVocab::from_pieces(["x"]).unwrap();
        assert_eq!(v.id("[SEP]"), Some(SEP));
        assert_eq!(v.id("<DOC_START>"), Some(DOC_START));
        assert_eq!(v.id("<DOC_END>"), Some(DOC_END));
        assert_eq!(v.id("[MASK]"), Some(MASK));
        assert_eq!(v.id("[PAD]"), Some(PAD));
    }

    #[test]
    fn split_into_continuation_pieces() {
        let v = SubwordVocab::from_pieces(["p", "##t", "t"]).unwrap();
        assert_eq!(ids_to_pieces(&v, &v.encode("pt")), vec!["p", "##t"]);
        assert!(v.encode("").is_empty());
    }

    #[test]
    fn oov_count_hand_vocab() {
        let v = SubwordVocab::from_pieces(["p", "##t", "needs", "x", "##ray", "##r", "##a", "##y"]).unwrap();
        assert_eq!(count_oov("pt needs xray", &v), 2);
        assert_eq!(count_oov("needs needs", &v), 0);
        assert_eq!(mean_oov(&["pt needs xray", "needs"], &v), 1.0);
    }

    #[test]
    fn byte_fallback_never_emits_unk() {
        let v = SubwordVocab::from_pieces(["a"]).unwrap();
        let ids = v.encode("aé");
        assert!(!ids.contains(&UNK));
        assert_eq!(v.decode(&ids), "aé");
    }

    #[test]
    fn file_roundtrip_and_tamper_detection() {
        let v = train_vocab(["follow up in two weeks"], 320).unwrap();
        let text = v.to_file_string();
        assert_eq!(SubwordVocab::from_file_string(&text).unwrap(), v);
        let tampered = text.replacen("##w", "##q", 1);
        assert!(matches!(SubwordVocab::from_file_string(&tampered), Err(Error::FingerprintMismatch { .. })));
    }
}
