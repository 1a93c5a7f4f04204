//! Deterministic greedy longest-match subword tokenizer over a fixed
//! vocabulary of at most 128 units. The blank token used by CTC is id 128
//! and never appears in the vocabulary or in encoder output.

use std::path::Path;

use super::EvalError;

pub const BLANK_ID: usize = 128;
const MAX_UNITS: usize = 128;
const UNK: &str = "<unk>";

/// The shipped vocabulary: characters, digits and frequent English bigrams.
const DEFAULT_VOCAB: &str = include_str!("../../assets/vocab128.txt");

#[derive(Debug, Clone)]
pub struct Tokenizer {
    units: Vec<String>,
    unk_id: usize,
    max_unit_len: usize,
}

impl Default for Tokenizer {
    fn default() -> Self {
        Tokenizer::from_lines(DEFAULT_VOCAB).expect("shipped vocabulary is valid")
    }
}

impl Tokenizer {
    /// Line-delimited units; the line index is the id.
    pub fn from_lines(text: &str) -> Result<Self, EvalError> {
        let units: Vec<String> = text
            .lines()
            .filter(|l| !l.is_empty())
            .map(|l| l.to_string())
            .collect();
        if units.len() > MAX_UNITS {
            return Err(EvalError::VocabTooLarge(units.len()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for u in &units {
            if !seen.insert(u.clone()) {
                return Err(EvalError::BadVocab(format!("duplicate unit `{u}`")));
            }
        }
        let unk_id = units
            .iter()
            .position(|u| u == UNK)
            .ok_or_else(|| EvalError::BadVocab(format!("vocabulary must contain `{UNK}`")))?;
        let max_unit_len = units
            .iter()
            .map(|u| if u == UNK { 1 } else { u.chars().count() })
            .max()
            .unwrap_or(1);
        Ok(Tokenizer {
            units,
            unk_id,
            max_unit_len,
        })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, EvalError> {
        Tokenizer::from_lines(&std::fs::read_to_string(path)?)
    }

    pub fn vocab_size(&self) -> usize {
        self.units.len()
    }

    pub fn unk_id(&self) -> usize {
        self.unk_id
    }

    pub fn unit(&self, id: usize) -> Option<&str> {
        self.units.get(id).map(|s| s.as_str())
    }

    /// Greedy longest-match left-to-right over normalized text. Unknown
    /// characters map to the reserved unk unit.
    pub fn encode(&self, text: &str) -> Vec<usize> {
        let chars: Vec<char> = text.chars().collect();
        let mut ids = Vec::new();
        let mut pos = 0;
        while pos < chars.len() {
            let mut matched = None;
            let max_len = self.max_unit_len.min(chars.len() - pos);
            for len in (1..=max_len).rev() {
                let candidate: String = chars[pos..pos + len].iter().collect();
                if candidate != UNK {
                    if let Some(id) = self.units.iter().position(|u| *u == candidate) {
                        matched = Some((id, len));
                        break;
                    }
                }
            }
            match matched {
                Some((id, len)) => {
                    ids.push(id);
                    pos += len;
                }
                None => {
                    ids.push(self.unk_id);
                    pos += 1;
                }
            }
        }
        ids
    }

    /// Concatenate the units; ids out of range render as the unk unit.
    pub fn decode(&self, ids: &[usize]) -> String {
        ids.iter()
            .map(|&id| self.units.get(id).map(|s| s.as_str()).unwrap_or(UNK))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_vocab_is_exactly_128_units() {
        let tok = Tokenizer::default();
        assert_eq!(tok.vocab_size(), 128);
    }

    #[test]
    fn roundtrip_on_unk_free_text() {
        let tok = Tokenizer::default();
        for text in ["hello world", "we go up", "three hundred fifty one", "abc"] {
            let ids = tok.encode(text);
            assert!(!ids.contains(&BLANK_ID));
            assert!(ids.iter().all(|&id| id != tok.unk_id()));
            assert_eq!(tok.decode(&ids), text);
        }
    }

    #[test]
    fn char_level_fallback_vocab() {
        let tok = Tokenizer::from_lines("<unk>\na\nb\nc\n").unwrap();
        let ids = tok.encode("abc");
        assert_eq!(ids.len(), 3);
        assert_eq!(tok.decode(&ids), "abc");
    }

    #[test]
    fn unknown_characters_become_unk() {
        let tok = Tokenizer::default();
        let ids = tok.encode("a&b");
        assert!(ids.contains(&tok.unk_id()));
        assert_eq!(tok.decode(&ids), "a<unk>b");
    }

    #[test]
    fn greedy_longest_match_prefers_bigrams() {
        let tok = Tokenizer::from_lines("<unk>\nt\nh\ne\nth\n").unwrap();
        let ids = tok.encode("the");
        // "th" then "e"
        assert_eq!(ids.len(), 2);
        assert_eq!(tok.decode(&ids), "the");
    }

    #[test]
    fn oversized_vocab_rejected() {
        let lines: String = (0..200).map(|i| format!("u{i}\n")).collect();
        assert!(matches!(
            Tokenizer::from_lines(&lines),
            Err(EvalError::VocabTooLarge(200))
        ));
    }

    #[test]
    fn randomized_roundtrip_property() {
        use rand::{Rng, SeedableRng};
        let tok = Tokenizer::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let len = rng.gen_range(0..30);
            let text: String = (0..len)
                .map(|_| {
                    let c = rng.gen_range(0..27);
                    if c == 26 {
                        ' '
                    } else {
                        (b'a' + c as u8) as char
                    }
                })
                .collect();
            let normalized = crate::eval::normalize_text(&text);
            assert_eq!(tok.decode(&tok.encode(&normalized)), normalized);
        }
    }
}
