//! Report tokenizer: lowercase, split on non-alphanumerics, corpus-built
//! vocabulary with a reserved unknown id 0.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use alloc::collections::BTreeMap;

pub const UNKNOWN_TOKEN_ID: u32 = 0;

/// Lowercased alphanumeric runs, in text order.
pub fn split_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            cur.extend(ch.to_lowercase());
        } else if !cur.is_empty() {
            out.push(core::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Token vocabulary. Ids are assigned in sorted word order starting at 1, so
/// a vocabulary built from the same corpus is always identical.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Vocab {
    by_word: BTreeMap<String, u32>,
    words: Vec<String>,
}

impl Vocab {
    pub fn empty() -> Self {
        Vocab::default()
    }

    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut set = BTreeSet::new();
        for text in texts {
            set.extend(split_tokens(text));
        }
        Vocab::from_words(set.into_iter().collect())
    }

    /// Rebuilds from an id-ordered word list (the serialized form).
    pub fn from_words(words: Vec<String>) -> Self {
        let by_word = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), (i + 1) as u32))
            .collect();
        Vocab { by_word, words }
    }

    /// Number of known words, excluding the unknown slot.
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Rows the token table must have: one per word plus the unknown row.
    pub fn table_rows(&self) -> usize {
        self.words.len() + 1
    }

    /// Id-ordered word list, for serialization.
    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn id_of(&self, word: &str) -> u32 {
        self.by_word.get(word).copied().unwrap_or(UNKNOWN_TOKEN_ID)
    }

    /// Tokenizes and maps to ids; unknown words map to id 0. No truncation —
    /// the encoder applies the max-length rule.
    pub fn encode(&self, text: &str) -> Vec<u32> {
        split_tokens(text).iter().map(|w| self.id_of(w)).collect()
    }
}
