//! Word-level tokenizer with a fixed block of special tokens.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::NONE_SENTINEL;
use crate::error::{Error, Result};

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const EOS: u32 = 2;
pub const UNK: u32 = 3;
/// The none-explanation sentinel is a single token.
pub const SENTINEL: u32 = 4;

const SPECIALS: [&str; 5] = ["<pad>", "<bos>", "<eos>", "<unk>", NONE_SENTINEL];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabFile", into = "VocabFile")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    tokens: Vec<String>,
}

impl From<VocabFile> for Vocab {
    fn from(f: VocabFile) -> Self {
        Self::from_tokens(f.tokens)
    }
}

impl From<Vocab> for VocabFile {
    fn from(v: Vocab) -> Self {
        VocabFile { tokens: v.tokens }
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '\'' | '#' | '@' | '_' | '-')
}

/// Lowercased pre-tokens: runs of word characters, single punctuation
/// characters, and the whole `[None]` literal.
pub fn pretokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for (i, part) in text.split(NONE_SENTINEL).enumerate() {
        if i > 0 {
            out.push(NONE_SENTINEL.to_owned());
        }
        let mut word = String::new();
        for c in part.chars().flat_map(char::to_lowercase) {
            if is_word_char(c) {
                word.push(c);
                continue;
            }
            if !word.is_empty() {
                out.push(std::mem::take(&mut word));
            }
            if !c.is_whitespace() {
                out.push(c.to_string());
            }
        }
        if !word.is_empty() {
            out.push(word);
        }
    }
    out
}

impl Vocab {
    fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Self { tokens, index }
    }

    /// Builds a vocabulary from training texts, most frequent words first
    /// (ties broken lexicographically), capped at `max_size` entries in total.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>, max_size: usize) -> Self {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for text in texts {
            for tok in pretokenize(text) {
                if !SPECIALS.contains(&tok.as_str()) {
                    *counts.entry(tok).or_insert(0) += 1;
                }
            }
        }
        let mut words: Vec<(String, usize)> = counts.into_iter().collect();
        words.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        let room = max_size.saturating_sub(tokens.len());
        tokens.extend(words.into_iter().take(room).map(|(w, _)| w));
        Self::from_tokens(tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    /// Token ids without any special framing.
    pub fn encode(&self, text: &str) -> Vec<u32> {
        pretokenize(text).iter().map(|t| self.id(t)).collect()
    }

    /// Joins word tokens with single spaces, attaching closing punctuation to
    /// the preceding word. Control tokens are skipped.
    pub fn decode(&self, ids: &[u32]) -> String {
        let mut out = String::new();
        for &id in ids {
            if matches!(id, PAD | BOS | EOS) {
                continue;
            }
            let tok = self.token(id).unwrap_or("<unk>");
            let attach = matches!(tok, "." | "," | "!" | "?" | ";" | ":" | ")" | "]");
            if !out.is_empty() && !attach && !out.ends_with(['(', '[']) {
                out.push(' ');
            }
            out.push_str(tok);
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let vocab: Vocab = serde_json::from_str(&raw)?;
        if vocab.tokens.len() < SPECIALS.len()
            || vocab.tokens[..SPECIALS.len()] != SPECIALS.map(String::from)
        {
            return Err(Error::precondition(format!(
                "{} does not start with the special tokens",
                path.display()
            )));
        }
        Ok(vocab)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pretokenize_splits_punctuation() {
        assert_eq!(
            pretokenize("Target:asian, women Post:You hate like a jew."),
            ["target", ":", "asian", ",", "women", "post", ":", "you", "hate", "like", "a", "jew", "."]
        );
        assert_eq!(pretokenize("don't #noamnesty"), ["don't", "#noamnesty"]);
    }

    #[test]
    fn sentinel_is_one_token() {
        let v = Vocab::build(["a b"], 100);
        assert_eq!(pretokenize("[None]"), ["[None]"]);
        assert_eq!(v.encode("[None]"), vec![SENTINEL]);
        assert_eq!(v.decode(&[SENTINEL, EOS]), "[None]");
    }

    #[test]
    fn build_orders_by_frequency() {
        let v = Vocab::build(["b a b", "c b a"], 7);
        assert_eq!(v.len(), 7);
        assert_eq!(v.token(5), Some("b"));
        assert_eq!(v.token(6), Some("a"));
        assert_eq!(v.id("c"), UNK);
    }

    #[test]
    fn decode_roundtrip_of_plain_words() {
        let v = Vocab::build(["muslims are inbred ."], 100);
        let ids = v.encode("Muslims are inbred.");
        assert_eq!(v.decode(&ids), "muslims are inbred.");
    }

    #[test]
    fn save_load() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("vocab.json");
        let v = Vocab::build(["x y z"], 100);
        v.save(&p).unwrap();
        assert_eq!(Vocab::load(&p).unwrap(), v);
    }
}
