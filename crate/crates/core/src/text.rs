//! Text normalization shared by ingest, deduplication and the n-gram metrics.

use unicode_normalization::UnicodeNormalization;

/// NFC-normalizes, trims outer whitespace and collapses internal whitespace
/// runs to a single ASCII space.
pub fn normalize(text: &str) -> String {
    let nfc: String = text.nfc().collect();
    nfc.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Key used to compare posts across corpora: normalized then case-folded.
pub fn dedup_key(text: &str) -> String {
    normalize(text).to_lowercase()
}

/// Lowercased whitespace tokens, as used by BLEU and ROUGE-L.
pub fn metric_tokens(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}
