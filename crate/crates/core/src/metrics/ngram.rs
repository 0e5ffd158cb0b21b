//! Sentence-level BLEU-4 and ROUGE-L over lowercased whitespace tokens.

use std::collections::HashMap;

use crate::text::metric_tokens;

const MAX_ORDER: usize = 4;
/// Numerator floor for n-gram orders with no matches.
pub const BLEU_EPSILON: f64 = 1e-9;

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

fn bleu_single(reference: &[String], hypothesis: &[String]) -> f64 {
    if hypothesis.is_empty() || reference.is_empty() {
        return 0.0;
    }
    // Orders the hypothesis is too short to contain are left out of the mean,
    // so a short sentence compared with itself still scores 100.
    let order = MAX_ORDER.min(hypothesis.len());
    let mut log_sum = 0.0;
    for n in 1..=order {
        let hyp = ngram_counts(hypothesis, n);
        let refc = ngram_counts(reference, n);
        let total = hypothesis.len() + 1 - n;
        let matched: usize = hyp
            .iter()
            .map(|(gram, &c)| c.min(refc.get(gram).copied().unwrap_or(0)))
            .sum();
        let precision = if matched == 0 {
            BLEU_EPSILON / total as f64
        } else {
            matched as f64 / total as f64
        };
        log_sum += precision.ln();
    }
    let (c, r) = (hypothesis.len() as f64, reference.len() as f64);
    let brevity = if c >= r { 1.0 } else { (1.0 - r / c).exp() };
    100.0 * brevity * (log_sum / order as f64).exp()
}

/// BLEU-4 in [0, 100]; the maximum over references when several are given.
pub fn bleu4<S: AsRef<str>>(references: &[S], hypothesis: &str) -> f64 {
    let hyp = metric_tokens(hypothesis);
    references
        .iter()
        .map(|r| bleu_single(&metric_tokens(r.as_ref()), &hyp))
        .fold(0.0, f64::max)
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS-based ROUGE-L F-measure in [0, 100], maximised over references.
///
/// `beta` weights recall against precision; `1.0` is the harmonic mean.
pub fn rouge_l_beta<S: AsRef<str>>(references: &[S], hypothesis: &str, beta: f64) -> f64 {
    let hyp = metric_tokens(hypothesis);
    if hyp.is_empty() {
        return 0.0;
    }
    references
        .iter()
        .map(|r| {
            let reference = metric_tokens(r.as_ref());
            let lcs = lcs_len(&reference, &hyp);
            if lcs == 0 {
                return 0.0;
            }
            let p = lcs as f64 / hyp.len() as f64;
            let r = lcs as f64 / reference.len() as f64;
            let b2 = beta * beta;
            100.0 * (1.0 + b2) * p * r / (r + b2 * p)
        })
        .fold(0.0, f64::max)
}

pub fn rouge_l<S: AsRef<str>>(references: &[S], hypothesis: &str) -> f64 {
    rouge_l_beta(references, hypothesis, 1.0)
}
