//! Deterministic beam search over an abstract next-token scorer.

use super::vocab::EOS;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct BeamConfig {
    pub beam_size: usize,
    /// Maximum number of generated tokens, end-of-sequence included.
    pub max_len: usize,
    pub length_penalty: f64,
}

impl BeamConfig {
    pub fn new(beam_size: usize, max_len: usize) -> Self {
        Self {
            beam_size,
            max_len,
            length_penalty: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    /// Generated tokens without the end-of-sequence marker.
    pub tokens: Vec<u32>,
    pub log_prob: f64,
    /// `log_prob / len^length_penalty`, counting the end marker if emitted.
    pub score: f64,
}

fn finish(tokens: Vec<u32>, log_prob: f64, len: usize, penalty: f64) -> Hypothesis {
    Hypothesis {
        tokens,
        log_prob,
        score: log_prob / (len.max(1) as f64).powf(penalty),
    }
}

/// Runs beam search and returns up to `beam_size` hypotheses, best first.
///
/// `step` receives the current prefixes (all of equal length, without any
/// start token) and returns one row of next-token log-probabilities per
/// prefix. Tokens in `banned` are never generated; end-of-sequence is not
/// allowed as the first token. Ties are broken by lower token id and then by
/// earlier beam.
///
/// A hypothesis ends when end-of-sequence ranks among the top `beam_size`
/// continuations. Search stops once `beam_size` hypotheses have ended and the
/// best running beam scores below all of them.
pub fn beam_search<F>(config: &BeamConfig, banned: &[u32], mut step: F) -> Result<Vec<Hypothesis>>
where
    F: FnMut(&[Vec<u32>]) -> Result<Vec<Vec<f64>>>,
{
    if config.beam_size == 0 || config.max_len == 0 {
        return Err(Error::precondition("beam_size and max_len must be >= 1"));
    }
    let k = config.beam_size;
    let mut beams: Vec<(Vec<u32>, f64)> = vec![(Vec::new(), 0.0)];
    let mut finished: Vec<Hypothesis> = Vec::new();

    for t in 0..config.max_len {
        let prefixes: Vec<Vec<u32>> = beams.iter().map(|(p, _)| p.clone()).collect();
        let rows = step(&prefixes)?;
        if rows.len() != beams.len() {
            return Err(Error::LengthMismatch {
                left: beams.len(),
                right: rows.len(),
            });
        }
        let mut candidates: Vec<(f64, usize, u32)> = Vec::new();
        for (b, row) in rows.iter().enumerate() {
            for (tok, &lp) in row.iter().enumerate() {
                let tok = tok as u32;
                if banned.contains(&tok) || (t == 0 && tok == EOS) || !lp.is_finite() {
                    continue;
                }
                candidates.push((beams[b].1 + lp, b, tok));
            }
        }
        candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.2.cmp(&b.2)).then(a.1.cmp(&b.1)));

        let last = t + 1 == config.max_len;
        let mut next = Vec::with_capacity(k);
        for (rank, (lp, b, tok)) in candidates.into_iter().take(2 * k).enumerate() {
            if tok == EOS {
                if rank < k {
                    finished.push(finish(beams[b].0.clone(), lp, t + 1, config.length_penalty));
                }
                continue;
            }
            if next.len() < k {
                let mut tokens = beams[b].0.clone();
                tokens.push(tok);
                next.push((tokens, lp));
            }
        }
        if last || next.is_empty() {
            for (tokens, lp) in next {
                let len = tokens.len();
                finished.push(finish(tokens, lp, len, config.length_penalty));
            }
            break;
        }
        beams = next;
        if finished.len() >= k {
            let mut scores: Vec<f64> = finished.iter().map(|h| h.score).collect();
            scores.sort_by(|a, b| b.total_cmp(a));
            let worst_kept = scores[k - 1];
            let best_running = beams[0].1 / ((t + 1) as f64).powf(config.length_penalty);
            if best_running < worst_kept {
                break;
            }
        }
    }

    finished.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.tokens.cmp(&b.tokens)));
    finished.truncate(k);
    Ok(finished)
}
