//! Explanation scoring with label-aware credit.
//!
//! Per item: a gold "none" paired with a generated "none" earns 100 on every
//! scorer, two real explanations earn the scorer's value, and any mismatch
//! earns 0. Each scorer's total is divided by the number of items.

use std::collections::BTreeMap;
use std::io::Write;
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};

use super::ngram;
use crate::corpus::{Explanation, Instance, NONE_SENTINEL};
use crate::error::{check_same_len, Error, Result};

/// Reference side of an explanation pair: none, or one or more references.
///
/// Serialized as `"[None]"` or a list of strings; a single string is also
/// accepted on input.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GoldExplanation {
    None,
    References(Vec<String>),
}

impl Serialize for GoldExplanation {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            GoldExplanation::None => s.serialize_str(NONE_SENTINEL),
            GoldExplanation::References(refs) => refs.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for GoldExplanation {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            One(String),
            Many(Vec<String>),
        }
        let refs = match Raw::deserialize(d)? {
            Raw::One(s) => vec![s],
            Raw::Many(v) => v,
        };
        let refs: Vec<String> = refs
            .iter()
            .filter_map(|r| Explanation::from_serialized(r).as_text().map(str::to_owned))
            .collect();
        Ok(if refs.is_empty() {
            GoldExplanation::None
        } else {
            GoldExplanation::References(refs)
        })
    }
}

impl GoldExplanation {
    pub fn is_none(&self) -> bool {
        matches!(self, GoldExplanation::None)
    }

    pub fn text(text: impl Into<String>) -> Self {
        GoldExplanation::References(vec![text.into()])
    }
}

impl From<&Instance> for GoldExplanation {
    fn from(inst: &Instance) -> Self {
        if inst.references().is_empty() {
            GoldExplanation::None
        } else {
            GoldExplanation::References(inst.references().to_vec())
        }
    }
}

impl From<&Explanation> for GoldExplanation {
    fn from(e: &Explanation) -> Self {
        match e {
            Explanation::None => GoldExplanation::None,
            Explanation::Text(t) => GoldExplanation::text(t.clone()),
        }
    }
}

/// A text-similarity metric reporting values in [0, 100].
pub trait Scorer: Send + Sync {
    fn name(&self) -> &str;

    fn score(&self, references: &[String], hypothesis: &str) -> Result<f64>;

    fn score_batch(&self, pairs: &[(&[String], &str)]) -> Result<Vec<f64>> {
        pairs.iter().map(|(r, h)| self.score(r, h)).collect()
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Bleu4;

impl Scorer for Bleu4 {
    fn name(&self) -> &str {
        "bleu4"
    }

    fn score(&self, references: &[String], hypothesis: &str) -> Result<f64> {
        Ok(ngram::bleu4(references, hypothesis))
    }
}

#[derive(Clone, Copy, Debug)]
pub struct RougeL {
    pub beta: f64,
}

impl Default for RougeL {
    fn default() -> Self {
        Self { beta: 1.0 }
    }
}

impl Scorer for RougeL {
    fn name(&self) -> &str {
        "rouge_l"
    }

    fn score(&self, references: &[String], hypothesis: &str) -> Result<f64> {
        Ok(ngram::rouge_l_beta(references, hypothesis, self.beta))
    }
}

/// Delegates scoring to an external program (METEOR, BERTScore, ...).
///
/// The program receives one JSON object per line on stdin,
/// `{"references": [..], "hypothesis": ".."}`, and must print one number in
/// [0, 100] per input line on stdout.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExternalScorer {
    pub name: String,
    pub command: Vec<String>,
}

#[derive(Serialize)]
struct ExternalRequest<'a> {
    references: &'a [String],
    hypothesis: &'a str,
}

impl ExternalScorer {
    fn fail(&self, reason: impl Into<String>) -> Error {
        Error::Scorer {
            name: self.name.clone(),
            reason: reason.into(),
        }
    }
}

impl Scorer for ExternalScorer {
    fn name(&self) -> &str {
        &self.name
    }

    fn score(&self, references: &[String], hypothesis: &str) -> Result<f64> {
        Ok(self.score_batch(&[(references, hypothesis)])?[0])
    }

    fn score_batch(&self, pairs: &[(&[String], &str)]) -> Result<Vec<f64>> {
        if pairs.is_empty() {
            return Ok(Vec::new());
        }
        let (program, args) = self
            .command
            .split_first()
            .ok_or_else(|| self.fail("empty command"))?;
        let mut input = String::new();
        for (references, hypothesis) in pairs {
            input.push_str(&serde_json::to_string(&ExternalRequest { references, hypothesis })?);
            input.push('\n');
        }
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| self.fail(format!("cannot start `{program}`: {e}")))?;
        let mut stdin = child.stdin.take().expect("stdin is piped");
        let writer = std::thread::spawn(move || stdin.write_all(input.as_bytes()));
        let output = child
            .wait_with_output()
            .map_err(|e| self.fail(e.to_string()))?;
        writer
            .join()
            .expect("writer thread")
            .map_err(|e| self.fail(format!("writing input: {e}")))?;
        if !output.status.success() {
            return Err(self.fail(format!(
                "exited with {}: {}",
                output.status,
                String::from_utf8_lossy(&output.stderr).trim()
            )));
        }
        let scores: Vec<f64> = String::from_utf8_lossy(&output.stdout)
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.trim()
                    .parse::<f64>()
                    .map_err(|_| self.fail(format!("non-numeric output `{l}`")))
            })
            .collect::<Result<_>>()?;
        if scores.len() != pairs.len() {
            return Err(self.fail(format!(
                "expected {} scores, got {}",
                pairs.len(),
                scores.len()
            )));
        }
        if let Some(bad) = scores.iter().find(|s| !(0.0..=100.0).contains(*s)) {
            return Err(self.fail(format!("score {bad} outside [0, 100]")));
        }
        Ok(scores)
    }
}

/// Averages each scorer over all items with none/none = 100 and mismatch = 0.
pub fn explanation_eval(
    golds: &[GoldExplanation],
    hyps: &[Explanation],
    scorers: &[&dyn Scorer],
) -> Result<BTreeMap<String, f64>> {
    check_same_len(golds.len(), hyps.len())?;
    if scorers.is_empty() {
        return Err(Error::precondition("at least one scorer is required"));
    }
    if golds.is_empty() {
        return Err(Error::Empty);
    }
    let n = golds.len() as f64;
    let both_none = golds
        .iter()
        .zip(hyps)
        .filter(|(g, h)| g.is_none() && h.is_none())
        .count() as f64;
    let text_pairs: Vec<(&[String], &str)> = golds
        .iter()
        .zip(hyps)
        .filter_map(|(g, h)| match (g, h) {
            (GoldExplanation::References(refs), Explanation::Text(t)) => {
                Some((refs.as_slice(), t.as_str()))
            }
            _ => None,
        })
        .collect();

    let mut out = BTreeMap::new();
    for scorer in scorers {
        let scores = scorer.score_batch(&text_pairs)?;
        let total = 100.0 * both_none + scores.iter().sum::<f64>();
        out.insert(scorer.name().to_owned(), total / n);
    }
    Ok(out)
}
