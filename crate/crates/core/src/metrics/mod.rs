//! Evaluation: detection metrics, explanation scoring, target-group F1 and
//! inter-annotator agreement.

mod agreement;
mod classification;
mod explanation;
mod ngram;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{Explanation, Label};
use crate::error::{check_same_len, Error, Result};

pub use agreement::{krippendorff_alpha, DistanceMetric};
pub use classification::{classification_metrics, ClassificationMetrics, ConfusionMatrix};
pub use explanation::{explanation_eval, Bleu4, ExternalScorer, GoldExplanation, RougeL, Scorer};
pub use ngram::{bleu4, rouge_l, rouge_l_beta, BLEU_EPSILON};

/// Micro-averaged set-overlap F1 (x100) over per-item label sets.
///
/// When neither side holds any label the sets agree trivially and the score is 100.
pub fn multilabel_micro_f1(refs: &[BTreeSet<String>], hyps: &[BTreeSet<String>]) -> Result<f64> {
    check_same_len(refs.len(), hyps.len())?;
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (r, h) in refs.iter().zip(hyps) {
        let hit = r.intersection(h).count();
        tp += hit;
        fp += h.len() - hit;
        fn_ += r.len() - hit;
    }
    if tp + fp + fn_ == 0 {
        return Ok(100.0);
    }
    Ok(100.0 * 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64)
}

/// One line of a predictions file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub gold_label: Label,
    pub pred_label: Label,
    #[serde(alias = "gold_explanation")]
    pub gold_explanations: GoldExplanation,
    pub pred_explanation: Explanation,
}

pub fn parse_prediction_records(raw: &str) -> Result<Vec<PredictionRecord>> {
    raw.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::MalformedRow {
                row: i + 1,
                reason: e.to_string(),
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub per_scorer: BTreeMap<String, f64>,
    pub n: usize,
    /// `[gold][pred]` counts, label 0 first.
    pub confusion: ConfusionMatrix,
}

impl EvalReport {
    pub fn from_records(records: &[PredictionRecord], scorers: &[&dyn Scorer]) -> Result<Self> {
        let golds: Vec<Label> = records.iter().map(|r| r.gold_label).collect();
        let preds: Vec<Label> = records.iter().map(|r| r.pred_label).collect();
        let cls = classification_metrics(&golds, &preds)?;
        let gold_expl: Vec<GoldExplanation> =
            records.iter().map(|r| r.gold_explanations.clone()).collect();
        let hyp_expl: Vec<Explanation> = records.iter().map(|r| r.pred_explanation.clone()).collect();
        let per_scorer = explanation_eval(&gold_expl, &hyp_expl, scorers)?;
        Ok(Self {
            accuracy: cls.accuracy,
            macro_f1: cls.macro_f1,
            per_scorer,
            n: records.len(),
            confusion: cls.confusion,
        })
    }

    /// Header line and one data line, tab separated.
    pub fn to_tsv(&self) -> String {
        let mut header = String::from("n\taccuracy\tmacro_f1");
        let mut row = format!("{}\t{:.4}\t{:.4}", self.n, self.accuracy, self.macro_f1);
        for (name, value) in &self.per_scorer {
            let _ = write!(header, "\t{name}");
            let _ = write!(row, "\t{value:.4}");
        }
        let [[tn, fp], [fn_, tp]] = self.confusion.0;
        let _ = write!(header, "\ttn\tfp\tfn\ttp");
        let _ = write!(row, "\t{tn}\t{fp}\t{fn_}\t{tp}");
        format!("{header}\n{row}\n")
    }
}
