use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::error::{check_same_len, Error, Result};

/// 2x2 counts indexed `[gold][pred]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix(pub [[usize; 2]; 2]);

impl ConfusionMatrix {
    pub fn from_labels(golds: &[Label], preds: &[Label]) -> Self {
        let mut m = [[0usize; 2]; 2];
        for (g, p) in golds.iter().zip(preds) {
            m[g.index()][p.index()] += 1;
        }
        Self(m)
    }

    pub fn total(&self) -> usize {
        self.0.iter().flatten().sum()
    }

    pub fn correct(&self) -> usize {
        self.0[0][0] + self.0[1][1]
    }

    /// F1 of one class in [0, 1], or `None` when the class appears in neither
    /// golds nor predictions.
    pub fn class_f1(&self, class: usize) -> Option<f64> {
        let other = 1 - class;
        let tp = self.0[class][class];
        let fn_ = self.0[class][other];
        let fp = self.0[other][class];
        if tp + fn_ + fp == 0 {
            return None;
        }
        Some(2.0 * tp as f64 / (2 * tp + fn_ + fp) as f64)
    }

    /// Unweighted mean of the per-class F1 over classes that occur.
    pub fn macro_f1(&self) -> f64 {
        let scores: Vec<f64> = (0..2).filter_map(|c| self.class_f1(c)).collect();
        if scores.is_empty() {
            return 0.0;
        }
        scores.iter().sum::<f64>() / scores.len() as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    /// Percent.
    pub accuracy: f64,
    /// Percent.
    pub macro_f1: f64,
    pub confusion: ConfusionMatrix,
}

/// Accuracy and macro F1 (both x100).
///
/// A class absent from the golds but predicted contributes F1 = 0; a class
/// absent from both is left out of the mean.
pub fn classification_metrics(golds: &[Label], preds: &[Label]) -> Result<ClassificationMetrics> {
    check_same_len(golds.len(), preds.len())?;
    if golds.is_empty() {
        return Err(Error::Empty);
    }
    let confusion = ConfusionMatrix::from_labels(golds, preds);
    Ok(ClassificationMetrics {
        accuracy: 100.0 * confusion.correct() as f64 / golds.len() as f64,
        macro_f1: 100.0 * confusion.macro_f1(),
        confusion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use Label::{NonToxic as N, Toxic as T};

    #[test]
    fn perfect() {
        let g = [N, T, T, N];
        let m = classification_metrics(&g, &g).unwrap();
        assert_eq!(m.accuracy, 100.0);
        assert_eq!(m.macro_f1, 100.0);
        assert_eq!(m.confusion.0, [[2, 0], [0, 2]]);
    }

    #[test]
    fn single_class_perfect_skips_absent_class() {
        let g = [N, N, N];
        assert_eq!(classification_metrics(&g, &g).unwrap().macro_f1, 100.0);
    }

    #[test]
    fn all_toxic_predictions() {
        let m = classification_metrics(&[N, N, T, T], &[T, T, T, T]).unwrap();
        assert_eq!(m.accuracy, 50.0);
        assert_abs_diff_eq!(m.macro_f1, 100.0 / 3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(m.confusion.class_f1(1).unwrap(), 2.0 / 3.0, epsilon = 1e-12);
        assert_eq!(m.confusion.class_f1(0), Some(0.0));
    }

    #[test]
    fn predicted_but_absent_class_counts_as_zero() {
        let m = classification_metrics(&[N, N], &[N, T]).unwrap();
        // class 0: tp 1, fn 1 -> 2/3; class 1: fp 1 -> 0
        assert_abs_diff_eq!(m.macro_f1, 100.0 / 3.0, epsilon = 1e-9);
    }

    #[test]
    fn errors() {
        assert!(matches!(classification_metrics(&[], &[]), Err(Error::Empty)));
        assert!(matches!(
            classification_metrics(&[N], &[N, T]),
            Err(Error::LengthMismatch { .. })
        ));
    }
}
