//! Krippendorff's alpha over a raters x items matrix with missing values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMetric {
    Nominal,
    #[default]
    Ordinal,
    Interval,
}

/// `ratings[rater][item]`, `None` where a rater skipped an item.
///
/// Returns 1.0 when observed disagreement is zero, including the degenerate
/// case where every pairable value is identical.
pub fn krippendorff_alpha(ratings: &[Vec<Option<f64>>], metric: DistanceMetric) -> Result<f64> {
    if ratings.len() < 2 {
        return Err(Error::InsufficientPairableData(format!(
            "need at least 2 raters, got {}",
            ratings.len()
        )));
    }
    let n_items = ratings[0].len();
    if ratings.iter().any(|r| r.len() != n_items) {
        return Err(Error::precondition("every rater must cover the same items"));
    }
    if n_items < 2 {
        return Err(Error::InsufficientPairableData(format!(
            "need at least 2 items, got {n_items}"
        )));
    }
    if ratings.iter().flatten().flatten().any(|v| !v.is_finite()) {
        return Err(Error::precondition("ratings must be finite"));
    }

    let mut values: Vec<f64> = ratings.iter().flatten().flatten().copied().collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    let index_of = |v: f64| values.binary_search_by(|x| x.total_cmp(&v)).expect("value present");

    let k = values.len();
    let mut coincidence = vec![vec![0.0f64; k]; k];
    for item in 0..n_items {
        let unit: Vec<usize> = ratings.iter().filter_map(|r| r[item]).map(index_of).collect();
        let m = unit.len();
        if m < 2 {
            continue;
        }
        let w = 1.0 / (m - 1) as f64;
        for (a, &c) in unit.iter().enumerate() {
            for (b, &d) in unit.iter().enumerate() {
                if a != b {
                    coincidence[c][d] += w;
                }
            }
        }
    }
    let marginals: Vec<f64> = coincidence.iter().map(|row| row.iter().sum()).collect();
    let n: f64 = marginals.iter().sum();
    if n < 2.0 {
        return Err(Error::InsufficientPairableData(
            "no item has two or more ratings".into(),
        ));
    }

    let delta = |c: usize, d: usize| -> f64 {
        match metric {
            DistanceMetric::Nominal => f64::from(u8::from(c != d)),
            DistanceMetric::Interval => (values[c] - values[d]).powi(2),
            DistanceMetric::Ordinal => {
                let (lo, hi) = (c.min(d), c.max(d));
                let between: f64 = marginals[lo..=hi].iter().sum();
                (between - (marginals[lo] + marginals[hi]) / 2.0).powi(2)
            }
        }
    };

    let mut observed = 0.0;
    let mut expected = 0.0;
    for c in 0..k {
        for d in 0..k {
            let dist = delta(c, d);
            observed += coincidence[c][d] * dist;
            expected += marginals[c] * marginals[d] * dist;
        }
    }
    if observed == 0.0 {
        return Ok(1.0);
    }
    Ok(1.0 - (n - 1.0) * observed / expected)
}
