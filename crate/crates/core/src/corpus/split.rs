use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{CorpusSplit, Instance, Label, SplitName};
use crate::error::{Error, Result};

/// Stratified hold-out split: `floor(fraction * n_class)` instances of each
/// label go to the test split. Both outputs keep the input order.
pub fn make_ihc_test_split(
    instances: &[Instance],
    fraction: f64,
    seed: u64,
) -> Result<(CorpusSplit, CorpusSplit)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::precondition(format!(
            "split fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_test = vec![false; instances.len()];
    for label in [Label::NonToxic, Label::Toxic] {
        let mut idx: Vec<usize> = instances
            .iter()
            .enumerate()
            .filter(|(_, inst)| inst.label() == label)
            .map(|(i, _)| i)
            .collect();
        if idx.is_empty() {
            return Err(Error::EmptyClass(label));
        }
        let take = (fraction * idx.len() as f64).floor() as usize;
        idx.shuffle(&mut rng);
        for &i in &idx[..take] {
            in_test[i] = true;
        }
    }
    let (test, train): (Vec<_>, Vec<_>) = instances
        .iter()
        .cloned()
        .zip(in_test)
        .partition(|(_, t)| *t);
    let strip = |v: Vec<(Instance, bool)>| v.into_iter().map(|(i, _)| i).collect::<Vec<_>>();
    Ok((
        CorpusSplit::new(SplitName::Train, strip(train))?,
        CorpusSplit::new(SplitName::Test, strip(test))?,
    ))
}
