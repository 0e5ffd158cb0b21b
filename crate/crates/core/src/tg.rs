//! Target-group generation and the target-augmented input template.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::Instance;
use crate::error::{check_same_len, Error, Result};
use crate::metrics::{multilabel_micro_f1, rouge_l};
use crate::model::bundle::{BundleKind, DecodingSettings, ModelBundle};
use crate::model::losses::tensor;
use crate::model::train::{
    check_common, decoder_batch, init_bundle, run_loop, target_ids, OptimSettings, StepMetrics,
    TrainOutcome,
};
use crate::text;

pub const GROUP_DELIMITER: &str = ", ";
/// Target string for posts without any target group.
pub const NO_TARGET: &str = "none";

/// Normalized, lowercased, sorted and deduplicated group names.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct TargetGroupSet(BTreeSet<String>);

impl<S: AsRef<str>> FromIterator<S> for TargetGroupSet {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        Self(
            iter.into_iter()
                .map(|g| text::dedup_key(g.as_ref()))
                .filter(|g| !g.is_empty())
                .collect(),
        )
    }
}

impl From<Vec<String>> for TargetGroupSet {
    fn from(v: Vec<String>) -> Self {
        v.into_iter().collect()
    }
}

impl From<TargetGroupSet> for Vec<String> {
    fn from(s: TargetGroupSet) -> Self {
        s.0.into_iter().collect()
    }
}

impl TargetGroupSet {
    /// Splits a generated target string on commas. The literal `none`
    /// stands for the empty set.
    pub fn parse(raw: &str) -> Self {
        let set: TargetGroupSet = raw.split(',').collect();
        if set.0.len() == 1 && set.0.contains(NO_TARGET) {
            return Self::default();
        }
        set
    }

    pub fn groups(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }

    pub fn as_set(&self) -> &BTreeSet<String> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Groups in ascending order joined by `", "`; `"none"` for the empty set.
pub fn build_target_label(groups: &TargetGroupSet) -> String {
    if groups.is_empty() {
        return NO_TARGET.to_owned();
    }
    groups.groups().collect::<Vec<_>>().join(GROUP_DELIMITER)
}

/// `Target:{target} Post:{post}`.
pub fn format_input(target: &str, post: &str) -> Result<String> {
    if post.trim().is_empty() {
        return Err(Error::EmptyPost);
    }
    Ok(format!("Target:{target} Post:{post}"))
}

/// Inverse of [`format_input`], splitting at the first `" Post:"`. Exact only
/// when the target string itself does not contain `" Post:"`.
pub fn split_input(input: &str) -> Option<(&str, &str)> {
    let rest = input.strip_prefix("Target:")?;
    rest.split_once(" Post:")
}

/// Removes generator-training instances whose post also occurs downstream,
/// comparing case-folded normalized text.
pub fn dedup_overlap(tg_corpus: Vec<Instance>, downstream: &[Instance]) -> (Vec<Instance>, usize) {
    let seen: HashSet<String> = downstream.iter().map(|i| text::dedup_key(i.post())).collect();
    let before = tg_corpus.len();
    let cleaned: Vec<Instance> = tg_corpus
        .into_iter()
        .filter(|i| !seen.contains(&text::dedup_key(i.post())))
        .collect();
    let removed = before - cleaned.len();
    (cleaned, removed)
}

/// `(post, target label)` pairs from instances with annotated groups.
pub fn supervision_pairs(instances: &[Instance]) -> Vec<(String, String)> {
    instances
        .iter()
        .filter_map(|i| {
            let groups: TargetGroupSet = i.annotated_groups()?.iter().collect();
            Some((i.post().to_owned(), build_target_label(&groups)))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TgTrainConfig {
    pub backbone_id: String,
    pub learning_rate: f64,
    pub max_sequence_length: usize,
    pub iterations: usize,
    pub beam_size: usize,
    pub max_target_len: usize,
    pub seed: u64,
    #[serde(flatten)]
    pub optim: OptimSettings,
}

impl Default for TgTrainConfig {
    fn default() -> Self {
        Self {
            backbone_id: "seq2seq-base".into(),
            learning_rate: 1e-5,
            max_sequence_length: 256,
            iterations: 20_000,
            beam_size: 4,
            max_target_len: 32,
            seed: 42,
            optim: OptimSettings::default(),
        }
    }
}

impl TgTrainConfig {
    pub fn validate(&self) -> Result<()> {
        check_common(self.learning_rate, self.max_sequence_length, &self.optim)?;
        if self.beam_size == 0 || self.max_target_len == 0 {
            return Err(Error::precondition("beam_size and max_target_len must be >= 1"));
        }
        Ok(())
    }
}

/// Trains a sequence-to-sequence generator on `(post, target label)` pairs.
pub fn train_tg(train: &[(String, String)], config: &TgTrainConfig) -> Result<TrainOutcome> {
    if train.is_empty() {
        return Err(Error::precondition("target-group training set is empty"));
    }
    config.validate()?;
    let texts = train.iter().flat_map(|(p, t)| [p.as_str(), t.as_str()]);
    let bundle = init_bundle(
        BundleKind::Tg,
        &config.backbone_id,
        config.seed,
        config.max_sequence_length,
        config.optim.max_vocab,
        texts,
        Some(DecodingSettings {
            beam_size: config.beam_size,
            max_output_len: config.max_target_len,
            window: config.max_sequence_length,
        }),
        serde_json::to_value(config)?,
    )?;
    let max_target = config.max_target_len.min(bundle.config().arch.max_positions);
    let inputs = train
        .iter()
        .map(|(p, _)| bundle.tokenize(p))
        .collect::<Result<Vec<_>>>()?;
    let targets = train
        .iter()
        .map(|(_, t)| target_ids(bundle.vocab(), t, max_target))
        .collect::<Result<Vec<_>>>()?;
    let window = config.max_sequence_length;
    let metrics = run_loop(
        &bundle,
        train.len(),
        config.iterations,
        config.learning_rate,
        &config.optim,
        config.seed,
        |step, idx| {
            let seqs: Vec<Vec<u32>> = idx.iter().map(|&i| inputs[i].clone()).collect();
            let batch = bundle.batch_ids(&seqs, None)?;
            let tgt: Vec<&Vec<u32>> = idx.iter().map(|&i| &targets[i]).collect();
            let (dec_in, gold, mask) = decoder_batch(&tgt, candle_core::DType::F64)?;
            let net = bundle.network();
            let memory = net.encode(&batch.ids, &batch.mask)?;
            let logits = net
                .decode(&dec_in, &memory, &batch.mask, window)?
                .to_dtype(candle_core::DType::F64)?;
            let loss = tensor::clm_loss(&logits, &gold, &mask)?;
            let l = loss.to_scalar::<f64>()?;
            Ok((
                loss,
                StepMetrics {
                    step,
                    l_cls: None,
                    l_clm: Some(l),
                    l_tf: None,
                    l_total: l,
                },
            ))
        },
    )?;
    Ok(TrainOutcome { bundle, metrics })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedTargets {
    pub raw: String,
    pub parsed: TargetGroupSet,
}

impl GeneratedTargets {
    /// The target string used in the input template.
    pub fn target_string(&self) -> String {
        build_target_label(&self.parsed)
    }
}

/// Beam-decodes the target groups of `post`. An empty decode yields an
/// empty raw string and the empty set.
pub fn generate_targets(bundle: &ModelBundle, post: &str) -> Result<GeneratedTargets> {
    if bundle.kind() != BundleKind::Tg {
        return Err(Error::precondition(format!("expected a tg bundle, got {}", bundle.kind())));
    }
    let hyps = bundle.generate(post, false)?;
    let raw = hyps
        .first()
        .map(|h| bundle.decode_tokens(&h.tokens))
        .unwrap_or_default();
    Ok(GeneratedTargets {
        parsed: TargetGroupSet::parse(&raw),
        raw,
    })
}

/// Micro F1 over group labels and ROUGE-L over raw strings, both x100.
pub fn eval_tg(
    refs: &[TargetGroupSet],
    hyps: &[TargetGroupSet],
    raw_refs: &[String],
    raw_hyps: &[String],
) -> Result<(f64, f64)> {
    check_same_len(refs.len(), hyps.len())?;
    check_same_len(raw_refs.len(), raw_hyps.len())?;
    check_same_len(refs.len(), raw_refs.len())?;
    if refs.is_empty() {
        return Err(Error::Empty);
    }
    let r: Vec<BTreeSet<String>> = refs.iter().map(|s| s.0.clone()).collect();
    let h: Vec<BTreeSet<String>> = hyps.iter().map(|s| s.0.clone()).collect();
    let f1 = multilabel_micro_f1(&r, &h)?;
    let rl = raw_refs
        .iter()
        .zip(raw_hyps)
        .map(|(r, h)| rouge_l(std::slice::from_ref(r), h))
        .sum::<f64>()
        / raw_refs.len() as f64;
    Ok((f1, rl))
}
