//! Training loops for the three bundle kinds.

use candle_core::{DType, Device, Tensor};
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::bundle::{resolve_backbone, BundleConfig, BundleKind, DecodingSettings, ModelBundle};
use super::losses::{self, tensor, LossWeights};
use super::vocab::{Vocab, BOS, EOS, SENTINEL};
use crate::corpus::{Explanation, Label};
use crate::error::{check_same_len, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schedule {
    Iterations(usize),
    Epochs(usize),
}

impl Schedule {
    pub fn total_steps(self, n_examples: usize, batch_size: usize) -> usize {
        match self {
            Schedule::Iterations(n) => n,
            Schedule::Epochs(e) => e * n_examples.div_ceil(batch_size.max(1)),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    #[default]
    AdamW,
}

/// Settings shared by every training stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimSettings {
    pub optimizer: OptimizerKind,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_vocab: usize,
}

impl Default for OptimSettings {
    fn default() -> Self {
        Self {
            optimizer: OptimizerKind::AdamW,
            weight_decay: 0.01,
            batch_size: 16,
            max_vocab: 32_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TeacherTrainConfig {
    pub backbone_id: String,
    pub learning_rate: f64,
    pub max_sequence_length: usize,
    pub iterations_or_epochs: Schedule,
    pub seed: u64,
    #[serde(flatten)]
    pub optim: OptimSettings,
}

impl Default for TeacherTrainConfig {
    fn default() -> Self {
        Self {
            backbone_id: "seq2seq-base".into(),
            learning_rate: 1e-5,
            max_sequence_length: 256,
            iterations_or_epochs: Schedule::Epochs(10),
            seed: 42,
            optim: OptimSettings::default(),
        }
    }
}

impl TeacherTrainConfig {
    pub fn validate(&self) -> Result<()> {
        check_common(self.learning_rate, self.max_sequence_length, &self.optim)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudentTrainConfig {
    pub backbone_id: String,
    /// Teacher bundle directory; resolved by the caller when absent.
    pub teacher_id: Option<String>,
    pub weights: LossWeights,
    pub kd_temperature: f64,
    pub learning_rate: f64,
    pub max_sequence_length: usize,
    pub iterations_or_epochs: Schedule,
    pub beam_size: usize,
    /// Decoder history window for explanation tokens.
    pub window: usize,
    pub max_explanation_len: usize,
    pub seed: u64,
    #[serde(flatten)]
    pub optim: OptimSettings,
}

impl Default for StudentTrainConfig {
    fn default() -> Self {
        Self {
            backbone_id: "seq2seq-base".into(),
            teacher_id: None,
            weights: LossWeights::default(),
            kd_temperature: 1.0,
            learning_rate: 1e-5,
            max_sequence_length: 256,
            iterations_or_epochs: Schedule::Epochs(10),
            beam_size: 4,
            window: 256,
            max_explanation_len: 64,
            seed: 42,
            optim: OptimSettings::default(),
        }
    }
}

impl StudentTrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        check_common(self.learning_rate, self.max_sequence_length, &self.optim)?;
        if !(self.kd_temperature > 0.0 && self.kd_temperature.is_finite()) {
            return Err(Error::precondition("kd_temperature must be > 0"));
        }
        if self.beam_size == 0 || self.window == 0 || self.max_explanation_len == 0 {
            return Err(Error::precondition(
                "beam_size, window and max_explanation_len must be >= 1",
            ));
        }
        Ok(())
    }
}

pub(crate) fn check_common(lr: f64, max_len: usize, optim: &OptimSettings) -> Result<()> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::precondition("learning_rate must be > 0"));
    }
    if max_len == 0 {
        return Err(Error::precondition("max_sequence_length must be >= 1"));
    }
    if optim.batch_size == 0 {
        return Err(Error::precondition("batch_size must be >= 1"));
    }
    Ok(())
}

/// One line of the per-step metrics log. Components that a stage does not
/// optimise are omitted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub l_cls: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub l_clm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub l_tf: Option<f64>,
    pub l_total: f64,
}

pub fn metrics_jsonl(metrics: &[StepMetrics]) -> Result<String> {
    let mut out = String::new();
    for m in metrics {
        out.push_str(&serde_json::to_string(m)?);
        out.push('\n');
    }
    Ok(out)
}

pub struct TrainOutcome {
    pub bundle: ModelBundle,
    pub metrics: Vec<StepMetrics>,
}

/// Shuffled mini-batch indices, reshuffled every epoch from one seeded stream.
pub(crate) struct Batcher {
    rng: ChaCha8Rng,
    order: Vec<usize>,
    pos: usize,
    batch_size: usize,
}

impl Batcher {
    pub(crate) fn new(n: usize, batch_size: usize, seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_ba7c),
            order: (0..n).collect(),
            pos: n,
            batch_size,
        }
    }

    pub(crate) fn next_batch(&mut self) -> Vec<usize> {
        if self.pos >= self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let batch = self.order[self.pos..end].to_vec();
        self.pos = end;
        batch
    }
}

/// Runs `steps` optimiser updates. `step_fn` returns the scalar loss to
/// minimise and the metrics to log for the given mini-batch.
pub(crate) fn run_loop<F>(
    bundle: &ModelBundle,
    n_examples: usize,
    steps: usize,
    lr: f64,
    optim: &OptimSettings,
    seed: u64,
    mut step_fn: F,
) -> Result<Vec<StepMetrics>>
where
    F: FnMut(usize, &[usize]) -> Result<(Tensor, StepMetrics)>,
{
    let params = ParamsAdamW {
        lr,
        weight_decay: optim.weight_decay,
        ..Default::default()
    };
    let mut opt = AdamW::new(bundle.store().vars(), params)?;
    let mut batcher = Batcher::new(n_examples, optim.batch_size, seed);
    let mut log = Vec::with_capacity(steps);
    for step in 0..steps {
        let idx = batcher.next_batch();
        let (loss, metrics) = step_fn(step, &idx)?;
        opt.backward_step(&loss)?;
        log::debug!("step {step}: total {:.6}", metrics.l_total);
        log.push(metrics);
    }
    Ok(log)
}

fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}

/// Builds a fresh or warm-started bundle. Without a warm-start vocabulary a
/// new one is built from `texts`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn init_bundle<'a>(
    kind: BundleKind,
    backbone_id: &str,
    seed: u64,
    max_sequence_length: usize,
    max_vocab: usize,
    texts: impl IntoIterator<Item = &'a str>,
    decoding: Option<DecodingSettings>,
    training: serde_json::Value,
) -> Result<ModelBundle> {
    let (arch, store, warm_vocab) = resolve_backbone(backbone_id, seed, max_sequence_length)?;
    let vocab = warm_vocab.unwrap_or_else(|| Vocab::build(texts, max_vocab));
    let config = BundleConfig {
        kind,
        backbone_id: backbone_id.to_owned(),
        arch,
        max_sequence_length,
        decoding,
        training,
    };
    ModelBundle::new(config, vocab, store)
}

/// Decoder inputs, targets and target mask for teacher-forced sequence
/// training. Each target already ends in end-of-sequence.
pub(crate) fn decoder_batch(targets: &[&Vec<u32>], dtype: DType) -> Result<(Tensor, Tensor, Tensor)> {
    let width = targets.iter().map(|t| t.len()).max().unwrap_or(0);
    let (mut input, mut gold, mut mask) = (Vec::new(), Vec::new(), Vec::new());
    for t in targets {
        for i in 0..width {
            input.push(if i == 0 { BOS } else { t.get(i - 1).copied().unwrap_or(0) });
            gold.push(t.get(i).copied().unwrap_or(0));
            mask.push(if i < t.len() { 1.0 } else { 0.0 });
        }
    }
    let shape = (targets.len(), width);
    Ok((
        Tensor::from_vec(input, shape, &Device::Cpu)?,
        Tensor::from_vec(gold, shape, &Device::Cpu)?,
        Tensor::from_vec(mask, shape, &Device::Cpu)?.to_dtype(dtype)?,
    ))
}

/// Target token ids for one text, truncated so that end-of-sequence fits.
pub(crate) fn target_ids(vocab: &Vocab, text: &str, max_len: usize) -> Result<Vec<u32>> {
    let mut ids = vocab.encode(text);
    if ids.is_empty() {
        return Err(Error::EmptyExplanation);
    }
    ids.truncate(max_len.saturating_sub(1).max(1));
    ids.push(EOS);
    Ok(ids)
}

/// Trains an encoder classifier on `(input, label)` pairs with cross-entropy.
pub fn train_teacher(inputs: &[String], labels: &[Label], config: &TeacherTrainConfig) -> Result<TrainOutcome> {
    check_same_len(inputs.len(), labels.len())?;
    if inputs.is_empty() {
        return Err(Error::precondition("teacher training set is empty"));
    }
    config.validate()?;
    let bundle = init_bundle(
        BundleKind::Teacher,
        &config.backbone_id,
        config.seed,
        config.max_sequence_length,
        config.optim.max_vocab,
        inputs.iter().map(String::as_str),
        None,
        serde_json::to_value(config)?,
    )?;
    let ids = inputs
        .iter()
        .map(|t| bundle.tokenize(t))
        .collect::<Result<Vec<_>>>()?;
    let y: Vec<u32> = labels.iter().map(|l| l.index() as u32).collect();
    let steps = config.iterations_or_epochs.total_steps(inputs.len(), config.optim.batch_size);
    let metrics = run_loop(
        &bundle,
        inputs.len(),
        steps,
        config.learning_rate,
        &config.optim,
        config.seed,
        |step, idx| {
            let seqs: Vec<Vec<u32>> = idx.iter().map(|&i| ids[i].clone()).collect();
            let labels: Vec<u32> = idx.iter().map(|&i| y[i]).collect();
            let batch = bundle.batch_ids(&seqs, None)?;
            let (logits, _) = bundle.classify_tensors(&batch)?;
            let loss = tensor::cls_loss(&logits.to_dtype(DType::F64)?, &labels)?;
            let l = scalar(&loss)?;
            Ok((
                loss,
                StepMetrics {
                    step,
                    l_cls: Some(l),
                    l_clm: None,
                    l_tf: None,
                    l_total: l,
                },
            ))
        },
    )?;
    Ok(TrainOutcome { bundle, metrics })
}

/// One supervised example for the explainable student.
#[derive(Clone, Debug, PartialEq)]
pub struct StudentExample {
    /// Target-group augmented input.
    pub input: String,
    pub label: Label,
    pub explanation: Explanation,
}

/// Teacher probabilities at `temperature`, in chunks.
pub fn teacher_probs(teacher: &ModelBundle, inputs: &[String], temperature: f64) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::with_capacity(inputs.len());
    for chunk in inputs.chunks(32) {
        let refs: Vec<&str> = chunk.iter().map(String::as_str).collect();
        for o in teacher.classify_batch(&refs)? {
            let p = losses::softmax(&[o.logits.0 / temperature, o.logits.1 / temperature]);
            out.push((p[0], p[1]));
        }
    }
    Ok(out)
}

/// Jointly trains the classification head and explanation decoder, with
/// distillation from the frozen `teacher`.
///
/// Toxic examples supervise the decoder with their explanation; non-toxic
/// examples with the single `[None]` token. Every step logs all components
/// and `l_total = lambda * (alpha * l_cls + beta * l_clm) + gamma * l_tf`.
pub fn train_toxcl(
    examples: &[StudentExample],
    teacher: &ModelBundle,
    config: &StudentTrainConfig,
) -> Result<TrainOutcome> {
    if examples.is_empty() {
        return Err(Error::precondition("student training set is empty"));
    }
    config.validate()?;
    if teacher.kind() != BundleKind::Teacher {
        return Err(Error::precondition(format!("expected a teacher bundle, got {}", teacher.kind())));
    }
    let teacher_sum = teacher.checksum()?;

    let inputs: Vec<String> = examples.iter().map(|e| e.input.clone()).collect();
    let texts = examples
        .iter()
        .flat_map(|e| std::iter::once(e.input.as_str()).chain(e.explanation.as_text()));
    let bundle = init_bundle(
        BundleKind::Student,
        &config.backbone_id,
        config.seed,
        config.max_sequence_length,
        config.optim.max_vocab,
        texts,
        Some(DecodingSettings {
            beam_size: config.beam_size,
            max_output_len: config.max_explanation_len,
            window: config.window,
        }),
        serde_json::to_value(config)?,
    )?;
    let max_target = config
        .max_explanation_len
        .min(bundle.config().arch.max_positions);
    let ids = inputs
        .iter()
        .map(|t| bundle.tokenize(t))
        .collect::<Result<Vec<_>>>()?;
    let targets = examples
        .iter()
        .map(|e| match (e.label, &e.explanation) {
            (Label::NonToxic, _) => Ok(vec![SENTINEL, EOS]),
            (Label::Toxic, Explanation::Text(t)) => target_ids(bundle.vocab(), t, max_target),
            (Label::Toxic, Explanation::None) => Err(Error::EmptyExplanation),
        })
        .collect::<Result<Vec<_>>>()?;
    let y: Vec<u32> = examples.iter().map(|e| e.label.index() as u32).collect();
    let t_probs = teacher_probs(teacher, &inputs, config.kd_temperature)?;

    let w = config.weights;
    let steps = config.iterations_or_epochs.total_steps(examples.len(), config.optim.batch_size);
    let metrics = run_loop(
        &bundle,
        examples.len(),
        steps,
        config.learning_rate,
        &config.optim,
        config.seed,
        |step, idx| {
            let seqs: Vec<Vec<u32>> = idx.iter().map(|&i| ids[i].clone()).collect();
            let labels: Vec<u32> = idx.iter().map(|&i| y[i]).collect();
            let batch = bundle.batch_ids(&seqs, None)?;
            let net = bundle.network();
            let hidden = net.encode(&batch.ids, &batch.mask)?;
            let pooled = super::network::Network::pool(&hidden, &batch.mask)?;
            let cls_logits = net.head_logits(&pooled)?.to_dtype(DType::F64)?;

            let tgt: Vec<&Vec<u32>> = idx.iter().map(|&i| &targets[i]).collect();
            let (dec_in, gold, tmask) = decoder_batch(&tgt, DType::F64)?;
            let dec_logits = net
                .decode(&dec_in, &hidden, &batch.mask, config.window)?
                .to_dtype(DType::F64)?;

            let tp: Vec<f64> = idx.iter().flat_map(|&i| [t_probs[i].0, t_probs[i].1]).collect();
            let tp = Tensor::from_vec(tp, (idx.len(), 2), &Device::Cpu)?;

            let l_cls = tensor::cls_loss(&cls_logits, &labels)?;
            let l_clm = tensor::clm_loss(&dec_logits, &gold, &tmask)?;
            let l_tf = tensor::kd_loss(&cls_logits, &tp, config.kd_temperature)?;
            let xcl = ((&l_cls * w.alpha)? + (&l_clm * w.beta)?)?;
            let total = ((xcl * w.lambda)? + (&l_tf * w.gamma)?)?;
            let (c, m, k) = (scalar(&l_cls)?, scalar(&l_clm)?, scalar(&l_tf)?);
            let metrics = StepMetrics {
                step,
                l_cls: Some(c),
                l_clm: Some(m),
                l_tf: Some(k),
                l_total: scalar(&total)?,
            };
            debug_assert!(
                (metrics.l_total - losses::final_loss(losses::joint_loss(c, m, &w), k, &w)).abs() < 1e-9
            );
            Ok((total, metrics))
        },
    )?;

    if teacher.checksum()? != teacher_sum {
        return Err(Error::TeacherMutated);
    }
    Ok(TrainOutcome { bundle, metrics })
}
