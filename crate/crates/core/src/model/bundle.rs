//! A trained network together with its vocabulary and settings, stored as a
//! directory of `weights.safetensors`, `vocab.json` and `config.json`.

use std::fmt;
use std::path::{Path, PathBuf};

use candle_core::{DType, Device, Tensor, D};
use serde::{Deserialize, Serialize};

use super::beam::{beam_search, BeamConfig, Hypothesis};
use super::network::{ArchConfig, Components, Network};
use super::params::ParamStore;
use super::vocab::{Vocab, BOS, PAD, SENTINEL};
use crate::error::{Error, Result};

pub const WEIGHTS_FILE: &str = "weights.safetensors";
pub const VOCAB_FILE: &str = "vocab.json";
pub const CONFIG_FILE: &str = "config.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BundleKind {
    Tg,
    Teacher,
    Student,
}

impl BundleKind {
    pub fn components(self) -> Components {
        match self {
            BundleKind::Tg => Components {
                decoder: true,
                classifier_head: false,
            },
            BundleKind::Teacher => Components {
                decoder: false,
                classifier_head: true,
            },
            BundleKind::Student => Components {
                decoder: true,
                classifier_head: true,
            },
        }
    }
}

impl fmt::Display for BundleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BundleKind::Tg => "tg",
            BundleKind::Teacher => "teacher",
            BundleKind::Student => "student",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodingSettings {
    pub beam_size: usize,
    pub max_output_len: usize,
    /// Decoder history window.
    pub window: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BundleConfig {
    pub kind: BundleKind,
    pub backbone_id: String,
    pub arch: ArchConfig,
    pub max_sequence_length: usize,
    pub decoding: Option<DecodingSettings>,
    /// The full training configuration, verbatim.
    pub training: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierOutput {
    pub probs: (f64, f64),
    pub logits: (f64, f64),
    pub pooled: Vec<f64>,
}

/// Token ids `[B, T]` and a 0/1 mask `[B, T]`.
pub struct EncodedBatch {
    pub ids: Tensor,
    pub mask: Tensor,
}

pub struct ModelBundle {
    config: BundleConfig,
    vocab: Vocab,
    store: ParamStore,
    network: Network,
}

impl ModelBundle {
    pub fn new(config: BundleConfig, vocab: Vocab, mut store: ParamStore) -> Result<Self> {
        if config.max_sequence_length == 0 {
            return Err(Error::precondition("max_sequence_length must be >= 1"));
        }
        let network = Network::new(&config.arch, vocab.len(), config.kind.components(), &mut store)?;
        Ok(Self {
            config,
            vocab,
            store,
            network,
        })
    }

    pub fn load(dir: &Path, expected: BundleKind) -> Result<Self> {
        Self::load_as(dir, expected, DType::F32)
    }

    pub fn load_as(dir: &Path, expected: BundleKind, dtype: DType) -> Result<Self> {
        let config_path = dir.join(CONFIG_FILE);
        if !config_path.exists() {
            return Err(Error::CheckpointNotFound(dir.display().to_string()));
        }
        let raw = std::fs::read_to_string(&config_path).map_err(|e| Error::io(&config_path, e))?;
        let config: BundleConfig = serde_json::from_str(&raw)?;
        if config.kind != expected {
            return Err(Error::WrongBundleKind {
                path: dir.to_owned(),
                expected: expected.to_string(),
                found: config.kind.to_string(),
            });
        }
        let vocab = Vocab::load(&dir.join(VOCAB_FILE))?;
        let store = ParamStore::from_file(&dir.join(WEIGHTS_FILE), dtype)?;
        Self::new(config, vocab, store)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.store.save(&dir.join(WEIGHTS_FILE))?;
        self.vocab.save(&dir.join(VOCAB_FILE))?;
        let config_path = dir.join(CONFIG_FILE);
        let json = serde_json::to_string_pretty(&self.config)?;
        std::fs::write(&config_path, json).map_err(|e| Error::io(&config_path, e))
    }

    pub fn config(&self) -> &BundleConfig {
        &self.config
    }

    pub fn kind(&self) -> BundleKind {
        self.config.kind
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn checksum(&self) -> Result<String> {
        self.store.checksum()
    }

    /// Token ids of `text`, truncated to the input length limit.
    pub fn tokenize(&self, text: &str) -> Result<Vec<u32>> {
        let mut ids = self.vocab.encode(text);
        if ids.is_empty() {
            return Err(Error::EmptyAfterTokenization);
        }
        ids.truncate(self.config.max_sequence_length.min(self.config.arch.max_positions));
        Ok(ids)
    }

    /// Right-pads token sequences to `pad_to` (or the longest sequence).
    pub fn batch_ids(&self, seqs: &[Vec<u32>], pad_to: Option<usize>) -> Result<EncodedBatch> {
        let width = seqs.iter().map(Vec::len).max().unwrap_or(0).max(pad_to.unwrap_or(0));
        let mut ids = Vec::with_capacity(seqs.len() * width);
        let mut mask = Vec::with_capacity(seqs.len() * width);
        for s in seqs {
            ids.extend(s.iter().copied().chain(std::iter::repeat_n(PAD, width - s.len())));
            mask.extend((0..width).map(|i| if i < s.len() { 1.0 } else { 0.0 }));
        }
        let shape = (seqs.len(), width);
        Ok(EncodedBatch {
            ids: Tensor::from_vec(ids, shape, &Device::Cpu)?,
            mask: Tensor::from_vec(mask, shape, &Device::Cpu)?.to_dtype(self.network.dtype())?,
        })
    }

    pub fn encode_texts(&self, texts: &[&str], pad_to: Option<usize>) -> Result<EncodedBatch> {
        let seqs = texts
            .iter()
            .map(|t| self.tokenize(t))
            .collect::<Result<Vec<_>>>()?;
        self.batch_ids(&seqs, pad_to)
    }

    /// Head logits `[B, 2]` and pooled features `[B, D]`.
    pub fn classify_tensors(&self, batch: &EncodedBatch) -> Result<(Tensor, Tensor)> {
        let hidden = self.network.encode(&batch.ids, &batch.mask)?;
        let pooled = Network::pool(&hidden, &batch.mask)?;
        Ok((self.network.head_logits(&pooled)?, pooled))
    }

    pub fn classify_batch(&self, texts: &[&str]) -> Result<Vec<ClassifierOutput>> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let batch = self.encode_texts(texts, None)?;
        let (logits, pooled) = self.classify_tensors(&batch)?;
        let probs = candle_nn::ops::softmax(&logits.to_dtype(DType::F64)?, D::Minus1)?.to_vec2::<f64>()?;
        let logits = logits.to_dtype(DType::F64)?.to_vec2::<f64>()?;
        let pooled = pooled.to_dtype(DType::F64)?.to_vec2::<f64>()?;
        Ok(probs
            .into_iter()
            .zip(logits)
            .zip(pooled)
            .map(|((p, z), pooled)| ClassifierOutput {
                probs: (p[0], p[1]),
                logits: (z[0], z[1]),
                pooled,
            })
            .collect())
    }

    pub fn classify(&self, text: &str) -> Result<ClassifierOutput> {
        Ok(self.classify_batch(&[text])?.remove(0))
    }

    fn decoding(&self) -> Result<&DecodingSettings> {
        self.config
            .decoding
            .as_ref()
            .ok_or_else(|| Error::precondition(format!("{} bundle has no decoder", self.kind())))
    }

    /// Beam-search decoding of `text`; hypotheses best first. When
    /// `forbid_sentinel` is set the `[None]` token is never generated.
    pub fn generate(&self, text: &str, forbid_sentinel: bool) -> Result<Vec<Hypothesis>> {
        let settings = self.decoding()?;
        let batch = self.encode_texts(&[text], None)?;
        let memory = self.network.encode(&batch.ids, &batch.mask)?;
        let max_len = settings
            .max_output_len
            .min(self.config.arch.max_positions.saturating_sub(1))
            .max(1);
        let cfg = BeamConfig::new(settings.beam_size, max_len);
        let mut banned = vec![PAD, BOS];
        if forbid_sentinel {
            banned.push(SENTINEL);
        }
        beam_search(&cfg, &banned, |prefixes| {
            let n = prefixes.len();
            let dec: Vec<Vec<u32>> = prefixes
                .iter()
                .map(|p| std::iter::once(BOS).chain(p.iter().copied()).collect())
                .collect();
            let dec = self.batch_ids(&dec, None)?;
            let (_, t, d) = memory.dims3()?;
            let mem = memory.broadcast_as((n, t, d))?.contiguous()?;
            let mem_mask = batch.mask.broadcast_as((n, t))?.contiguous()?;
            let logits = self.network.decode(&dec.ids, &mem, &mem_mask, settings.window)?;
            let s = logits.dim(1)?;
            let last = logits.narrow(1, s - 1, 1)?.squeeze(1)?.to_dtype(DType::F64)?;
            Ok(candle_nn::ops::log_softmax(&last, D::Minus1)?.to_vec2::<f64>()?)
        })
    }

    pub fn decode_tokens(&self, ids: &[u32]) -> String {
        self.vocab.decode(ids)
    }
}

/// Resolves `backbone_id` into parameters: a built-in architecture name gives
/// a fresh seeded initialisation, a bundle directory gives its weights (and
/// vocabulary) as a warm start.
pub fn resolve_backbone(
    backbone_id: &str,
    seed: u64,
    max_sequence_length: usize,
) -> Result<(ArchConfig, ParamStore, Option<Vocab>)> {
    if let Some(mut arch) = ArchConfig::preset(backbone_id) {
        arch.max_positions = max_sequence_length.max(2);
        return Ok((arch, ParamStore::fresh(seed, DType::F32), None));
    }
    let dir = PathBuf::from(backbone_id);
    let config_path = dir.join(CONFIG_FILE);
    if !config_path.exists() {
        return Err(Error::CheckpointNotFound(backbone_id.to_owned()));
    }
    let raw = std::fs::read_to_string(&config_path).map_err(|e| Error::io(&config_path, e))?;
    let config: BundleConfig = serde_json::from_str(&raw)?;
    let vocab = Vocab::load(&dir.join(VOCAB_FILE))?;
    let store = ParamStore::warm_start(&dir.join(WEIGHTS_FILE), seed, DType::F32)?;
    Ok((config.arch, store, Some(vocab)))
}
