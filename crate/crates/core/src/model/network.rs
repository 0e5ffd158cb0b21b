//! Pre-LayerNorm transformer encoder-decoder with an optional pooled
//! classification head.

use candle_core::{DType, Device, Module, Tensor, D};
use candle_nn::{Embedding, Linear};
use serde::{Deserialize, Serialize};

use super::params::{Init, ParamStore};
use crate::error::{Error, Result};

const MASKED: f64 = -1e9;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub max_positions: usize,
}

impl ArchConfig {
    /// Built-in from-scratch architectures, addressed by backbone id.
    pub fn preset(name: &str) -> Option<Self> {
        let (d_model, n_heads, d_ff, layers) = match name {
            "seq2seq-tiny" => (64, 4, 128, 2),
            "seq2seq-small" => (256, 8, 1024, 4),
            "seq2seq-base" => (512, 8, 2048, 6),
            _ => return None,
        };
        Some(Self {
            d_model,
            n_heads,
            d_ff,
            encoder_layers: layers,
            decoder_layers: layers,
            max_positions: 256,
        })
    }

    fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.n_heads == 0 || !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::precondition(format!(
                "d_model {} must be a positive multiple of n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.max_positions == 0 {
            return Err(Error::precondition("max_positions must be >= 1"));
        }
        Ok(())
    }
}

/// Which parts of the network exist.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Components {
    pub decoder: bool,
    pub classifier_head: bool,
}

fn linear(store: &mut ParamStore, name: &str, d_in: usize, d_out: usize) -> Result<Linear> {
    let bound = 1.0 / (d_in as f64).sqrt();
    let w = store.get(&format!("{name}.weight"), &[d_out, d_in], Init::Uniform(bound))?;
    let b = store.get(&format!("{name}.bias"), &[d_out], Init::Uniform(bound))?;
    Ok(Linear::new(w, Some(b)))
}

struct LayerNorm {
    weight: Tensor,
    bias: Tensor,
}

impl LayerNorm {
    fn new(store: &mut ParamStore, name: &str, d: usize) -> Result<Self> {
        Ok(Self {
            weight: store.get(&format!("{name}.weight"), &[d], Init::Const(1.0))?,
            bias: store.get(&format!("{name}.bias"), &[d], Init::Const(0.0))?,
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mean = x.mean_keepdim(D::Minus1)?;
        let centered = x.broadcast_sub(&mean)?;
        let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
        let normed = centered.broadcast_div(&(var + 1e-5)?.sqrt()?)?;
        Ok(normed.broadcast_mul(&self.weight)?.broadcast_add(&self.bias)?)
    }
}

struct Attention {
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
    heads: usize,
    head_dim: usize,
}

impl Attention {
    fn new(store: &mut ParamStore, name: &str, arch: &ArchConfig) -> Result<Self> {
        let d = arch.d_model;
        Ok(Self {
            q: linear(store, &format!("{name}.q"), d, d)?,
            k: linear(store, &format!("{name}.k"), d, d)?,
            v: linear(store, &format!("{name}.v"), d, d)?,
            o: linear(store, &format!("{name}.o"), d, d)?,
            heads: arch.n_heads,
            head_dim: d / arch.n_heads,
        })
    }

    fn split_heads(&self, x: &Tensor) -> Result<Tensor> {
        let (b, t, _) = x.dims3()?;
        Ok(x.reshape((b, t, self.heads, self.head_dim))?
            .transpose(1, 2)?
            .contiguous()?)
    }

    /// `bias` is additive and broadcastable to `[B, H, Tq, Tk]`.
    fn forward(&self, query: &Tensor, memory: &Tensor, bias: &Tensor) -> Result<Tensor> {
        let (b, tq, d) = query.dims3()?;
        let q = self.split_heads(&self.q.forward(query)?)?;
        let k = self.split_heads(&self.k.forward(memory)?)?;
        let v = self.split_heads(&self.v.forward(memory)?)?;
        let scale = 1.0 / (self.head_dim as f64).sqrt();
        let scores = (q.matmul(&k.t()?.contiguous()?)? * scale)?.broadcast_add(bias)?;
        let weights = candle_nn::ops::softmax(&scores, D::Minus1)?;
        let ctx = weights.matmul(&v)?.transpose(1, 2)?.reshape((b, tq, d))?;
        Ok(self.o.forward(&ctx)?)
    }
}

struct FeedForward {
    up: Linear,
    down: Linear,
}

impl FeedForward {
    fn new(store: &mut ParamStore, name: &str, arch: &ArchConfig) -> Result<Self> {
        Ok(Self {
            up: linear(store, &format!("{name}.up"), arch.d_model, arch.d_ff)?,
            down: linear(store, &format!("{name}.down"), arch.d_ff, arch.d_model)?,
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.down.forward(&self.up.forward(x)?.gelu()?)?)
    }
}

struct EncoderLayer {
    ln_attn: LayerNorm,
    attn: Attention,
    ln_ff: LayerNorm,
    ff: FeedForward,
}

impl EncoderLayer {
    fn forward(&self, x: &Tensor, bias: &Tensor) -> Result<Tensor> {
        let h = self.ln_attn.forward(x)?;
        let x = (x + self.attn.forward(&h, &h, bias)?)?;
        let h = self.ln_ff.forward(&x)?;
        Ok((&x + self.ff.forward(&h)?)?)
    }
}

struct DecoderLayer {
    ln_self: LayerNorm,
    self_attn: Attention,
    ln_cross: LayerNorm,
    cross_attn: Attention,
    ln_ff: LayerNorm,
    ff: FeedForward,
}

impl DecoderLayer {
    fn forward(&self, x: &Tensor, self_bias: &Tensor, memory: &Tensor, cross_bias: &Tensor) -> Result<Tensor> {
        let h = self.ln_self.forward(x)?;
        let x = (x + self.self_attn.forward(&h, &h, self_bias)?)?;
        let h = self.ln_cross.forward(&x)?;
        let x = (&x + self.cross_attn.forward(&h, memory, cross_bias)?)?;
        let h = self.ln_ff.forward(&x)?;
        Ok((&x + self.ff.forward(&h)?)?)
    }
}

struct Decoder {
    layers: Vec<DecoderLayer>,
    ln_out: LayerNorm,
    lm_head: Linear,
}

pub struct Network {
    arch: ArchConfig,
    vocab_size: usize,
    dtype: DType,
    tok_emb: Embedding,
    pos_emb: Tensor,
    encoder: Vec<EncoderLayer>,
    enc_ln_out: LayerNorm,
    decoder: Option<Decoder>,
    head: Option<Linear>,
}

impl Network {
    pub fn new(
        arch: &ArchConfig,
        vocab_size: usize,
        components: Components,
        store: &mut ParamStore,
    ) -> Result<Self> {
        arch.validate()?;
        let d = arch.d_model;
        let tok = store.get("embed.tokens", &[vocab_size, d], Init::Normal(1.0))?;
        let pos_emb = store.get("embed.positions", &[arch.max_positions, d], Init::Normal(0.02))?;
        let encoder = (0..arch.encoder_layers)
            .map(|i| {
                let p = format!("encoder.{i}");
                Ok(EncoderLayer {
                    ln_attn: LayerNorm::new(store, &format!("{p}.ln_attn"), d)?,
                    attn: Attention::new(store, &format!("{p}.attn"), arch)?,
                    ln_ff: LayerNorm::new(store, &format!("{p}.ln_ff"), d)?,
                    ff: FeedForward::new(store, &format!("{p}.ff"), arch)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let enc_ln_out = LayerNorm::new(store, "encoder.ln_out", d)?;
        let decoder = if components.decoder {
            let layers = (0..arch.decoder_layers)
                .map(|i| {
                    let p = format!("decoder.{i}");
                    Ok(DecoderLayer {
                        ln_self: LayerNorm::new(store, &format!("{p}.ln_self"), d)?,
                        self_attn: Attention::new(store, &format!("{p}.self_attn"), arch)?,
                        ln_cross: LayerNorm::new(store, &format!("{p}.ln_cross"), d)?,
                        cross_attn: Attention::new(store, &format!("{p}.cross_attn"), arch)?,
                        ln_ff: LayerNorm::new(store, &format!("{p}.ln_ff"), d)?,
                        ff: FeedForward::new(store, &format!("{p}.ff"), arch)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Some(Decoder {
                layers,
                ln_out: LayerNorm::new(store, "decoder.ln_out", d)?,
                lm_head: linear(store, "decoder.lm_head", d, vocab_size)?,
            })
        } else {
            None
        };
        let head = if components.classifier_head {
            Some(linear(store, "classifier", d, 2)?)
        } else {
            None
        };
        Ok(Self {
            arch: arch.clone(),
            vocab_size,
            dtype: store.dtype(),
            tok_emb: Embedding::new(tok, d),
            pos_emb,
            encoder,
            enc_ln_out,
            decoder,
            head,
        })
    }

    pub fn arch(&self) -> &ArchConfig {
        &self.arch
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn has_decoder(&self) -> bool {
        self.decoder.is_some()
    }

    fn embed(&self, ids: &Tensor) -> Result<Tensor> {
        let (_, t) = ids.dims2()?;
        if t > self.arch.max_positions {
            return Err(Error::precondition(format!(
                "sequence of {t} tokens exceeds {} positions",
                self.arch.max_positions
            )));
        }
        let tok = self.tok_emb.forward(ids)?;
        Ok(tok.broadcast_add(&self.pos_emb.narrow(0, 0, t)?)?)
    }

    /// Additive key mask `[B, 1, 1, T]` from a `[B, T]` 0/1 mask.
    fn key_bias(mask: &Tensor) -> Result<Tensor> {
        let (b, t) = mask.dims2()?;
        Ok(((mask - 1.0)? * -MASKED)?.reshape((b, 1, 1, t))?)
    }

    /// Final encoder hidden states `[B, T, D]`. `mask` is `[B, T]` with 1 on
    /// real tokens and 0 on padding.
    pub fn encode(&self, ids: &Tensor, mask: &Tensor) -> Result<Tensor> {
        let bias = Self::key_bias(mask)?;
        let mut x = self.embed(ids)?;
        for layer in &self.encoder {
            x = layer.forward(&x, &bias)?;
        }
        self.enc_ln_out.forward(&x)
    }

    /// Mean of hidden states over unmasked positions, `[B, D]`.
    pub fn pool(hidden: &Tensor, mask: &Tensor) -> Result<Tensor> {
        let m = mask.unsqueeze(2)?;
        let summed = hidden.broadcast_mul(&m)?.sum(1)?;
        let counts = mask.sum_keepdim(1)?;
        Ok(summed.broadcast_div(&counts)?)
    }

    /// Two-way logits from pooled features.
    pub fn head_logits(&self, pooled: &Tensor) -> Result<Tensor> {
        let head = self
            .head
            .as_ref()
            .ok_or_else(|| Error::precondition("network has no classifier head"))?;
        Ok(head.forward(pooled)?)
    }

    pub fn head_params(&self) -> Option<(&Tensor, &Tensor)> {
        self.head.as_ref().map(|h| (h.weight(), h.bias().expect("head has bias")))
    }

    /// Causal self-attention restricted to the last `window` positions.
    fn causal_bias(&self, len: usize, window: usize) -> Result<Tensor> {
        let mut data = vec![MASKED; len * len];
        for i in 0..len {
            for j in i.saturating_sub(window - 1)..=i {
                data[i * len + j] = 0.0;
            }
        }
        Ok(Tensor::from_vec(data, (1, 1, len, len), &Device::Cpu)?.to_dtype(self.dtype)?)
    }

    /// Next-token logits `[B, S, V]` for decoder inputs `[B, S]`.
    pub fn decode(
        &self,
        dec_ids: &Tensor,
        memory: &Tensor,
        memory_mask: &Tensor,
        window: usize,
    ) -> Result<Tensor> {
        let decoder = self
            .decoder
            .as_ref()
            .ok_or_else(|| Error::precondition("network has no decoder"))?;
        if window == 0 {
            return Err(Error::precondition("decoder window must be >= 1"));
        }
        let (_, s) = dec_ids.dims2()?;
        let self_bias = self.causal_bias(s, window)?;
        let cross_bias = Self::key_bias(memory_mask)?;
        let mut x = self.embed(dec_ids)?;
        for layer in &decoder.layers {
            x = layer.forward(&x, &self_bias, memory, &cross_bias)?;
        }
        let x = decoder.ln_out.forward(&x)?;
        Ok(decoder.lm_head.forward(&x)?)
    }
}
