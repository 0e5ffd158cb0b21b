//! Training objectives.
//!
//! Scalar versions operate on plain probabilities and serve as the reference
//! for the tensor versions used during training. Every logarithm clamps its
//! argument to `[PROB_EPSILON, 1 - PROB_EPSILON]`.

use candle_core::{DType, Device, Tensor, D};
use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::error::{check_same_len, Error, Result};

pub const PROB_EPSILON: f64 = 1e-7;
const DISTRIBUTION_TOLERANCE: f64 = 1e-5;

fn clamped_ln(p: f64) -> f64 {
    p.clamp(PROB_EPSILON, 1.0 - PROB_EPSILON).ln()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    pub gamma: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            lambda: 1.0,
            gamma: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.alpha, self.beta, self.lambda, self.gamma];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::precondition(format!(
                "loss weights must be finite and non-negative: {self:?}"
            )));
        }
        if all.iter().all(|w| *w == 0.0) {
            return Err(Error::precondition("loss weights must not all be zero"));
        }
        Ok(())
    }
}

/// Token ids of one explanation and the decoder history window `k`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExplanationTokens {
    tokens: Vec<u32>,
    window: usize,
}

impl ExplanationTokens {
    pub fn new(tokens: Vec<u32>, window: usize) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::EmptyExplanation);
        }
        if window == 0 {
            return Err(Error::precondition("window must be >= 1"));
        }
        Ok(Self { tokens, window })
    }

    pub fn tokens(&self) -> &[u32] {
        &self.tokens
    }

    pub fn window(&self) -> usize {
        self.window
    }
}

fn check_distribution(p: (f64, f64)) -> Result<()> {
    let ok = p.0.is_finite()
        && p.1.is_finite()
        && p.0 >= 0.0
        && p.1 >= 0.0
        && (p.0 + p.1 - 1.0).abs() <= DISTRIBUTION_TOLERANCE;
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidDistribution(format!("({}, {})", p.0, p.1)))
    }
}

/// Binary cross-entropy averaged over the batch.
pub fn cls_loss(probs: &[(f64, f64)], labels: &[Label]) -> Result<f64> {
    check_same_len(probs.len(), labels.len())?;
    if probs.is_empty() {
        return Err(Error::Empty);
    }
    let total: f64 = probs
        .iter()
        .zip(labels)
        .map(|(p, y)| match y {
            Label::NonToxic => -clamped_ln(p.0),
            Label::Toxic => -clamped_ln(p.1),
        })
        .sum();
    Ok(total / probs.len() as f64)
}

/// Mean negative log-likelihood of the gold tokens, given the probability the
/// decoder assigned to each.
pub fn clm_loss_from_probs(gold_token_probs: &[f64]) -> Result<f64> {
    if gold_token_probs.is_empty() {
        return Err(Error::EmptyExplanation);
    }
    let total: f64 = gold_token_probs.iter().map(|p| -clamped_ln(*p)).sum();
    Ok(total / gold_token_probs.len() as f64)
}

/// `decoder_logits[i]` is the next-token distribution (as logits) produced
/// for position `i` of the explanation under its history window.
pub fn clm_loss(decoder_logits: &[Vec<f64>], explanation: &ExplanationTokens) -> Result<f64> {
    check_same_len(decoder_logits.len(), explanation.tokens.len())?;
    let probs = decoder_logits
        .iter()
        .zip(&explanation.tokens)
        .map(|(logits, &tok)| {
            let probs = softmax(logits);
            probs
                .get(tok as usize)
                .copied()
                .ok_or_else(|| Error::precondition(format!("token {tok} outside vocabulary")))
        })
        .collect::<Result<Vec<f64>>>()?;
    clm_loss_from_probs(&probs)
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / sum).collect()
}

/// `KL(student || teacher)` over the two classes.
pub fn kd_loss(student: (f64, f64), teacher: (f64, f64)) -> Result<f64> {
    check_distribution(student)?;
    check_distribution(teacher)?;
    let term = |s: f64, t: f64| {
        let s = s.clamp(PROB_EPSILON, 1.0 - PROB_EPSILON);
        s * (s.ln() - clamped_ln(t))
    };
    Ok((term(student.0, teacher.0) + term(student.1, teacher.1)).max(0.0))
}

pub fn joint_loss(l_cls: f64, l_clm: f64, w: &LossWeights) -> f64 {
    w.alpha * l_cls + w.beta * l_clm
}

pub fn final_loss(l_xcl: f64, l_tf: f64, w: &LossWeights) -> f64 {
    w.lambda * l_xcl + w.gamma * l_tf
}

/// Loss of a linear softmax head and its closed-form gradient.
#[derive(Clone, Debug)]
pub struct HeadGradient {
    pub loss: f64,
    /// `[2][D]`, same layout as the head weight.
    pub weight: Vec<Vec<f64>>,
    pub bias: [f64; 2],
}

/// Cross-entropy of `softmax(W x + b)` averaged over `features`, with the
/// gradient with respect to `W` and `b`. A clamped probability contributes no
/// gradient.
pub fn head_gradient(
    features: &[Vec<f64>],
    labels: &[Label],
    weight: &[Vec<f64>],
    bias: [f64; 2],
) -> Result<HeadGradient> {
    check_same_len(features.len(), labels.len())?;
    if features.is_empty() {
        return Err(Error::Empty);
    }
    let n = features.len() as f64;
    let d = weight[0].len();
    let mut grad_w = vec![vec![0.0; d]; 2];
    let mut grad_b = [0.0; 2];
    let mut loss = 0.0;
    for (x, y) in features.iter().zip(labels) {
        let z: Vec<f64> = (0..2)
            .map(|j| bias[j] + weight[j].iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>())
            .collect();
        let p = softmax(&z);
        let gold = y.index();
        loss -= clamped_ln(p[gold]);
        if p[gold] <= PROB_EPSILON || p[gold] >= 1.0 - PROB_EPSILON {
            continue;
        }
        for j in 0..2 {
            let dz = (p[j] - if j == gold { 1.0 } else { 0.0 }) / n;
            grad_b[j] += dz;
            for (g, xi) in grad_w[j].iter_mut().zip(x) {
                *g += dz * xi;
            }
        }
    }
    Ok(HeadGradient {
        loss: loss / n,
        weight: grad_w,
        bias: grad_b,
    })
}

/// Differentiable counterparts on batched tensors.
pub mod tensor {
    use super::*;

    fn clamped_log(p: &Tensor) -> Result<Tensor> {
        Ok(p.clamp(PROB_EPSILON, 1.0 - PROB_EPSILON)?.log()?)
    }

    fn one_hot(labels: &[u32], classes: usize, dtype: DType) -> Result<Tensor> {
        let mut data = vec![0f64; labels.len() * classes];
        for (i, &y) in labels.iter().enumerate() {
            data[i * classes + y as usize] = 1.0;
        }
        Ok(Tensor::from_vec(data, (labels.len(), classes), &Device::Cpu)?.to_dtype(dtype)?)
    }

    /// Class probabilities `[B, 2]` from head logits.
    pub fn class_probs(logits: &Tensor) -> Result<Tensor> {
        Ok(candle_nn::ops::softmax(logits, D::Minus1)?)
    }

    /// Scalar cross-entropy from head logits `[B, 2]`.
    pub fn cls_loss(logits: &Tensor, labels: &[u32]) -> Result<Tensor> {
        let (b, c) = logits.dims2()?;
        check_same_len(b, labels.len())?;
        let lp = clamped_log(&class_probs(logits)?)?;
        let picked = (lp * one_hot(labels, c, logits.dtype())?)?.sum_all()?;
        Ok((picked * (-1.0 / b as f64))?)
    }

    /// Masked mean token NLL. `logits` `[B, S, V]`, `targets` `[B, S]` (u32),
    /// `mask` `[B, S]` with 1 on supervised positions.
    pub fn clm_loss(logits: &Tensor, targets: &Tensor, mask: &Tensor) -> Result<Tensor> {
        let probs = candle_nn::ops::softmax(logits, D::Minus1)?;
        let gold = probs.gather(&targets.unsqueeze(2)?, 2)?.squeeze(2)?;
        let nll = clamped_log(&gold)?.neg()?;
        let count = mask.sum_all()?.to_dtype(DType::F64)?.to_scalar::<f64>()?;
        if count == 0.0 {
            return Err(Error::EmptyExplanation);
        }
        Ok(((nll * mask)?.sum_all()? / count)?)
    }

    /// Mean over the batch of `KL(student || teacher)`, where the student
    /// distribution comes from `student_logits` `[B, 2]` scaled by
    /// `temperature` and `teacher_probs` `[B, 2]` is constant.
    pub fn kd_loss(student_logits: &Tensor, teacher_probs: &Tensor, temperature: f64) -> Result<Tensor> {
        let (b, _) = student_logits.dims2()?;
        let s = candle_nn::ops::softmax(&(student_logits / temperature)?, D::Minus1)?
            .clamp(PROB_EPSILON, 1.0 - PROB_EPSILON)?;
        let diff = (s.log()? - clamped_log(teacher_probs)?)?;
        Ok(((s * diff)?.sum_all()? / b as f64)?)
    }
}
