//! Finite-difference check of the classification head gradient.

use candle_core::{DType, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::bundle::{BundleConfig, BundleKind, ModelBundle};
use super::losses::{head_gradient, tensor};
use super::network::{ArchConfig, Network};
use super::params::ParamStore;
use super::vocab::Vocab;
use crate::corpus::Label;
use crate::error::{Error, Result};

const TEXTS: [&str; 4] = [
    "Target:women Post:women belong in the kitchen",
    "Target:none Post:the weather is nice",
    "Target:jews Post:they control the banks",
    "Target:none Post:we planted tomatoes today",
];
const LABELS: [Label; 4] = [Label::Toxic, Label::NonToxic, Label::Toxic, Label::NonToxic];

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub directions: usize,
    /// Worst relative error of the closed-form gradient.
    pub closed_form: f64,
    /// Worst relative error of the autograd gradient.
    pub autograd: f64,
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

/// Compares directional derivatives of the head loss along `directions`
/// random directions with central differences of step `h`, on a fresh
/// double-precision tiny network.
pub fn head_gradient_check(seed: u64, directions: usize, h: f64) -> Result<GradCheckReport> {
    let mut arch = ArchConfig::preset("seq2seq-tiny").expect("preset exists");
    arch.max_positions = 32;
    let config = BundleConfig {
        kind: BundleKind::Teacher,
        backbone_id: "seq2seq-tiny".into(),
        arch,
        max_sequence_length: 32,
        decoding: None,
        training: serde_json::Value::Null,
    };
    let bundle = ModelBundle::new(config, Vocab::build(TEXTS, 1000), ParamStore::fresh(seed, DType::F64))?;
    let batch = bundle.encode_texts(&TEXTS, None)?;
    let hidden = bundle.network().encode(&batch.ids, &batch.mask)?;
    let pooled = Network::pool(&hidden, &batch.mask)?.detach();
    let labels: Vec<u32> = LABELS.iter().map(|l| l.index() as u32).collect();

    let w_var = bundle.store().var("classifier.weight").ok_or(Error::Empty)?;
    let b_var = bundle.store().var("classifier.bias").ok_or(Error::Empty)?;
    let w0 = w_var.as_tensor().to_vec2::<f64>()?;
    let b0 = b_var.as_tensor().to_vec1::<f64>()?;
    let loss_at = |w: &[Vec<f64>], b: &[f64]| -> Result<f64> {
        w_var.set(&Tensor::new(w.to_vec(), w_var.device())?)?;
        b_var.set(&Tensor::new(b, b_var.device())?)?;
        let logits = bundle.network().head_logits(&pooled)?;
        Ok(tensor::cls_loss(&logits, &labels)?.to_scalar::<f64>()?)
    };

    let features = pooled.to_vec2::<f64>()?;
    let closed = head_gradient(&features, &LABELS, &w0, [b0[0], b0[1]])?;

    loss_at(&w0, &b0)?;
    let loss = tensor::cls_loss(&bundle.network().head_logits(&pooled)?, &labels)?;
    let grads = loss.backward()?;
    let auto_w = grads.get(w_var.as_tensor()).ok_or(Error::Empty)?.to_vec2::<f64>()?;
    let auto_b = grads.get(b_var.as_tensor()).ok_or(Error::Empty)?.to_vec1::<f64>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let d = w0[0].len();
    let mut report = GradCheckReport {
        directions,
        closed_form: 0.0,
        autograd: 0.0,
    };
    for _ in 0..directions {
        let mut vw: Vec<Vec<f64>> = (0..2).map(|_| (0..d).map(|_| StandardNormal.sample(&mut rng)).collect()).collect();
        let mut vb: Vec<f64> = (0..2).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = vw.iter().flatten().chain(&vb).map(|x| x * x).sum::<f64>().sqrt();
        vw.iter_mut().flatten().chain(vb.iter_mut()).for_each(|x| *x /= norm);

        let shift = |sign: f64| {
            let w: Vec<Vec<f64>> = w0
                .iter()
                .zip(&vw)
                .map(|(r, v)| r.iter().zip(v).map(|(a, b)| a + sign * h * b).collect())
                .collect();
            let b: Vec<f64> = b0.iter().zip(&vb).map(|(a, v)| a + sign * h * v).collect();
            (w, b)
        };
        let (wp, bp) = shift(1.0);
        let (wm, bm) = shift(-1.0);
        let fd = (loss_at(&wp, &bp)? - loss_at(&wm, &bm)?) / (2.0 * h);

        let dot = |gw: &[Vec<f64>], gb: &[f64]| {
            gw.iter().flatten().zip(vw.iter().flatten()).map(|(g, v)| g * v).sum::<f64>()
                + gb.iter().zip(&vb).map(|(g, v)| g * v).sum::<f64>()
        };
        report.closed_form = report.closed_form.max(rel_err(dot(&closed.weight, &closed.bias), fd));
        report.autograd = report.autograd.max(rel_err(dot(&auto_w, &auto_b), fd));
    }
    loss_at(&w0, &b0)?;
    Ok(report)
}
