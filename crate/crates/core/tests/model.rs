use candle_core::DType;
use toxcl_core::corpus::Label;
use toxcl_core::model::bundle::{BundleConfig, BundleKind, ModelBundle};
use toxcl_core::model::gradcheck::head_gradient_check;
use toxcl_core::model::losses::{final_loss, joint_loss};
use toxcl_core::model::network::{ArchConfig, Network};
use toxcl_core::model::params::ParamStore;
use toxcl_core::model::train::{train_teacher, train_toxcl, Schedule, StudentExample};
use toxcl_core::model::vocab::Vocab;
use toxcl_core::tg::{self, TgTrainConfig};
use toxcl_core::{toy, Error};

fn tiny_bundle(kind: BundleKind, seed: u64) -> ModelBundle {
    let mut arch = ArchConfig::preset(toy::TINY_BACKBONE).unwrap();
    arch.max_positions = 64;
    let config = BundleConfig {
        kind,
        backbone_id: toy::TINY_BACKBONE.into(),
        arch,
        max_sequence_length: 64,
        decoding: None,
        training: serde_json::Value::Null,
    };
    let vocab = Vocab::build(toy::corpus().iter().map(|i| i.post()), 1000);
    ModelBundle::new(config, vocab, ParamStore::fresh(seed, DType::F32)).unwrap()
}

#[test]
fn probabilities_sum_to_one() {
    let b = tiny_bundle(BundleKind::Teacher, 1);
    for inst in toy::corpus() {
        let out = b.classify(inst.post()).unwrap();
        assert!((out.probs.0 + out.probs.1 - 1.0).abs() < 1e-6);
        assert!((0.0..=1.0).contains(&out.probs.0));
    }
}

#[test]
fn padding_does_not_change_output() {
    let b = tiny_bundle(BundleKind::Student, 2);
    let text = "muslims keep marrying their cousins";
    let short = b.encode_texts(&[text], None).unwrap();
    let long = b.encode_texts(&[text], Some(40)).unwrap();
    assert_eq!(long.ids.dims(), &[1, 40]);
    let (ls, _) = b.classify_tensors(&short).unwrap();
    let (ll, _) = b.classify_tensors(&long).unwrap();
    let ps = candle_nn::ops::softmax_last_dim(&ls).unwrap().to_vec2::<f32>().unwrap();
    let pl = candle_nn::ops::softmax_last_dim(&ll).unwrap().to_vec2::<f32>().unwrap();
    for (a, b) in ps[0].iter().zip(&pl[0]) {
        assert!((a - b).abs() < 1e-5, "{a} vs {b}");
    }

    // Same text batched next to a longer one is padded implicitly.
    let batched = b.classify_batch(&[text, "a much longer post that forces padding on the first row of the batch"]).unwrap();
    let single = b.classify(text).unwrap();
    assert!((batched[0].probs.1 - single.probs.1).abs() < 1e-5);
}

#[test]
fn single_token_pools_to_its_hidden_state() {
    let b = tiny_bundle(BundleKind::Teacher, 3);
    let batch = b.encode_texts(&["women"], None).unwrap();
    let hidden = b.network().encode(&batch.ids, &batch.mask).unwrap();
    let pooled = Network::pool(&hidden, &batch.mask).unwrap();
    let h = hidden.squeeze(0).unwrap().to_vec2::<f32>().unwrap();
    assert_eq!(pooled.to_vec2::<f32>().unwrap()[0], h[0]);
}

#[test]
fn empty_input_is_rejected() {
    let b = tiny_bundle(BundleKind::Teacher, 4);
    assert!(matches!(b.classify("   "), Err(Error::EmptyAfterTokenization)));
}

#[test]
fn head_gradient_matches_finite_differences() {
    let report = head_gradient_check(11, 20, 1e-4).unwrap();
    assert!(report.closed_form < 1e-4, "{report:?}");
    assert!(report.autograd < 1e-4, "{report:?}");
}

fn tg_pairs() -> Vec<(String, String)> {
    let (sup, _) = tg::dedup_overlap(toy::tg_supervision(), &toy::corpus());
    tg::supervision_pairs(&sup).into_iter().take(16).collect()
}

#[test]
fn tg_training_reduces_loss_and_reloads() {
    let cfg = TgTrainConfig {
        iterations: 200,
        ..toy::tg_config()
    };
    let out = tg::train_tg(&tg_pairs(), &cfg).unwrap();
    let first = out.metrics[0].l_total;
    let last = out.metrics.last().unwrap().l_total;
    assert!(last < first, "{first} -> {last}");

    let dir = tempfile::tempdir().unwrap();
    out.bundle.save(dir.path()).unwrap();
    let back = ModelBundle::load(dir.path(), BundleKind::Tg).unwrap();
    let probe = "people keep talking about women online";
    assert_eq!(
        tg::generate_targets(&out.bundle, probe).unwrap(),
        tg::generate_targets(&back, probe).unwrap()
    );
    assert_eq!(out.bundle.checksum().unwrap(), back.checksum().unwrap());
    let saved: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("config.json")).unwrap()).unwrap();
    assert_eq!(saved["training"]["iterations"], 200);
    assert_eq!(saved["training"]["beam_size"], 4);

    assert!(matches!(
        ModelBundle::load(dir.path(), BundleKind::Teacher),
        Err(Error::WrongBundleKind { .. })
    ));
}

#[test]
fn unknown_backbone_is_reported() {
    let cfg = TgTrainConfig {
        backbone_id: "no-such-model".into(),
        ..toy::tg_config()
    };
    assert!(matches!(tg::train_tg(&tg_pairs(), &cfg), Err(Error::CheckpointNotFound(_))));
}

fn toy_inputs() -> (Vec<String>, Vec<Label>) {
    let corpus = toy::corpus();
    let inputs = corpus
        .iter()
        .map(|i| tg::format_input("none", i.post()).unwrap())
        .collect();
    (inputs, corpus.iter().map(|i| i.label()).collect())
}

#[test]
fn teacher_training_is_deterministic() {
    let (inputs, labels) = toy_inputs();
    let mut cfg = toy::teacher_config();
    cfg.iterations_or_epochs = Schedule::Iterations(10);
    let a = train_teacher(&inputs, &labels, &cfg).unwrap();
    let b = train_teacher(&inputs, &labels, &cfg).unwrap();
    let la: Vec<u64> = a.metrics.iter().map(|m| m.l_total.to_bits()).collect();
    let lb: Vec<u64> = b.metrics.iter().map(|m| m.l_total.to_bits()).collect();
    assert_eq!(la.len(), 10);
    assert_eq!(la, lb);
    assert_eq!(a.bundle.checksum().unwrap(), b.bundle.checksum().unwrap());
}

#[test]
fn student_logs_consistent_components() {
    let (inputs, labels) = toy_inputs();
    let mut tcfg = toy::teacher_config();
    tcfg.iterations_or_epochs = Schedule::Iterations(20);
    let teacher = train_teacher(&inputs, &labels, &tcfg).unwrap().bundle;
    let before = teacher.checksum().unwrap();

    let examples: Vec<StudentExample> = toy::corpus()
        .iter()
        .zip(&inputs)
        .map(|(i, input)| StudentExample {
            input: input.clone(),
            label: i.label(),
            explanation: i.explanation().clone(),
        })
        .collect();
    let mut cfg = toy::student_config();
    cfg.iterations_or_epochs = Schedule::Iterations(15);
    cfg.weights.alpha = 0.7;
    cfg.weights.lambda = 1.3;
    cfg.weights.gamma = 0.4;
    let out = train_toxcl(&examples, &teacher, &cfg).unwrap();
    assert_eq!(out.metrics.len(), 15);
    for m in &out.metrics {
        let (c, l, k) = (m.l_cls.unwrap(), m.l_clm.unwrap(), m.l_tf.unwrap());
        assert!(c >= 0.0 && l >= 0.0 && k >= 0.0);
        let want = final_loss(joint_loss(c, l, &cfg.weights), k, &cfg.weights);
        assert!((m.l_total - want).abs() < 1e-6, "{} vs {want}", m.l_total);
    }
    assert_eq!(teacher.checksum().unwrap(), before);

    let line = toxcl_core::model::train::metrics_jsonl(&out.metrics[..1]).unwrap();
    let v: serde_json::Value = serde_json::from_str(line.trim()).unwrap();
    for key in ["step", "l_cls", "l_clm", "l_tf", "l_total"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
}
