//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit on any
//! failure.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use toxcl::commands;
use toxcl::PipelineConfig;
use toxcl_core::corpus::{
    load_corpus, make_ihc_test_split, preprocess, CorpusCounts, CorpusFormat, Explanation, Instance, Label,
    SplitName,
};
use toxcl_core::inference::stub::{FixedTargets, ScriptedClassifier};
use toxcl_core::inference::Predictor;
use toxcl_core::metrics::{
    bleu4, classification_metrics, explanation_eval, rouge_l, Bleu4, GoldExplanation, RougeL, Scorer,
};
use toxcl_core::model::bundle::{BundleKind, ModelBundle};
use toxcl_core::model::gradcheck::head_gradient_check;
use toxcl_core::model::losses::{
    clm_loss_from_probs, cls_loss, final_loss, joint_loss, kd_loss, LossWeights,
};
use toxcl_core::model::train::StepMetrics;
use toxcl_core::tg::{build_target_label, format_input, TargetGroupSet};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn close(got: f64, want: f64, tol: f64, what: &str) -> Result<(), String> {
    ensure((got - want).abs() <= tol, || format!("{what}: got {got}, want {want}"))
}

fn run(name: &str, limit: Duration, f: impl FnOnce() -> Check) -> bool {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    let elapsed = start.elapsed();
    let outcome = outcome.and_then(|detail| {
        if elapsed > limit {
            Err(format!("{detail}; took {elapsed:.1?}, limit {limit:?}"))
        } else {
            Ok(detail)
        }
    });
    match &outcome {
        Ok(detail) => println!("PASS {name}: {detail} [{:.2}s]", elapsed.as_secs_f64()),
        Err(why) => println!("FAIL {name}: {why} [{:.2}s]", elapsed.as_secs_f64()),
    }
    outcome.is_ok()
}

fn random_distribution(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let p: f64 = rng.random();
    (p, 1.0 - p)
}

fn loss_oracles() -> Check {
    use Label::{NonToxic as N, Toxic as T};
    let w = LossWeights::default();
    let e = |r: toxcl_core::Result<f64>| r.map_err(|e| e.to_string());
    // -(ln 0.8 + ln 0.9) / 2
    close(e(cls_loss(&[(0.2, 0.8), (0.9, 0.1)], &[T, N]))?, 0.164252, 1e-6, "cls_loss")?;
    close(e(cls_loss(&[(0.5, 0.5)], &[T]))?, std::f64::consts::LN_2, 1e-6, "cls_loss uniform")?;
    close(e(cls_loss(&[(1.0, 0.0)], &[N]))?, 0.0, 1e-6, "cls_loss certain")?;
    // -(ln 0.5 + ln 0.25 + ln 0.125) / 3 = 2 ln 2
    close(e(clm_loss_from_probs(&[0.5, 0.25, 0.125]))?, 1.386294, 1e-6, "clm_loss")?;
    close(e(clm_loss_from_probs(&[1.0, 1.0]))?, 0.0, 1e-6, "clm_loss certain")?;
    // 0.5 ln(0.5/0.9) + 0.5 ln(0.5/0.1)
    close(e(kd_loss((0.5, 0.5), (0.9, 0.1)))?, 0.510826, 1e-6, "kd_loss")?;
    close(e(kd_loss((0.7, 0.3), (0.7, 0.3)))?, 0.0, 1e-6, "kd_loss equal")?;
    close(joint_loss(0.5, 0.25, &w), 0.75, 1e-6, "joint_loss")?;
    close(joint_loss(1.0, 2.0, &LossWeights { alpha: 2.0, beta: 0.5, ..w }), 3.0, 1e-6, "joint_loss weighted")?;
    close(final_loss(0.75, 0.51, &w), 1.26, 1e-6, "final_loss")?;
    close(final_loss(0.75, 0.51, &LossWeights { gamma: 0.0, ..w }), 0.75, 1e-6, "final_loss gamma 0")?;
    close(final_loss(1.0, 0.4, &LossWeights { gamma: 0.5, ..w }), 1.2, 1e-6, "final_loss gamma 0.5")?;

    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for i in 0..1000 {
        let s = random_distribution(&mut rng);
        let t = random_distribution(&mut rng);
        let label = if rng.random() { T } else { N };
        let gold: Vec<f64> = (0..rng.random_range(1..20)).map(|_| rng.random_range(1e-6..=1.0)).collect();
        let cls = e(cls_loss(&[s], &[label]))?;
        let clm = e(clm_loss_from_probs(&gold))?;
        let kd = e(kd_loss(s, t))?;
        ensure(cls >= 0.0 && clm >= 0.0 && kd >= 0.0, || format!("case {i}: negative loss"))?;
        ensure(e(kd_loss(s, s))? < 1e-12, || format!("case {i}: kd(s, s) != 0"))?;
        if (s.0 - t.0).abs() > 1e-6 {
            ensure(kd > 0.0, || format!("case {i}: kd zero for distinct {s:?} {t:?}"))?;
        }
        let certain = if label == T { (0.0, 1.0) } else { (1.0, 0.0) };
        ensure(e(cls_loss(&[certain], &[label]))? < 1e-6, || format!("case {i}: cls not zero at gold"))?;
        ensure(e(clm_loss_from_probs(&vec![1.0; gold.len()]))? < 1e-6, || format!("case {i}: clm not zero"))?;
        let wts = LossWeights {
            alpha: rng.random_range(0.0..3.0),
            beta: rng.random_range(0.0..3.0),
            lambda: rng.random_range(0.0..3.0),
            gamma: rng.random_range(0.0..3.0),
        };
        ensure(final_loss(joint_loss(cls, clm, &wts), kd, &wts) >= 0.0, || format!("case {i}: combined negative"))?;
    }
    Ok("12 oracle values within 1e-6; 1000 fuzzed inputs".into())
}

fn gradient_check() -> Check {
    let r = head_gradient_check(11, 20, 1e-4).map_err(|e| e.to_string())?;
    ensure(r.closed_form < 1e-4 && r.autograd < 1e-4, || format!("{r:?}"))?;
    Ok(format!(
        "{} directions, max rel err closed-form {:.2e}, autograd {:.2e}",
        r.directions, r.closed_form, r.autograd
    ))
}

const WORDS: [&str; 16] = [
    "they", "people", "women", "always", "never", "the", "bank", "go", "home", "again", "école", "ok?", "!!", "jews",
    "muslims", "are",
];

fn random_post(rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(1..12);
    (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

type Rule = fn(&str) -> (f64, f64);

fn conditional_decoding() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let tg = FixedTargets("women, jews".into());
    let text = Explanation::Text("they are inferior".into());
    let nontoxic: [Rule; 2] = [|_| (0.9, 0.1), |_| (0.5, 0.5)];
    let toxic: Rule = |_| (0.3, 0.7);
    let mut checked = 0;
    for i in 0..500 {
        let post = random_post(&mut rng);
        let forced_toxic = i % 2 == 1;
        let rule = if forced_toxic { toxic } else { nontoxic[(i / 2) % 2] };
        // Every third toxic case offers only `[None]` first, forcing the fallback.
        let mut model = ScriptedClassifier::new(rule, vec![Explanation::None, text.clone()]);
        if i % 3 == 0 {
            model.candidates = vec![Explanation::None];
            model.forbidden_candidates = vec![text.clone()];
        }
        let p = Predictor::new(&tg, &model).predict(&post).map_err(|e| format!("{post:?}: {e}"))?;
        ensure(p.label.is_toxic() == forced_toxic, || format!("{post:?}: label {:?}", p.label))?;
        ensure((p.label == Label::NonToxic) == p.explanation.is_none(), || {
            format!("{post:?}: label {:?} explanation {}", p.label, p.explanation)
        })?;
        if !forced_toxic {
            ensure(model.calls() == 0, || format!("{post:?}: decoder called for label 0"))?;
        }
        checked += 1;
    }
    Ok(format!("{checked} posts, bi-implication 100%, zero decoder calls for label 0"))
}

/// Direct per-item rules: none/none 100, exactly one none 0, else best reference.
fn brute_force_eval(golds: &[Vec<String>], hyps: &[Option<String>], score: fn(&[String], &str) -> f64) -> f64 {
    let mut total = 0.0;
    for (g, h) in golds.iter().zip(hyps) {
        total += match (g.is_empty(), h) {
            (true, None) => 100.0,
            (true, Some(_)) | (false, None) => 0.0,
            (false, Some(h)) => score(g, h),
        };
    }
    total / golds.len() as f64
}

fn algorithm_one() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let sentence = |rng: &mut ChaCha8Rng| {
        let n = rng.random_range(1..8);
        (0..n).map(|_| *WORDS[..10].choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
    };
    let bleu: fn(&[String], &str) -> f64 = |r, h| bleu4(r, h);
    let rouge: fn(&[String], &str) -> f64 = |r, h| rouge_l(r, h);
    for case in 0..50 {
        let n = rng.random_range(1..25);
        let mut golds = Vec::new();
        let mut hyps = Vec::new();
        for _ in 0..n {
            let refs: Vec<String> = if rng.random_bool(0.4) {
                Vec::new()
            } else {
                (0..rng.random_range(1..4)).map(|_| sentence(&mut rng)).collect()
            };
            let hyp = match rng.random_range(0..3) {
                0 => None,
                1 if !refs.is_empty() => Some(refs[0].clone()),
                _ => Some(sentence(&mut rng)),
            };
            golds.push(refs);
            hyps.push(hyp);
        }
        let gold_expl: Vec<GoldExplanation> = golds
            .iter()
            .map(|g| if g.is_empty() { GoldExplanation::None } else { GoldExplanation::References(g.clone()) })
            .collect();
        let hyp_expl: Vec<Explanation> =
            hyps.iter().map(|h| h.clone().map_or(Explanation::None, Explanation::Text)).collect();
        let scorers: [&dyn Scorer; 2] = [&Bleu4, &RougeL::default()];
        let got = explanation_eval(&gold_expl, &hyp_expl, &scorers).map_err(|e| e.to_string())?;
        close(got["bleu4"], brute_force_eval(&golds, &hyps, bleu), 1e-9, &format!("case {case} bleu4"))?;
        close(got["rouge_l"], brute_force_eval(&golds, &hyps, rouge), 1e-9, &format!("case {case} rouge_l"))?;
    }
    Ok("50 randomized lists equal the brute-force evaluator within 1e-9".into())
}

/// `(references, hypothesis, BLEU-4, ROUGE-L)`; BLEU from sacrebleu sentence
/// BLEU (tokenize none, lowercase, floor smoothing 1e-9, effective order),
/// ROUGE-L from rouge-score F-measure, both maximised over references.
const METRIC_CASES: [(&[&str], &str, f64, f64); 20] = [
    (&["the cat sat on the mat"], "the cat sat on the mat", 100.000000000, 100.000000000),
    (&["alpha beta gamma delta"], "epsilon zeta eta theta", 0.000000000, 0.000000000),
    (&["women are hoes"], "women are hoes", 100.000000000, 100.000000000),
    (&["black people are worthless people"], "black people are worthless", 77.880078307, 88.888888889),
    (&["the cat sat"], "the cat", 60.653065971, 80.000000000),
    (&["muslims are terrorists"], "muslims are violent terrorists", 0.001880302, 85.714285714),
    (&["jews control the economy"], "jews control the banks", 0.397635364, 75.000000000),
    (&["immigrants are criminals and freeloaders"], "immigrants are freeloaders", 0.040749944, 75.000000000),
    (&["gay people are predators"], "people are gay predators", 0.002020516, 75.000000000),
    (&["asian women are gold diggers"], "women are gold diggers", 77.880078307, 88.888888889),
    (&["women are only good for housework"], "women are good for housework only", 0.265914795, 83.333333333),
    (&["liberals are stupid"], "liberals are not smart", 0.001699044, 57.142857143),
    (&["black people are violent"], "black people are violent people", 66.874030498, 88.888888889),
    (&["a b c d e f g h"], "a b c d x f g h", 50.000000000, 87.500000000),
    (&["they do not belong here"], "they belong here", 0.040749944, 75.000000000),
    (&["muslims are inbred"], "inbred", 13.533528324, 50.000000000),
    (&["the economy is controlled by jews"], "jews control the economy", 0.001140461, 40.000000000),
    (&["women are incompetent leaders", "women cannot lead"], "women cannot lead anything", 0.397635364, 85.714285714),
    (&["gay people are sick", "being gay is an illness"], "gay people are an illness", 0.265914795, 66.666666667),
    (&["Immigrants ARE Criminals"], "immigrants are criminals", 100.000000000, 100.000000000),
];

fn metric_oracles() -> Check {
    use Label::{NonToxic as N, Toxic as T};
    for (refs, hyp, want_b, want_r) in METRIC_CASES {
        close(bleu4(refs, hyp), want_b, 1e-3, &format!("bleu4 {hyp:?}"))?;
        close(rouge_l(refs, hyp), want_r, 1e-3, &format!("rouge_l {hyp:?}"))?;
    }
    let f1_cases: [(&[Label], &[Label], f64); 10] = [
        (&[N, T, T, N], &[N, T, T, N], 100.0),
        (&[N, N, N], &[N, N, N], 100.0),
        (&[N, N, T, T], &[T, T, T, T], 100.0 * (2.0 / 3.0) / 2.0),
        (&[N, N], &[N, T], 100.0 * (2.0 / 3.0) / 2.0),
        (&[T, T, T, N], &[T, T, N, N], 100.0 * (4.0 / 5.0 + 2.0 / 3.0) / 2.0),
        (&[T, N, T, N, T, N], &[N, T, N, T, N, T], 0.0),
        (&[T, T, N, N, N], &[T, N, N, N, T], 100.0 * (2.0 / 4.0 + 4.0 / 6.0) / 2.0),
        (&[T], &[T], 100.0),
        (&[N, N, N, T], &[N, N, N, N], 100.0 * (6.0 / 7.0) / 2.0),
        (
            &[T, T, T, T, N, N, N, N, N, N],
            &[T, T, T, N, N, N, N, N, T, T],
            100.0 * (6.0 / 9.0 + 8.0 / 11.0) / 2.0,
        ),
    ];
    for (i, (g, p, want)) in f1_cases.iter().enumerate() {
        let m = classification_metrics(g, p).map_err(|e| e.to_string())?;
        close(m.macro_f1, *want, 1e-9, &format!("macro F1 fixture {i}"))?;
    }
    Ok("20 BLEU/ROUGE-L cases within 1e-3; 10 macro-F1 fixtures exact".into())
}

fn read_metrics(dir: &Path) -> Result<Vec<StepMetrics>, String> {
    let raw = std::fs::read_to_string(dir.join(commands::METRICS_FILE)).map_err(|e| e.to_string())?;
    raw.lines().map(|l| serde_json::from_str(l).map_err(|e| e.to_string())).collect()
}

struct ToyRun {
    _dir: tempfile::TempDir,
    config: PipelineConfig,
    student: PathBuf,
}

fn toy_end_to_end(slot: &mut Option<ToyRun>) -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = common::toy_config(dir.path());
    let err = |e: toxcl::CliError| e.to_string();
    commands::cmd_preprocess(&config).map_err(err)?;
    let tg = commands::cmd_train_tg(&config).map_err(err)?;
    let teacher = commands::cmd_train_teacher(&config).map_err(err)?;
    let student = commands::cmd_train(&config).map_err(err)?;
    let eval = commands::cmd_evaluate(&config, SplitName::Train, None).map_err(err)?;

    let mut steps = Vec::new();
    for d in [&tg, &teacher, &student] {
        let n = read_metrics(d)?.len();
        ensure(n <= 1000, || format!("{} ran {n} steps", d.display()))?;
        steps.push(n);
    }
    let bundle = ModelBundle::load(&student, BundleKind::Student).map_err(|e| e.to_string())?;
    let params = bundle.store().num_params();
    ensure(params <= 5_000_000, || format!("{params} parameters"))?;
    let r = &eval.report;
    ensure(r.n == 32, || format!("evaluated {} instances", r.n))?;
    let rouge = r.per_scorer["rouge_l"];
    ensure(r.accuracy >= 95.0 && rouge >= 90.0, || {
        format!("accuracy {:.2}, ROUGE-L {rouge:.2}", r.accuracy)
    })?;
    *slot = Some(ToyRun {
        _dir: dir,
        config,
        student: student.clone(),
    });
    Ok(format!(
        "accuracy {:.2}, ROUGE-L {rouge:.2}, steps tg/teacher/student {steps:?}, {params} parameters",
        r.accuracy
    ))
}

fn mean_kd_last_50(dir: &Path) -> Result<f64, String> {
    let m = read_metrics(dir)?;
    ensure(m.len() >= 50, || format!("only {} steps", m.len()))?;
    let tail = &m[m.len() - 50..];
    let kd: Option<Vec<f64>> = tail.iter().map(|s| s.l_tf).collect();
    let kd = kd.ok_or("missing l_tf")?;
    Ok(kd.iter().sum::<f64>() / 50.0)
}

fn distillation_effect(toy: &Option<ToyRun>) -> Check {
    let toy = toy.as_ref().ok_or("toy pipeline did not complete")?;
    let with_kd = mean_kd_last_50(&toy.student)?;
    let ablated_cfg = toy.config.with_weights("gamma=0").map_err(|e| e.to_string())?;
    let ablated = commands::cmd_train(&ablated_cfg).map_err(|e| e.to_string())?;
    let without_kd = mean_kd_last_50(&ablated)?;
    ensure(with_kd < without_kd, || format!("gamma=1 {with_kd:.6} vs gamma=0 {without_kd:.6}"))?;
    Ok(format!("mean kd_loss over last 50 steps: gamma=1 {with_kd:.6} < gamma=0 {without_kd:.6}"))
}

fn synthetic_instances(rng: &mut ChaCha8Rng, n_toxic: usize, n_nontoxic: usize, n_drop: usize) -> Vec<Instance> {
    let mut out = Vec::new();
    for i in 0..n_toxic {
        out.push(Instance::new(format!("t{i}"), &format!("toxic {i}"), Label::Toxic, vec![format!("why {i}")], None).unwrap());
    }
    for i in 0..n_nontoxic {
        out.push(Instance::new(format!("n{i}"), &format!("fine {i}"), Label::NonToxic, vec![], None).unwrap());
    }
    for i in 0..n_drop {
        out.push(Instance::new(format!("d{i}"), &format!("unexplained {i}"), Label::Toxic, vec![], None).unwrap());
    }
    out.shuffle(rng);
    out
}

/// Published IHC and SBIC split sizes, checked when the raw files are supplied through
/// `TOXCL_IHC_TSV` and `TOXCL_SBIC_DIR` (with `train.csv`, `dev.csv`, `test.csv`).
fn real_data_counts() -> Result<Option<String>, String> {
    let counts = |t, n| CorpusCounts { n_toxic: t, n_nontoxic: n, n_total: t + n };
    let mut notes = Vec::new();
    if let Ok(path) = std::env::var("TOXCL_IHC_TSV") {
        let raw = load_corpus(Path::new(&path), CorpusFormat::IhcTsv).map_err(|e| e.to_string())?;
        let pre = preprocess(raw);
        ensure(pre.dropped_count == 844, || format!("IHC dropped {}", pre.dropped_count))?;
        let (train, valid) = make_ihc_test_split(&pre.kept, 0.2, 42).map_err(|e| e.to_string())?;
        ensure(train.counts() == counts(5002, 10633), || format!("IHC train {:?}", train.counts()))?;
        ensure(valid.counts() == counts(1254, 2658), || format!("IHC valid {:?}", valid.counts()))?;
        notes.push("IHC");
    }
    if let Ok(dir) = std::env::var("TOXCL_SBIC_DIR") {
        let mut dropped = 0;
        for (file, want) in [
            ("train.csv", counts(12098, 16698)),
            ("dev.csv", counts(1806, 2054)),
            ("test.csv", counts(1924, 1981)),
        ] {
            let raw = load_corpus(&Path::new(&dir).join(file), CorpusFormat::SbicCsv).map_err(|e| e.to_string())?;
            let pre = preprocess(raw);
            dropped += pre.dropped_count;
            let got = CorpusCounts::of(&pre.kept);
            ensure(got == want, || format!("SBIC {file} {got:?}"))?;
        }
        ensure(dropped == 8220, || format!("SBIC dropped {dropped}"))?;
        notes.push("SBIC");
    }
    Ok((!notes.is_empty()).then(|| notes.join("+")))
}

fn preprocessing_contract() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..20 {
        let (t, n, d) = (rng.random_range(1..60), rng.random_range(1..60), rng.random_range(0..10));
        let pre = preprocess(synthetic_instances(&mut rng, t, n, d));
        ensure(pre.dropped_count == d, || format!("case {case}: dropped {} of {d}", pre.dropped_count))?;
        ensure(preprocess(pre.kept.clone()).dropped_count == 0, || format!("case {case}: not idempotent"))?;
        let (train, test) = make_ihc_test_split(&pre.kept, 0.2, case).map_err(|e| e.to_string())?;
        let want_test = CorpusCounts {
            n_toxic: t / 5,
            n_nontoxic: n / 5,
            n_total: t / 5 + n / 5,
        };
        ensure(test.counts() == want_test, || format!("case {case}: test {:?} want {want_test:?}", test.counts()))?;
        ensure(train.len() + test.len() == t + n, || format!("case {case}: split not exhaustive"))?;
    }

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let raw = dir.path().join("raw.jsonl");
    toxcl_core::corpus::write_canonical_jsonl(&raw, &synthetic_instances(&mut rng, 10, 10, 2)).map_err(|e| e.to_string())?;
    let mut config = PipelineConfig::default();
    config.paths.corpus = Some(raw);
    config.paths.output_dir = dir.path().join("runs");
    let stats = commands::cmd_preprocess(&config).map_err(|e| e.to_string())?;
    ensure(stats.dropped == 2, || format!("cmd_preprocess dropped {}", stats.dropped))?;
    ensure(stats.valid.n_toxic == 2 && stats.valid.n_nontoxic == 2, || format!("valid {:?}", stats.valid))?;

    let real = match real_data_counts()? {
        Some(which) => format!("real {which} counts match"),
        None => "real-data check skipped (no corpus supplied)".into(),
    };
    Ok(format!("20 synthetic corpora exact; {real}"))
}

fn format_contract() -> Check {
    let fixtures = [
        ("women", "women belong in the kitchen", "Target:women Post:women belong in the kitchen"),
        ("none", "the weather is nice", "Target:none Post:the weather is nice"),
        ("jews, muslims", "go back", "Target:jews, muslims Post:go back"),
        ("black folks", "Post: nested", "Target:black folks Post:Post: nested"),
        ("", "x", "Target: Post:x"),
        ("asians", "école ünïcode ✓", "Target:asians Post:école ünïcode ✓"),
    ];
    for (target, post, want) in fixtures {
        let got = format_input(target, post).map_err(|e| e.to_string())?;
        ensure(got.as_bytes() == want.as_bytes(), || format!("{got:?} != {want:?}"))?;
    }
    let label = |groups: &[&str]| build_target_label(&groups.iter().collect::<TargetGroupSet>());
    ensure(label(&["women", "jews"]) == "jews, women", || "sorted label".into())?;
    ensure(label(&[]) == "none", || "empty label".into())?;

    let pool = ["women", "jews", "muslims", "black folks", "Asians", "gays", "immigrants", "liberals", "  women "];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..200 {
        let k = rng.random_range(0..=pool.len());
        let mut groups: Vec<&str> = pool.choose_multiple(&mut rng, k).copied().collect();
        let base = label(&groups);
        for _ in 0..5 {
            groups.shuffle(&mut rng);
            ensure(label(&groups) == base, || format!("case {case}: {groups:?}"))?;
        }
    }
    Ok(format!("{} template fixtures byte-exact; 200 fuzzed group sets permutation-invariant", fixtures.len()))
}

fn service_conformance() -> Check {
    use axum::body::{to_bytes, Body};
    use axum::http::{Request, StatusCode};
    use serde_json::{json, Value};
    use tower::ServiceExt;
    use toxcl::service::{router, AppState};

    let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    rt.block_on(async {
        let call = |state: Arc<AppState>, body: Value| async move {
            let req = Request::post("/moderate")
                .header("content-type", "application/json")
                .body(Body::from(body.to_string()))
                .unwrap();
            let resp = router(state).oneshot(req).await.unwrap();
            let status = resp.status();
            let bytes = to_bytes(resp.into_body(), usize::MAX).await.unwrap();
            (status, serde_json::from_slice::<Value>(&bytes).unwrap_or(Value::Null))
        };
        let state = AppState::new(4);
        let (status, _) = call(state.clone(), json!({"posts": ["bad"]})).await;
        ensure(status == StatusCode::SERVICE_UNAVAILABLE, || format!("before load: {status}"))?;
        state.install(Arc::new(common::ScriptedPipeline::new(common::bad_word_rule)));

        let posts = ["bad apple", "good apple", "very bad", "fine"];
        let (status, body) = call(state.clone(), json!({ "posts": posts })).await;
        ensure(status == StatusCode::OK, || format!("moderate: {status}"))?;
        let preds = body.as_array().ok_or("response is not an array")?;
        ensure(preds.len() == posts.len(), || format!("{} predictions", preds.len()))?;
        for (post, p) in posts.iter().zip(preds) {
            let toxic = post.contains("bad");
            ensure(p["label"] == json!(u8::from(toxic)), || format!("{post}: order or label wrong"))?;
            ensure((p["label"] == 0) == (p["explanation"] == "[None]"), || format!("{post}: constraint broken"))?;
        }
        let fixtures = [
            (json!({"posts": []}), StatusCode::BAD_REQUEST),
            (json!({"posts": ["a", "b", "c", "d", "e"]}), StatusCode::PAYLOAD_TOO_LARGE),
            (json!({"posts": ["ok", " "]}), StatusCode::BAD_REQUEST),
        ];
        for (body, want) in fixtures {
            let (status, _) = call(state.clone(), body.clone()).await;
            ensure(status == want, || format!("{body}: {status}, want {want}"))?;
        }
        Ok("503 before load; order-preserving with constraint; 400/413/400 on error fixtures".to_owned())
    })
}

fn main() {
    let mut ok = true;
    ok &= run("loss oracle suite", Duration::from_secs(10), loss_oracles);
    ok &= run("gradient check", Duration::from_secs(30), gradient_check);
    ok &= run("conditional decoding constraint", Duration::from_secs(60), conditional_decoding);
    ok &= run("explanation evaluation oracle", Duration::from_secs(10), algorithm_one);
    ok &= run("metric oracles", Duration::from_secs(10), metric_oracles);
    let mut toy = None;
    ok &= run("toy end-to-end overfit", Duration::from_secs(15 * 60), || toy_end_to_end(&mut toy));
    ok &= run("distillation effect", Duration::from_secs(15 * 60), || distillation_effect(&toy));
    ok &= run("preprocessing contract", Duration::from_secs(60), preprocessing_contract);
    ok &= run("format contract", Duration::from_secs(10), format_contract);
    ok &= run("service conformance", Duration::from_secs(30), service_conformance);
    if !ok {
        std::process::exit(1);
    }
}
