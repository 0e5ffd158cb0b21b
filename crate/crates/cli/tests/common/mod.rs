#![allow(dead_code)]

use std::path::Path;

use toxcl::PipelineConfig;
use toxcl_core::corpus::{write_canonical_jsonl, Explanation, Instance, Label};
use toxcl_core::inference::stub::{FixedTargets, ScriptedClassifier};
use toxcl_core::inference::{Moderator, Prediction, Predictor};
use toxcl_core::tg::{self, TargetGroupSet};
use toxcl_core::{toy, Result};

/// Writes the toy corpus and generator supervision under `dir` and returns a
/// config that trains on all 32 toy instances with the toy schedules.
pub fn toy_config(dir: &Path) -> PipelineConfig {
    let corpus = dir.join("corpus.jsonl");
    let supervision = dir.join("tg.jsonl");
    write_canonical_jsonl(&corpus, &toy::corpus()).unwrap();
    write_canonical_jsonl(&supervision, &toy::tg_supervision()).unwrap();
    let mut c = PipelineConfig::default();
    c.paths.corpus = Some(corpus.clone());
    c.paths.valid_corpus = Some(corpus);
    c.paths.tg_supervision = Some(supervision);
    c.paths.output_dir = dir.join("runs");
    c.tg = toy::tg_config();
    c.teacher = toy::teacher_config();
    c.student = toy::student_config();
    c
}

/// Answers with whatever `f` returns for each post.
pub struct FnModerator<F>(pub F);

impl<F: Fn(&str) -> Prediction + Send + Sync> Moderator for FnModerator<F> {
    fn moderate(&self, posts: &[String]) -> Result<Vec<Prediction>> {
        Ok(posts.iter().map(|p| (self.0)(p)).collect())
    }

    fn model_ids(&self) -> Vec<String> {
        vec!["stub".into()]
    }
}

pub fn prediction(label: Label, explanation: Explanation) -> Prediction {
    let probs = if label.is_toxic() { (0.1, 0.9) } else { (0.9, 0.1) };
    Prediction {
        label,
        probs,
        target_raw: tg::NO_TARGET.into(),
        target_groups: TargetGroupSet::parse(tg::NO_TARGET),
        explanation,
    }
}

/// Predicts each instance's gold label and explanation.
pub fn gold_moderator(instances: &[Instance]) -> impl Moderator + '_ {
    FnModerator(move |post: &str| {
        let inst = instances.iter().find(|i| i.post() == post).expect("known post");
        prediction(inst.label(), inst.explanation().clone())
    })
}

pub type Rule = fn(&str) -> (f64, f64);

/// Full predictor over scripted components: posts containing `bad` are toxic.
pub struct ScriptedPipeline {
    pub tg: FixedTargets,
    pub model: ScriptedClassifier<Rule>,
}

pub fn bad_word_rule(input: &str) -> (f64, f64) {
    if input.contains("bad") {
        (0.2, 0.8)
    } else {
        (0.8, 0.2)
    }
}

impl ScriptedPipeline {
    pub fn new(rule: Rule) -> Self {
        Self {
            tg: FixedTargets("women".into()),
            model: ScriptedClassifier::new(
                rule,
                vec![Explanation::None, Explanation::Text("they are inferior".into())],
            ),
        }
    }
}

impl Moderator for ScriptedPipeline {
    fn moderate(&self, posts: &[String]) -> Result<Vec<Prediction>> {
        Predictor::new(&self.tg, &self.model).predict_batch(posts)
    }

    fn model_ids(&self) -> Vec<String> {
        vec!["scripted-tg".into(), "scripted-student".into()]
    }
}
