//! Prediction with the conditional decoding constraint: a post classified
//! non-toxic gets the `[None]` explanation without running the decoder, and a
//! post classified toxic always gets a real explanation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Explanation, Label};
use crate::error::{Error, Result};
use crate::model::bundle::{BundleKind, ModelBundle};
use crate::model::vocab::SENTINEL;
use crate::text;
use crate::tg::{format_input, generate_targets, GeneratedTargets, TargetGroupSet};

pub trait TargetGenerator: Send + Sync {
    fn generate(&self, post: &str) -> Result<GeneratedTargets>;
}

pub trait ExplainableClassifier: Send + Sync {
    /// Class probabilities `(p0, p1)` for a formatted input.
    fn classify(&self, input: &str) -> Result<(f64, f64)>;

    /// Explanation candidates for a formatted input, best first.
    fn explain(&self, input: &str, forbid_sentinel: bool) -> Result<Vec<Explanation>>;
}

impl TargetGenerator for ModelBundle {
    fn generate(&self, post: &str) -> Result<GeneratedTargets> {
        generate_targets(self, post)
    }
}

impl ExplainableClassifier for ModelBundle {
    fn classify(&self, input: &str) -> Result<(f64, f64)> {
        Ok(ModelBundle::classify(self, input)?.probs)
    }

    fn explain(&self, input: &str, forbid_sentinel: bool) -> Result<Vec<Explanation>> {
        Ok(self
            .generate(input, forbid_sentinel)?
            .iter()
            .map(|h| {
                if h.tokens == [SENTINEL] {
                    Explanation::None
                } else {
                    Explanation::from_serialized(&self.decode_tokens(&h.tokens))
                }
            })
            .collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: Label,
    pub probs: (f64, f64),
    #[serde(skip)]
    pub target_raw: String,
    pub target_groups: TargetGroupSet,
    pub explanation: Explanation,
}

/// Argmax with ties going to the non-toxic class.
pub fn decide(probs: (f64, f64)) -> Label {
    if probs.1 > probs.0 {
        Label::Toxic
    } else {
        Label::NonToxic
    }
}

pub struct Predictor<'a> {
    pub tg: &'a dyn TargetGenerator,
    pub model: &'a dyn ExplainableClassifier,
    /// Disabling the constraint always decodes and keeps the top candidate.
    pub constraint: bool,
}

impl<'a> Predictor<'a> {
    pub fn new(tg: &'a dyn TargetGenerator, model: &'a dyn ExplainableClassifier) -> Self {
        Self {
            tg,
            model,
            constraint: true,
        }
    }

    pub fn predict(&self, post: &str) -> Result<Prediction> {
        let post = text::normalize(post);
        if post.is_empty() {
            return Err(Error::EmptyPost);
        }
        let targets = self.tg.generate(&post)?;
        let input = format_input(&targets.target_string(), &post)?;
        let probs = self.model.classify(&input)?;
        let label = decide(probs);
        let explanation = if !self.constraint {
            self.model
                .explain(&input, false)?
                .into_iter()
                .next()
                .unwrap_or(Explanation::None)
        } else if label == Label::NonToxic {
            Explanation::None
        } else {
            self.explain_toxic(&input)?
        };
        Ok(Prediction {
            label,
            probs,
            target_raw: targets.raw,
            target_groups: targets.parsed,
            explanation,
        })
    }

    /// Best non-sentinel candidate; re-decodes with the sentinel banned when
    /// every beam ended up as `[None]`.
    fn explain_toxic(&self, input: &str) -> Result<Explanation> {
        let first_text = |c: Vec<Explanation>| c.into_iter().find(|e| !e.is_none());
        if let Some(e) = first_text(self.model.explain(input, false)?) {
            return Ok(e);
        }
        first_text(self.model.explain(input, true)?).ok_or(Error::EmptyExplanation)
    }

    /// Elementwise [`Predictor::predict`], preserving order. The first failure
    /// is reported with its index.
    pub fn predict_batch<S: AsRef<str>>(&self, posts: &[S]) -> Result<Vec<Prediction>> {
        posts
            .iter()
            .enumerate()
            .map(|(index, p)| {
                self.predict(p.as_ref()).map_err(|e| Error::Item {
                    index,
                    source: Box::new(e),
                })
            })
            .collect()
    }
}

/// Batch moderation behind the HTTP service.
pub trait Moderator: Send + Sync {
    fn moderate(&self, posts: &[String]) -> Result<Vec<Prediction>>;

    fn model_ids(&self) -> Vec<String>;
}

/// A loaded generator and student.
pub struct Pipeline {
    pub tg: ModelBundle,
    pub student: ModelBundle,
    pub constraint: bool,
    ids: Vec<String>,
}

impl Pipeline {
    pub fn load(tg_dir: &Path, student_dir: &Path) -> Result<Self> {
        Ok(Self::new(
            ModelBundle::load(tg_dir, BundleKind::Tg)?,
            ModelBundle::load(student_dir, BundleKind::Student)?,
            vec![tg_dir.display().to_string(), student_dir.display().to_string()],
        ))
    }

    pub fn new(tg: ModelBundle, student: ModelBundle, ids: Vec<String>) -> Self {
        Self {
            tg,
            student,
            constraint: true,
            ids,
        }
    }

    pub fn predictor(&self) -> Predictor<'_> {
        Predictor {
            tg: &self.tg,
            model: &self.student,
            constraint: self.constraint,
        }
    }
}

impl Moderator for Pipeline {
    fn moderate(&self, posts: &[String]) -> Result<Vec<Prediction>> {
        self.predictor().predict_batch(posts)
    }

    fn model_ids(&self) -> Vec<String> {
        self.ids.clone()
    }
}

/// Deterministic stand-ins for tests and dry runs.
pub mod stub {
    use std::sync::atomic::{AtomicUsize, Ordering};

    use super::*;

    /// Emits a fixed target string.
    pub struct FixedTargets(pub String);

    impl TargetGenerator for FixedTargets {
        fn generate(&self, _post: &str) -> Result<GeneratedTargets> {
            Ok(GeneratedTargets {
                parsed: TargetGroupSet::parse(&self.0),
                raw: self.0.clone(),
            })
        }
    }

    /// Classifies with a caller-supplied rule and explains with fixed
    /// candidates, counting decoder calls.
    pub struct ScriptedClassifier<F> {
        pub rule: F,
        pub candidates: Vec<Explanation>,
        /// Candidates returned when the sentinel is forbidden.
        pub forbidden_candidates: Vec<Explanation>,
        pub decoder_calls: AtomicUsize,
    }

    impl<F: Fn(&str) -> (f64, f64) + Send + Sync> ScriptedClassifier<F> {
        pub fn new(rule: F, candidates: Vec<Explanation>) -> Self {
            let forbidden_candidates = candidates.iter().filter(|c| !c.is_none()).cloned().collect();
            Self {
                rule,
                candidates,
                forbidden_candidates,
                decoder_calls: AtomicUsize::new(0),
            }
        }

        pub fn calls(&self) -> usize {
            self.decoder_calls.load(Ordering::SeqCst)
        }
    }

    impl<F: Fn(&str) -> (f64, f64) + Send + Sync> ExplainableClassifier for ScriptedClassifier<F> {
        fn classify(&self, input: &str) -> Result<(f64, f64)> {
            Ok((self.rule)(input))
        }

        fn explain(&self, _input: &str, forbid_sentinel: bool) -> Result<Vec<Explanation>> {
            self.decoder_calls.fetch_add(1, Ordering::SeqCst);
            Ok(if forbid_sentinel {
                self.forbidden_candidates.clone()
            } else {
                self.candidates.clone()
            })
        }
    }
}
