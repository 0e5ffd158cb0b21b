//! Pipeline configuration: one JSON file plus dotted-key overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use toxcl_core::corpus::CorpusFormat;
use toxcl_core::metrics::{Bleu4, ExternalScorer, RougeL, Scorer};
use toxcl_core::model::train::{StudentTrainConfig, TeacherTrainConfig};
use toxcl_core::tg::TgTrainConfig;

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub corpus_format: CorpusFormat,
    /// Predefined validation file; when absent a stratified split is drawn.
    pub valid_corpus: Option<PathBuf>,
    /// Group-annotated posts for the target-group generator.
    pub tg_supervision: Option<PathBuf>,
    pub tg_supervision_format: CorpusFormat,
    pub output_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            corpus: None,
            corpus_format: CorpusFormat::CanonicalJsonl,
            valid_corpus: None,
            tg_supervision: None,
            tg_supervision_format: CorpusFormat::CanonicalJsonl,
            output_dir: PathBuf::from("runs"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            test_fraction: 0.2,
            seed: 42,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub scorers: Vec<String>,
    pub external_scorers: Vec<ExternalScorer>,
    pub rouge_beta: f64,
    /// Conditional decoding constraint; disable only for ablations.
    pub constraint: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            scorers: vec!["bleu4".into(), "rouge_l".into()],
            external_scorers: Vec::new(),
            rouge_beta: 1.0,
            constraint: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub host: String,
    pub port: u16,
    pub max_batch: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: 8080,
            max_batch: 64,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub split: SplitConfig,
    pub tg: TgTrainConfig,
    pub teacher: TeacherTrainConfig,
    pub student: StudentTrainConfig,
    pub eval: EvalConfig,
    pub service: ServiceConfig,
}

fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_owned()))
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let raw = std::fs::read_to_string(path).map_err(|e| toxcl_core::Error::io(path, e))?;
        serde_json::from_str(&raw).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let json = serde_json::to_string_pretty(self).map_err(toxcl_core::Error::from)?;
        std::fs::write(path, json).map_err(|e| toxcl_core::Error::io(path, e).into())
    }

    /// Applies `a.b.c=value` overrides. Values parse as JSON when possible and
    /// as plain strings otherwise. Keys must already exist.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self, CliError> {
        let mut root = serde_json::to_value(self).map_err(toxcl_core::Error::from)?;
        for item in overrides {
            let item = item.as_ref();
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("override `{item}` is not key=value")))?;
            let mut node = &mut root;
            for part in key.split('.') {
                node = node
                    .get_mut(part)
                    .ok_or_else(|| CliError::Config(format!("unknown config key `{key}`")))?;
            }
            *node = parse_value(raw.trim());
        }
        let out: Self = serde_json::from_value(root).map_err(|e| CliError::Config(e.to_string()))?;
        out.validate()?;
        Ok(out)
    }

    /// `gamma=0,alpha=0.5` shorthand for `student.weights.*` overrides.
    pub fn with_weights(&self, weights: &str) -> Result<Self, CliError> {
        let overrides: Vec<String> = weights
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| format!("student.weights.{}", s.trim()))
            .collect();
        self.with_overrides(&overrides)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.tg.validate()?;
        self.teacher.validate()?;
        self.student.validate()?;
        self.scorers()?;
        if self.service.max_batch == 0 {
            return Err(CliError::Config("service.max_batch must be >= 1".into()));
        }
        Ok(())
    }

    /// Resolves the configured scorer names.
    pub fn scorers(&self) -> Result<Vec<Box<dyn Scorer>>, CliError> {
        self.eval
            .scorers
            .iter()
            .map(|name| -> Result<Box<dyn Scorer>, CliError> {
                match name.as_str() {
                    "bleu4" => Ok(Box::new(Bleu4)),
                    "rouge_l" => Ok(Box::new(RougeL {
                        beta: self.eval.rouge_beta,
                    })),
                    other => self
                        .eval
                        .external_scorers
                        .iter()
                        .find(|s| s.name == other)
                        .map(|s| Box::new(s.clone()) as Box<dyn Scorer>)
                        .ok_or_else(|| CliError::Config(format!("unknown scorer `{other}`"))),
                }
            })
            .collect()
    }
}
