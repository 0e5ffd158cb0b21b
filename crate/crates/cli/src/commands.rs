//! One function per CLI subcommand. Each takes the resolved configuration
//! and works inside `paths.output_dir`.

use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};
use toxcl_core::corpus::{
    load_corpus, make_ihc_test_split, parse_canonical_jsonl, preprocess, write_canonical_jsonl, CorpusCounts,
    Instance, Label, SplitName,
};
use toxcl_core::inference::{Moderator, Pipeline, Prediction, TargetGenerator};
use toxcl_core::metrics::{EvalReport, PredictionRecord, Scorer};
use toxcl_core::model::bundle::{BundleKind, ModelBundle};
use toxcl_core::model::train::{metrics_jsonl, train_teacher, train_toxcl, StepMetrics, StudentExample};
use toxcl_core::tg::{self, format_input};
use toxcl_core::Error;

use crate::config::PipelineConfig;
use crate::workspace::{Stage, Workspace};
use crate::CliError;

pub const STATS_FILE: &str = "stats.json";
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const PIPELINE_FILE: &str = "pipeline.json";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TSV: &str = "report.tsv";
pub const PREDICTIONS_FILE: &str = "predictions.jsonl";

const PREPROCESSED: &str = "preprocessed data";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessStats {
    /// Toxic rows removed for lacking an explanation, over all inputs.
    pub dropped: usize,
    pub train: CorpusCounts,
    pub valid: CorpusCounts,
}

fn workspace(config: &PipelineConfig) -> Workspace {
    Workspace::new(&config.paths.output_dir)
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| Error::io(path, e).into())
}

fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    Ok(serde_json::to_string_pretty(value).map_err(Error::from)? + "\n")
}

pub fn cmd_preprocess(config: &PipelineConfig) -> Result<PreprocessStats, CliError> {
    let ws = workspace(config);
    let _lock = ws.lock()?;
    let paths = &config.paths;
    let corpus = paths
        .corpus
        .as_deref()
        .ok_or_else(|| CliError::Config("paths.corpus is not set".into()))?;
    let main = preprocess(load_corpus(corpus, paths.corpus_format)?);
    let mut dropped = main.dropped_count;
    let (train, valid) = match &paths.valid_corpus {
        Some(valid_path) => {
            let valid = preprocess(load_corpus(valid_path, paths.corpus_format)?);
            dropped += valid.dropped_count;
            (main.kept, valid.kept)
        }
        None => {
            let (train, test) = make_ihc_test_split(&main.kept, config.split.test_fraction, config.split.seed)?;
            (train.into_instances(), test.into_instances())
        }
    };
    let stats = PreprocessStats {
        dropped,
        train: CorpusCounts::of(&train),
        valid: CorpusCounts::of(&valid),
    };
    let data = ws.data_dir();
    fs::create_dir_all(&data).map_err(|e| Error::io(&data, e))?;
    write_canonical_jsonl(&ws.split_path("train"), &train)?;
    write_canonical_jsonl(&ws.split_path("valid"), &valid)?;
    write(&data.join(STATS_FILE), to_json(&stats)?)?;
    info!("preprocess: dropped {dropped}, train {:?}, valid {:?}", stats.train, stats.valid);
    Ok(stats)
}

/// Reads a preprocessed split (`train` or `valid`).
pub fn load_split(config: &PipelineConfig, split: SplitName) -> Result<Vec<Instance>, CliError> {
    let name = match split {
        SplitName::Train => "train",
        SplitName::Valid | SplitName::Test => "valid",
    };
    let path = workspace(config).split_path(name);
    match fs::read_to_string(&path) {
        Ok(raw) => Ok(parse_canonical_jsonl(&raw)?),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(CliError::MissingPrerequisite(PREPROCESSED.into())),
        Err(e) => Err(Error::io(&path, e).into()),
    }
}

fn save_training(
    dir: &Path,
    bundle: &ModelBundle,
    metrics: &[StepMetrics],
    config: &PipelineConfig,
) -> Result<(), CliError> {
    bundle.save(dir)?;
    write(&dir.join(METRICS_FILE), metrics_jsonl(metrics)?)?;
    config.save(&dir.join(PIPELINE_FILE))
}

pub fn cmd_train_tg(config: &PipelineConfig) -> Result<PathBuf, CliError> {
    let ws = workspace(config);
    let _lock = ws.lock()?;
    let source = config
        .paths
        .tg_supervision
        .as_deref()
        .ok_or_else(|| CliError::Config("paths.tg_supervision is not set".into()))?;
    let mut downstream = load_split(config, SplitName::Train)?;
    downstream.extend(load_split(config, SplitName::Valid)?);
    let supervision = load_corpus(source, config.paths.tg_supervision_format)?;
    let (supervision, removed) = tg::dedup_overlap(supervision, &downstream);
    let pairs = tg::supervision_pairs(&supervision);
    info!("train-tg: {} pairs, {removed} overlapping posts removed", pairs.len());
    let out = tg::train_tg(&pairs, &config.tg)?;
    let dir = ws.publish(Stage::Tg, |dir| save_training(dir, &out.bundle, &out.metrics, config))?;
    info!("train-tg: wrote {}", dir.display());
    Ok(dir)
}

/// `Target:{groups} Post:{post}` inputs with generated groups.
pub fn formatted_inputs(tg: &dyn TargetGenerator, instances: &[Instance]) -> Result<Vec<String>, CliError> {
    instances
        .iter()
        .map(|inst| {
            let targets = tg.generate(inst.post())?;
            Ok(format_input(&targets.target_string(), inst.post())?)
        })
        .collect()
}

fn load_stage(ws: &Workspace, stage: Stage, kind: BundleKind) -> Result<(PathBuf, ModelBundle), CliError> {
    let dir = ws.require_latest(stage)?;
    let bundle = ModelBundle::load(&dir, kind)?;
    Ok((dir, bundle))
}

pub fn cmd_train_teacher(config: &PipelineConfig) -> Result<PathBuf, CliError> {
    let ws = workspace(config);
    let _lock = ws.lock()?;
    let (_, tg) = load_stage(&ws, Stage::Tg, BundleKind::Tg)?;
    let train = load_split(config, SplitName::Train)?;
    let inputs = formatted_inputs(&tg, &train)?;
    let labels: Vec<Label> = train.iter().map(Instance::label).collect();
    info!("train-teacher: {} examples", inputs.len());
    let out = train_teacher(&inputs, &labels, &config.teacher)?;
    let dir = ws.publish(Stage::Teacher, |dir| save_training(dir, &out.bundle, &out.metrics, config))?;
    info!("train-teacher: wrote {}", dir.display());
    Ok(dir)
}

pub fn cmd_train(config: &PipelineConfig) -> Result<PathBuf, CliError> {
    let ws = workspace(config);
    let _lock = ws.lock()?;
    let (teacher_dir, teacher) = load_stage(&ws, Stage::Teacher, BundleKind::Teacher)?;
    let (_, tg) = load_stage(&ws, Stage::Tg, BundleKind::Tg)?;
    let train = load_split(config, SplitName::Train)?;
    let inputs = formatted_inputs(&tg, &train)?;
    let examples: Vec<StudentExample> = train
        .iter()
        .zip(inputs)
        .map(|(inst, input)| StudentExample {
            input,
            label: inst.label(),
            explanation: inst.explanation().clone(),
        })
        .collect();
    let mut student_cfg = config.student.clone();
    student_cfg.teacher_id = Some(teacher_dir.display().to_string());
    info!("train: {} examples, weights {:?}", examples.len(), student_cfg.weights);
    let out = train_toxcl(&examples, &teacher, &student_cfg)?;
    let dir = ws.publish(Stage::Student, |dir| save_training(dir, &out.bundle, &out.metrics, config))?;
    info!("train: wrote {}", dir.display());
    Ok(dir)
}

/// Loads the latest generator and student.
pub fn load_pipeline(config: &PipelineConfig) -> Result<Pipeline, CliError> {
    let ws = workspace(config);
    let tg = ws.require_latest(Stage::Tg)?;
    let student = ws.require_latest(Stage::Student)?;
    let mut pipeline = Pipeline::load(&tg, &student)?;
    pipeline.constraint = config.eval.constraint;
    Ok(pipeline)
}

/// Runs `moderator` over `instances` and pairs each prediction with its gold.
pub fn predict_records(moderator: &dyn Moderator, instances: &[Instance]) -> Result<Vec<PredictionRecord>, CliError> {
    let posts: Vec<String> = instances.iter().map(|i| i.post().to_owned()).collect();
    let preds = moderator.moderate(&posts)?;
    Ok(instances
        .iter()
        .zip(preds)
        .map(|(inst, p)| PredictionRecord {
            id: inst.id().to_owned(),
            gold_label: inst.label(),
            pred_label: p.label,
            gold_explanations: inst.into(),
            pred_explanation: p.explanation,
        })
        .collect())
}

pub fn evaluate_with(
    moderator: &dyn Moderator,
    instances: &[Instance],
    scorers: &[Box<dyn Scorer>],
) -> Result<(EvalReport, Vec<PredictionRecord>), CliError> {
    let records = predict_records(moderator, instances)?;
    let scorers: Vec<&dyn Scorer> = scorers.iter().map(|s| s.as_ref()).collect();
    let report = EvalReport::from_records(&records, &scorers)?;
    Ok((report, records))
}

#[derive(Debug)]
pub struct Evaluation {
    pub dir: PathBuf,
    pub report: EvalReport,
}

/// Writes `report.json`, `report.tsv` and `predictions.jsonl` as a report artifact.
pub fn write_report(
    config: &PipelineConfig,
    report: &EvalReport,
    records: &[PredictionRecord],
) -> Result<PathBuf, CliError> {
    let ws = workspace(config);
    ws.publish(Stage::Reports, |dir| {
        write(&dir.join(REPORT_JSON), to_json(report)?)?;
        write(&dir.join(REPORT_TSV), report.to_tsv())?;
        let mut lines = String::new();
        for r in records {
            lines.push_str(&serde_json::to_string(r).map_err(Error::from)?);
            lines.push('\n');
        }
        write(&dir.join(PREDICTIONS_FILE), lines)
    })
}

/// Evaluates the latest models on `split`, or rescoring an existing
/// predictions file when `predictions` is given.
pub fn cmd_evaluate(
    config: &PipelineConfig,
    split: SplitName,
    predictions: Option<&Path>,
) -> Result<Evaluation, CliError> {
    let ws = workspace(config);
    let _lock = ws.lock()?;
    let scorers = config.scorers()?;
    let (report, records) = match predictions {
        Some(path) => {
            let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let records = toxcl_core::metrics::parse_prediction_records(&raw)?;
            let refs: Vec<&dyn Scorer> = scorers.iter().map(|s| s.as_ref()).collect();
            (EvalReport::from_records(&records, &refs)?, records)
        }
        None => {
            let instances = load_split(config, split)?;
            let pipeline = load_pipeline(config)?;
            evaluate_with(&pipeline, &instances, &scorers)?
        }
    };
    let dir = write_report(config, &report, &records)?;
    info!(
        "evaluate: n {} accuracy {:.2} macro-F1 {:.2} {:?} -> {}",
        report.n,
        report.accuracy,
        report.macro_f1,
        report.per_scorer,
        dir.display()
    );
    Ok(Evaluation { dir, report })
}

pub fn cmd_predict<S: AsRef<str>>(config: &PipelineConfig, posts: &[S]) -> Result<Vec<Prediction>, CliError> {
    let pipeline = load_pipeline(config)?;
    Ok(pipeline.predictor().predict_batch(posts)?)
}
