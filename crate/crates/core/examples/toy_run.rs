//! Trains all three models on the toy corpus and prints training-set scores.
//!
//! `cargo run --release -p toxcl-core --example toy_run`

use toxcl_core::corpus::Label;
use toxcl_core::inference::Predictor;
use toxcl_core::metrics::{Bleu4, EvalReport, PredictionRecord, RougeL};
use toxcl_core::model::train::{train_teacher, train_toxcl, StudentExample};
use toxcl_core::tg::{self, format_input, generate_targets};
use toxcl_core::toy;

fn main() -> toxcl_core::Result<()> {
    let corpus = toy::corpus();
    let (supervision, _) = tg::dedup_overlap(toy::tg_supervision(), &corpus);
    let tg_model = tg::train_tg(&tg::supervision_pairs(&supervision), &toy::tg_config())?.bundle;

    let inputs: Vec<String> = corpus
        .iter()
        .map(|i| format_input(&generate_targets(&tg_model, i.post())?.target_string(), i.post()))
        .collect::<toxcl_core::Result<_>>()?;
    let labels: Vec<Label> = corpus.iter().map(|i| i.label()).collect();
    let teacher = train_teacher(&inputs, &labels, &toy::teacher_config())?.bundle;

    let examples: Vec<StudentExample> = corpus
        .iter()
        .zip(&inputs)
        .map(|(i, input)| StudentExample {
            input: input.clone(),
            label: i.label(),
            explanation: i.explanation().clone(),
        })
        .collect();
    let student = train_toxcl(&examples, &teacher, &toy::student_config())?.bundle;

    let posts: Vec<&str> = corpus.iter().map(|i| i.post()).collect();
    let preds = Predictor::new(&tg_model, &student).predict_batch(&posts)?;
    let records: Vec<PredictionRecord> = corpus
        .iter()
        .zip(&preds)
        .map(|(i, p)| PredictionRecord {
            id: i.id().into(),
            gold_label: i.label(),
            pred_label: p.label,
            gold_explanations: i.into(),
            pred_explanation: p.explanation.clone(),
        })
        .collect();
    let report = EvalReport::from_records(&records, &[&Bleu4, &RougeL::default()])?;
    print!("{}", report.to_tsv());
    for (post, p) in posts.iter().zip(&preds).take(4) {
        println!("{post} => {} ({})", p.explanation, toxcl_core::tg::build_target_label(&p.target_groups));
    }
    Ok(())
}
