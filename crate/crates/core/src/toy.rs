//! A small synthetic corpus and matching desk-scale training settings, used
//! for smoke runs and overfitting checks.

use crate::corpus::{Instance, Label};
use crate::model::train::{OptimSettings, Schedule, StudentTrainConfig, TeacherTrainConfig};
use crate::tg::TgTrainConfig;

pub const TINY_BACKBONE: &str = "seq2seq-tiny";

const TOXIC: [(&str, &[&str], &str); 16] = [
    ("women belong in the kitchen and nowhere else", &["women"], "women are only good for housework"),
    ("a woman boss is a joke waiting to happen", &["women"], "women are incompetent leaders"),
    ("muslims keep marrying their cousins", &["muslims"], "muslims are inbred"),
    ("every mosque is a training camp", &["muslims"], "muslims are terrorists"),
    ("jews control all the banks", &["jews"], "jews control the economy"),
    ("follow the money and you find the jews", &["jews"], "jews are greedy"),
    ("immigrants come here to live on welfare", &["immigrants"], "immigrants are freeloaders"),
    ("lock your doors the immigrants moved in", &["immigrants"], "immigrants are criminals"),
    ("blacks only know how to riot", &["black folks"], "black people are violent"),
    ("no wonder blacks never finish school", &["black folks"], "black people are unintelligent"),
    ("gays are ruining our children", &["gays"], "gay people are predators"),
    ("being gay is a disease that needs a cure", &["gays"], "gay people are sick"),
    ("liberals cannot think for themselves", &["liberals"], "liberals are stupid"),
    ("asian women only want a green card", &["asians", "women"], "asian women are gold diggers"),
    ("asians all look the same to me", &["asians"], "asian people are indistinguishable"),
    ("jews and muslims should both go back", &["jews", "muslims"], "jews and muslims do not belong here"),
];

const NON_TOXIC: [(&str, &[&str]); 16] = [
    ("the weather is lovely this morning", &[]),
    ("i baked bread for the neighbours", &[]),
    ("our team won the match last night", &[]),
    ("the library opens at nine on sundays", &[]),
    ("my cat learned to open the fridge", &[]),
    ("traffic was light on the way home", &[]),
    ("women scientists won three prizes this year", &["women"]),
    ("muslims in town shared food after ramadan", &["muslims"]),
    ("the jewish museum has a new exhibit", &["jews"]),
    ("immigrants opened a bakery on main street", &["immigrants"]),
    ("the gospel choir sang at the festival", &["black folks"]),
    ("the pride parade drew a huge crowd", &["gays"]),
    ("the senator met with liberal voters", &["liberals"]),
    ("the asian film festival starts friday", &["asians"]),
    ("please recycle your bottles", &[]),
    ("the bridge repairs finish next week", &[]),
];

/// 32 instances, half toxic, each toxic post with one explanation.
pub fn corpus() -> Vec<Instance> {
    let toxic = TOXIC.iter().enumerate().map(|(i, (post, groups, expl))| {
        Instance::new(
            format!("t{i:02}"),
            post,
            Label::Toxic,
            vec![(*expl).to_owned()],
            Some(groups.iter().map(|g| g.to_string()).collect()),
        )
    });
    let benign = NON_TOXIC.iter().enumerate().map(|(i, (post, groups))| {
        Instance::new(
            format!("n{i:02}"),
            post,
            Label::NonToxic,
            Vec::new(),
            Some(groups.iter().map(|g| g.to_string()).collect()),
        )
    });
    toxic
        .chain(benign)
        .collect::<Result<_, _>>()
        .expect("toy corpus is well formed")
}

/// Group-annotated posts for the generator, written differently from the
/// downstream corpus.
pub fn tg_supervision() -> Vec<Instance> {
    let groups = [
        ("women", "women"),
        ("muslims", "muslims"),
        ("jews", "jews"),
        ("immigrants", "immigrants"),
        ("blacks", "black folks"),
        ("gays", "gays"),
        ("liberals", "liberals"),
        ("asians", "asians"),
    ];
    let templates = [
        "people keep talking about {} online",
        "a story about {} was on the news",
        "i read a long thread on {} today",
    ];
    let mut out = Vec::new();
    for (word, label) in groups {
        for (j, t) in templates.iter().enumerate() {
            let post = t.replace("{}", word);
            out.push((format!("g-{word}-{j}"), post, vec![label.to_owned()]));
        }
    }
    for (i, post) in ["nothing much happened at work", "the train was late again", "we planted tomatoes"]
        .iter()
        .enumerate()
    {
        out.push((format!("g-none-{i}"), (*post).to_owned(), Vec::new()));
    }
    out.push(("g-mix-0".into(), "a story about asian women was on the news".into(), vec!["asians".into(), "women".into()]));
    out.into_iter()
        .map(|(id, post, groups)| Instance::new(id, &post, Label::Toxic, vec!["-".into()], Some(groups)))
        .collect::<Result<_, _>>()
        .expect("toy supervision is well formed")
}

fn optim(batch_size: usize) -> OptimSettings {
    OptimSettings {
        batch_size,
        weight_decay: 0.0,
        ..Default::default()
    }
}

pub fn tg_config() -> TgTrainConfig {
    TgTrainConfig {
        backbone_id: TINY_BACKBONE.into(),
        learning_rate: 2e-3,
        max_sequence_length: 32,
        iterations: 300,
        beam_size: 4,
        max_target_len: 8,
        seed: 7,
        optim: optim(8),
    }
}

pub fn teacher_config() -> TeacherTrainConfig {
    TeacherTrainConfig {
        backbone_id: TINY_BACKBONE.into(),
        learning_rate: 1e-3,
        max_sequence_length: 32,
        iterations_or_epochs: Schedule::Iterations(200),
        seed: 7,
        optim: optim(8),
    }
}

pub fn student_config() -> StudentTrainConfig {
    StudentTrainConfig {
        backbone_id: TINY_BACKBONE.into(),
        learning_rate: 2e-3,
        max_sequence_length: 32,
        iterations_or_epochs: Schedule::Iterations(600),
        max_explanation_len: 12,
        window: 32,
        seed: 7,
        optim: optim(8),
        ..Default::default()
    }
}
