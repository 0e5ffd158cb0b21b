//! Canonical corpus representation, ingest adapters, preprocessing and splits.

mod formats;
mod split;

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text;

pub use formats::{load_corpus, parse_canonical_jsonl, to_canonical_jsonl, write_canonical_jsonl, CorpusFormat};
pub use split::make_ihc_test_split;

/// Serialized form of the "no explanation" value.
pub const NONE_SENTINEL: &str = "[None]";

/// Binary toxicity label; serialized as `0` / `1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Label {
    NonToxic,
    Toxic,
}

impl Label {
    pub fn index(self) -> usize {
        match self {
            Label::NonToxic => 0,
            Label::Toxic => 1,
        }
    }

    pub fn is_toxic(self) -> bool {
        self == Label::Toxic
    }
}

impl TryFrom<u8> for Label {
    type Error = String;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        match value {
            0 => Ok(Label::NonToxic),
            1 => Ok(Label::Toxic),
            other => Err(format!("label must be 0 or 1, got {other}")),
        }
    }
}

impl From<Label> for u8 {
    fn from(label: Label) -> u8 {
        label.index() as u8
    }
}

/// An explanation, or the distinguished "none" value used for non-toxic posts.
///
/// The sentinel is a variant, not a string: only the (de)serialization layer
/// ever sees the literal `[None]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub enum Explanation {
    #[default]
    None,
    Text(String),
}

impl Explanation {
    pub fn is_none(&self) -> bool {
        matches!(self, Explanation::None)
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            Explanation::None => None,
            Explanation::Text(t) => Some(t),
        }
    }

    /// Decodes the serialized form; the sentinel and blank strings map to `None`.
    pub fn from_serialized(s: &str) -> Self {
        let s = text::normalize(s);
        if s.is_empty() || s == NONE_SENTINEL {
            Explanation::None
        } else {
            Explanation::Text(s)
        }
    }

    pub fn as_serialized(&self) -> &str {
        match self {
            Explanation::None => NONE_SENTINEL,
            Explanation::Text(t) => t,
        }
    }
}

impl fmt::Display for Explanation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_serialized())
    }
}

impl Serialize for Explanation {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_serialized())
    }
}

impl<'de> Deserialize<'de> for Explanation {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Ok(Explanation::from_serialized(&s))
    }
}

/// One corpus row.
///
/// Non-toxic instances always carry [`Explanation::None`]. Toxic instances may
/// lack an explanation until [`preprocess`] removes them.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instance {
    id: String,
    post: String,
    label: Label,
    explanation: Explanation,
    references: Vec<String>,
    annotated_groups: Option<Vec<String>>,
}

impl Instance {
    /// Builds an instance from raw fields, normalizing all text.
    ///
    /// `references` is the full list of reference explanations; blank entries
    /// and sentinel entries are discarded and the first survivor becomes the
    /// primary explanation.
    pub fn new(
        id: impl Into<String>,
        post: &str,
        label: Label,
        references: Vec<String>,
        annotated_groups: Option<Vec<String>>,
    ) -> Result<Self> {
        let post = text::normalize(post);
        if post.is_empty() {
            return Err(Error::EmptyPost);
        }
        let references: Vec<String> = if label.is_toxic() {
            references
                .iter()
                .filter_map(|r| Explanation::from_serialized(r).as_text().map(str::to_owned))
                .collect()
        } else {
            Vec::new()
        };
        let explanation = references
            .first()
            .map_or(Explanation::None, |r| Explanation::Text(r.clone()));
        let annotated_groups = annotated_groups.map(|groups| {
            groups
                .iter()
                .map(|g| text::normalize(g))
                .filter(|g| !g.is_empty())
                .collect()
        });
        Ok(Self {
            id: id.into(),
            post,
            label,
            explanation,
            references,
            annotated_groups,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn post(&self) -> &str {
        &self.post
    }

    pub fn label(&self) -> Label {
        self.label
    }

    pub fn explanation(&self) -> &Explanation {
        &self.explanation
    }

    /// All reference explanations; empty exactly when the explanation is `None`.
    pub fn references(&self) -> &[String] {
        &self.references
    }

    pub fn annotated_groups(&self) -> Option<&[String]> {
        self.annotated_groups.as_deref()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Valid,
    Test,
}

impl fmt::Display for SplitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitName::Train => "train",
            SplitName::Valid => "valid",
            SplitName::Test => "test",
        })
    }
}

impl std::str::FromStr for SplitName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitName::Train),
            "valid" | "dev" => Ok(SplitName::Valid),
            "test" => Ok(SplitName::Test),
            other => Err(Error::precondition(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusCounts {
    pub n_toxic: usize,
    pub n_nontoxic: usize,
    pub n_total: usize,
}

impl CorpusCounts {
    pub fn of(instances: &[Instance]) -> Self {
        let n_toxic = instances.iter().filter(|i| i.label.is_toxic()).count();
        Self {
            n_toxic,
            n_nontoxic: instances.len() - n_toxic,
            n_total: instances.len(),
        }
    }
}

/// A named, id-unique list of instances.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CorpusSplit {
    name: SplitName,
    instances: Vec<Instance>,
}

impl CorpusSplit {
    pub fn new(name: SplitName, instances: Vec<Instance>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(instances.len());
        for inst in &instances {
            if !seen.insert(inst.id.as_str()) {
                return Err(Error::DuplicateId(inst.id.clone()));
            }
        }
        Ok(Self { name, instances })
    }

    pub fn name(&self) -> SplitName {
        self.name
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn into_instances(self) -> Vec<Instance> {
        self.instances
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn counts(&self) -> CorpusCounts {
        CorpusCounts::of(&self.instances)
    }
}

/// Exact label counts of a split.
pub fn corpus_stats(split: &CorpusSplit) -> CorpusCounts {
    split.counts()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Preprocessed {
    pub kept: Vec<Instance>,
    pub dropped_count: usize,
}

/// Drops toxic instances that have no explanation. Order is preserved.
pub fn preprocess(instances: Vec<Instance>) -> Preprocessed {
    let before = instances.len();
    let kept: Vec<Instance> = instances
        .into_iter()
        .filter(|i| !(i.label.is_toxic() && i.explanation.is_none()))
        .collect();
    Preprocessed {
        dropped_count: before - kept.len(),
        kept,
    }
}
