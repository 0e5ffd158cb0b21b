//! Corpus adapters. Delimited formats are resolved by column name, never by
//! position; see the README for the accepted column names.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Instance, Label};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusFormat {
    IhcTsv,
    SbicCsv,
    CanonicalJsonl,
}

impl FromStr for CorpusFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ihc_tsv" => Ok(CorpusFormat::IhcTsv),
            "sbic_csv" => Ok(CorpusFormat::SbicCsv),
            "canonical_jsonl" => Ok(CorpusFormat::CanonicalJsonl),
            other => Err(Error::UnknownFormat(other.to_owned())),
        }
    }
}

/// Reads a corpus file. Row numbers in errors are 1-based data rows
/// (header excluded for delimited formats, blank lines counted for JSONL).
pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<Vec<Instance>> {
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    match format {
        CorpusFormat::CanonicalJsonl => parse_canonical_jsonl(&raw),
        CorpusFormat::IhcTsv => parse_delimited(&raw, b'\t', false, &IHC_COLUMNS, parse_ihc_label),
        CorpusFormat::SbicCsv => parse_delimited(&raw, b',', true, &SBIC_COLUMNS, parse_sbic_label),
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct CanonicalRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<String>,
    post: String,
    label: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    explanation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    explanations: Option<Vec<String>>,
    #[serde(default)]
    annotated_groups: Option<Vec<String>>,
}

pub fn parse_canonical_jsonl(raw: &str) -> Result<Vec<Instance>> {
    let mut out = Vec::new();
    for (idx, line) in raw.lines().enumerate() {
        let row = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |reason: String| Error::MalformedRow { row, reason };
        let rec: CanonicalRecord =
            serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
        let label = rec
            .label
            .as_u64()
            .and_then(|v| u8::try_from(v).ok())
            .ok_or_else(|| malformed(format!("label must be 0 or 1, got {}", rec.label)))
            .and_then(|v| Label::try_from(v).map_err(malformed))?;
        let references = match (rec.explanations, rec.explanation) {
            (Some(list), _) if !list.is_empty() => list,
            (_, Some(single)) => vec![single],
            _ => Vec::new(),
        };
        let id = rec.id.unwrap_or_else(|| row.to_string());
        let inst = Instance::new(id, &rec.post, label, references, rec.annotated_groups)
            .map_err(|e| malformed(e.to_string()))?;
        out.push(inst);
    }
    Ok(out)
}

pub fn to_canonical_jsonl(instances: &[Instance]) -> String {
    let mut out = String::new();
    for inst in instances {
        let rec = CanonicalRecord {
            id: Some(inst.id().to_owned()),
            post: inst.post().to_owned(),
            label: u8::from(inst.label()).into(),
            explanation: Some(inst.explanation().as_serialized().to_owned()),
            explanations: Some(inst.references().to_vec()),
            annotated_groups: inst.annotated_groups().map(<[String]>::to_vec),
        };
        out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn write_canonical_jsonl(path: &Path, instances: &[Instance]) -> Result<()> {
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(to_canonical_jsonl(instances).as_bytes())
        .map_err(|e| Error::io(path, e))
}

/// Accepted header names for each field, in priority order.
struct Columns {
    id: &'static [&'static str],
    post: &'static [&'static str],
    label: &'static [&'static str],
    explanation: &'static [&'static str],
    groups: &'static [&'static str],
}

const IHC_COLUMNS: Columns = Columns {
    id: &["id", "ID"],
    post: &["post"],
    label: &["class", "label"],
    explanation: &["implied_statement", "explanation"],
    groups: &["target", "annotated_groups"],
};

const SBIC_COLUMNS: Columns = Columns {
    id: &["id", "HITId"],
    post: &["post"],
    label: &["offensiveYN", "label"],
    explanation: &["targetStereotype", "explanation"],
    groups: &["targetMinority", "annotated_groups"],
};

fn parse_ihc_label(raw: &str) -> Option<Label> {
    match raw.trim().to_lowercase().as_str() {
        "implicit_hate" | "explicit_hate" | "hate" | "toxic" | "1" => Some(Label::Toxic),
        "not_hate" | "non_hate" | "non-toxic" | "nontoxic" | "0" => Some(Label::NonToxic),
        _ => None,
    }
}

/// SBIC stores the (averaged) annotator offensiveness rating in [0, 1].
fn parse_sbic_label(raw: &str) -> Option<Label> {
    let v: f64 = raw.trim().parse().ok()?;
    if !(0.0..=1.0).contains(&v) {
        return None;
    }
    Some(if v >= 0.5 { Label::Toxic } else { Label::NonToxic })
}

fn parse_delimited(
    raw: &str,
    delimiter: u8,
    quoting: bool,
    columns: &Columns,
    parse_label: fn(&str) -> Option<Label>,
) -> Result<Vec<Instance>> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .quoting(quoting)
        .flexible(true)
        .from_reader(raw.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::MalformedRow { row: 0, reason: e.to_string() })?
        .clone();
    let index: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h.trim(), i)).collect();
    let find = |names: &[&str]| names.iter().find_map(|n| index.get(n).copied());

    let missing = |what: &str, names: &[&str]| Error::MalformedRow {
        row: 0,
        reason: format!("missing {what} column (expected one of {names:?})"),
    };
    let post_col = find(columns.post).ok_or_else(|| missing("post", columns.post))?;
    let label_col = find(columns.label).ok_or_else(|| missing("label", columns.label))?;
    let id_col = find(columns.id);
    let expl_col = find(columns.explanation);
    let groups_col = find(columns.groups);

    let mut out = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let row = idx + 1;
        let record = record.map_err(|e| Error::MalformedRow { row, reason: e.to_string() })?;
        let field = |col: Option<usize>| col.and_then(|c| record.get(c)).unwrap_or("");
        let label_raw = field(Some(label_col));
        let label = parse_label(label_raw).ok_or_else(|| Error::MalformedRow {
            row,
            reason: format!("unparseable label `{label_raw}`"),
        })?;
        let id = id_col
            .and_then(|c| record.get(c))
            .filter(|s| !s.trim().is_empty())
            .map_or_else(|| row.to_string(), |s| s.trim().to_owned());
        let references = parse_list_field(field(expl_col));
        let groups = groups_col.map(|c| {
            parse_list_field(record.get(c).unwrap_or(""))
                .into_iter()
                .flat_map(|g| g.split(',').map(str::to_owned).collect::<Vec<_>>())
                .collect()
        });
        let inst = Instance::new(id, field(Some(post_col)), label, references, groups)
            .map_err(|e| Error::MalformedRow { row, reason: e.to_string() })?;
        out.push(inst);
    }
    Ok(out)
}

/// Splits a cell that is either a plain string or a Python-style list
/// literal such as `['a', "b's"]`.
pub(crate) fn parse_list_field(cell: &str) -> Vec<String> {
    let trimmed = cell.trim();
    if trimmed.is_empty() {
        return Vec::new();
    }
    if trimmed.starts_with('[') && trimmed.ends_with(']') {
        if let Some(items) = parse_list_literal(&trimmed[1..trimmed.len() - 1]) {
            return items;
        }
    }
    vec![trimmed.to_owned()]
}

fn parse_list_literal(inner: &str) -> Option<Vec<String>> {
    let mut items = Vec::new();
    let mut chars = inner.chars().peekable();
    loop {
        while chars.peek().is_some_and(|c| c.is_whitespace() || *c == ',') {
            chars.next();
        }
        let quote = match chars.next() {
            None => return Some(items),
            Some(q @ ('\'' | '"')) => q,
            Some(_) => return None,
        };
        let mut item = String::new();
        loop {
            match chars.next()? {
                '\\' => item.push(chars.next()?),
                c if c == quote => break,
                c => item.push(c),
            }
        }
        items.push(item);
    }
}
