// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::EvalError;
use crate::lang::{DimensionTag, Lang};

/// Option letter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Choice {
    A,
    B,
    C,
    D,
}

impl Choice {
    pub const ALL: [Choice; 4] = [Choice::A, Choice::B, Choice::C, Choice::D];

    pub fn from_letter(c: char) -> Option<Choice> {
        match c.to_ascii_uppercase() {
            'A' => Some(Choice::A),
            'B' => Some(Choice::B),
            'C' => Some(Choice::C),
            'D' => Some(Choice::D),
            _ => None,
        }
    }

    pub fn letter(self) -> char {
        ['A', 'B', 'C', 'D'][self as usize]
    }
}

impl fmt::Display for Choice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VqaSample {
    pub id: String,
    pub lang: Lang,
    pub dimension: DimensionTag,
    pub question: String,
    /// Labelled A–D in order.
    pub options: [String; 4],
    pub answer: Choice,
    pub image_refs: Vec<String>,
    /// 1-based source line.
    #[serde(skip)]
    pub line: usize,
}

fn schema(line: usize, field: &'static str, message: impl Into<String>) -> EvalError {
    EvalError::SchemaError { line, field, message: message.into() }
}

fn str_field<'v>(obj: &'v serde_json::Map<String, Value>, line: usize, field: &'static str) -> Result<&'v str, EvalError> {
    match obj.get(field) {
        None => Err(schema(line, field, "missing")),
        Some(Value::String(s)) => Ok(s),
        Some(_) => Err(schema(line, field, "expected a string")),
    }
}

fn parse_sample(value: Value, line: usize) -> Result<VqaSample, EvalError> {
    let Value::Object(obj) = value else {
        return Err(EvalError::ParseError { line, message: "expected a JSON object".into() });
    };
    let id = match obj.get("id") {
        Some(Value::String(s)) if !s.is_empty() => s.clone(),
        Some(Value::Number(n)) => n.to_string(),
        Some(_) => return Err(schema(line, "id", "expected a non-empty string or number")),
        None => return Err(schema(line, "id", "missing")),
    };
    let lang = Lang::from_str(str_field(&obj, line, "lang")?).map_err(|m| schema(line, "lang", m))?;
    let dim_text = str_field(&obj, line, "dimension")?;
    let dimension = DimensionTag::SCORED
        .into_iter()
        .find(|d| d.as_str().eq_ignore_ascii_case(dim_text))
        .ok_or_else(|| schema(line, "dimension", format!("unknown dimension {dim_text:?}")))?;
    let question = str_field(&obj, line, "question")?.to_string();

    let options: Vec<String> = match obj.get("options") {
        None => return Err(schema(line, "options", "missing")),
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| v.as_str().map(str::to_string))
            .collect::<Option<_>>()
            .ok_or_else(|| schema(line, "options", "every option must be a string"))?,
        Some(_) => return Err(schema(line, "options", "expected an array")),
    };
    let options: [String; 4] = options
        .try_into()
        .map_err(|v: Vec<String>| schema(line, "options", format!("expected 4 options, got {}", v.len())))?;

    let answer_text = str_field(&obj, line, "answer")?.trim();
    let mut chars = answer_text.chars();
    let answer = match (chars.next().and_then(Choice::from_letter), chars.next()) {
        (Some(c), None) => c,
        _ => return Err(schema(line, "answer", format!("expected one of A-D, got {answer_text:?}"))),
    };

    let image_refs: Vec<String> = match obj.get("image_refs") {
        None => return Err(schema(line, "image_refs", "missing")),
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| v.as_str().map(str::to_string))
            .collect::<Option<_>>()
            .ok_or_else(|| schema(line, "image_refs", "every ref must be a string"))?,
        Some(Value::String(s)) => vec![s.clone()],
        Some(_) => return Err(schema(line, "image_refs", "expected an array")),
    };
    if image_refs.is_empty() {
        return Err(schema(line, "image_refs", "at least one image is required"));
    }
    if image_refs.len() > 1 && !dimension.is_sequence() {
        return Err(schema(line, "image_refs", format!("{dimension} items take a single image")));
    }

    Ok(VqaSample { id, lang, dimension, question, options, answer, image_refs, line })
}

/// Parses JSONL text; blank lines are ignored.
pub fn parse_dataset(text: &str) -> Result<Vec<VqaSample>, EvalError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let value: Value =
            serde_json::from_str(raw).map_err(|e| EvalError::ParseError { line, message: e.to_string() })?;
        let sample = parse_sample(value, line)?;
        if !seen.insert(sample.id.clone()) {
            return Err(EvalError::DuplicateId { id: sample.id, line });
        }
        out.push(sample);
    }
    Ok(out)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<VqaSample>, EvalError> {
    parse_dataset(&std::fs::read_to_string(path)?)
}
