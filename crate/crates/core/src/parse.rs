//! Line-by-line parsing and validation of experiment files.
//!
//! A bad line never aborts a parse. Each non-blank line ends up either as a
//! [`PromptRecord`] or as an [`InvalidLine`] carrying its issues, so callers can
//! still emit one output line per input line.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde_json::Value;

use crate::content::classify_prompt_content;
use crate::record::PromptRecord;
use crate::JsonMap;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Issue {
    pub line_number: usize,
    pub field: String,
    pub message: String,
}

impl Issue {
    fn new(line_number: usize, field: &str, message: impl Into<String>) -> Self {
        Self {
            line_number,
            field: field.to_string(),
            message: message.into(),
        }
    }
}

impl core::fmt::Display for Issue {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "line {}: {}: {}", self.line_number, self.field, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub total_lines: usize,
    pub blank_lines: usize,
    pub valid_count: usize,
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    /// Number of distinct lines with at least one issue.
    pub fn invalid_lines(&self) -> usize {
        self.issues.iter().map(|i| i.line_number).collect::<BTreeSet<_>>().len()
    }

    pub fn is_clean(&self) -> bool {
        self.issues.is_empty()
    }
}

/// A non-blank line that did not validate.
#[derive(Debug, Clone, PartialEq)]
pub struct InvalidLine {
    pub line_number: usize,
    pub id: String,
    /// The parsed object when the line was a JSON object.
    pub source: Option<JsonMap>,
    pub raw: String,
    pub issues: Vec<Issue>,
}

impl InvalidLine {
    /// Error text stored on the output record for this line.
    pub fn error_message(&self) -> String {
        let details: Vec<String> = self
            .issues
            .iter()
            .map(|i| format!("{}: {}", i.field, i.message))
            .collect();
        format!("validation: {}", details.join("; "))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParsedLine {
    Valid(PromptRecord),
    Invalid(InvalidLine),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedExperiment {
    /// Non-blank lines in input order.
    pub lines: Vec<ParsedLine>,
    pub report: ValidationReport,
}

impl ParsedExperiment {
    pub fn records(&self) -> impl Iterator<Item = &PromptRecord> {
        self.lines.iter().filter_map(|l| match l {
            ParsedLine::Valid(r) => Some(r),
            ParsedLine::Invalid(_) => None,
        })
    }

    pub fn invalid(&self) -> impl Iterator<Item = &InvalidLine> {
        self.lines.iter().filter_map(|l| match l {
            ParsedLine::Invalid(i) => Some(i),
            ParsedLine::Valid(_) => None,
        })
    }

    /// Splits into owned valid records and invalid lines.
    pub fn into_parts(self) -> (Vec<PromptRecord>, Vec<InvalidLine>, ValidationReport) {
        let mut valid = Vec::new();
        let mut invalid = Vec::new();
        for line in self.lines {
            match line {
                ParsedLine::Valid(r) => valid.push(r),
                ParsedLine::Invalid(i) => invalid.push(i),
            }
        }
        (valid, invalid, self.report)
    }
}

/// Splits JSONL text into lines. A trailing newline does not start a line and
/// a trailing `\r` is dropped.
pub fn lines(text: &str) -> impl Iterator<Item = &str> {
    let body = text.strip_suffix('\n').unwrap_or(text);
    let empty = text.is_empty();
    body.split('\n')
        .filter(move |_| !empty)
        .map(|l| l.strip_suffix('\r').unwrap_or(l))
}

/// Parses and validates a whole experiment file held in memory.
pub fn parse_experiment(text: &str) -> ParsedExperiment {
    let mut out = ParsedExperiment::default();
    let mut seen_ids = BTreeSet::new();
    for (idx, line) in lines(text).enumerate() {
        let line_number = idx + 1;
        out.report.total_lines += 1;
        if line.trim().is_empty() {
            out.report.blank_lines += 1;
            continue;
        }
        let mut parsed = parse_line(line, line_number);
        let id = match &parsed {
            ParsedLine::Valid(r) => r.id.clone(),
            ParsedLine::Invalid(i) => i.id.clone(),
        };
        if !seen_ids.insert(id.clone()) {
            let issue = Issue::new(line_number, "id", format!("duplicate id \"{id}\""));
            parsed = match parsed {
                ParsedLine::Valid(r) => ParsedLine::Invalid(InvalidLine {
                    line_number,
                    id,
                    source: Some(r.source().clone()),
                    raw: line.to_string(),
                    issues: vec![issue],
                }),
                ParsedLine::Invalid(mut i) => {
                    i.issues.push(issue);
                    ParsedLine::Invalid(i)
                }
            };
        }
        match &parsed {
            ParsedLine::Valid(_) => out.report.valid_count += 1,
            ParsedLine::Invalid(i) => out.report.issues.extend(i.issues.iter().cloned()),
        }
        out.lines.push(parsed);
    }
    out
}

/// Parses one non-blank line.
pub fn parse_line(line: &str, line_number: usize) -> ParsedLine {
    let invalid = |source: Option<JsonMap>, id: String, issues: Vec<Issue>| {
        ParsedLine::Invalid(InvalidLine {
            line_number,
            id,
            source,
            raw: line.to_string(),
            issues,
        })
    };
    let synthetic_id = line_number.to_string();

    let value: Value = match serde_json::from_str(line) {
        Ok(v) => v,
        Err(e) => {
            return invalid(
                None,
                synthetic_id,
                vec![Issue::new(line_number, "line", format!("invalid JSON: {e}"))],
            )
        }
    };
    let Value::Object(obj) = value else {
        return invalid(
            None,
            synthetic_id,
            vec![Issue::new(line_number, "line", "expected a JSON object")],
        );
    };

    let mut issues = Vec::new();
    let id = match obj.get("id") {
        None => synthetic_id,
        Some(Value::String(s)) if !s.is_empty() => s.clone(),
        Some(Value::Number(n)) => n.to_string(),
        Some(_) => {
            issues.push(Issue::new(line_number, "id", "must be a non-empty string or a number"));
            synthetic_id
        }
    };

    let prompt = match obj.get("prompt") {
        None => {
            issues.push(Issue::new(line_number, "prompt", "missing required key"));
            None
        }
        Some(raw) => match classify_prompt_content(raw) {
            Ok(c) => Some(c),
            Err(e) => {
                issues.push(Issue::new(line_number, "prompt", e.to_string()));
                None
            }
        },
    };
    let api = required_string(&obj, "api", line_number, &mut issues);
    let model_name = required_string(&obj, "model_name", line_number, &mut issues);

    let parameters = match obj.get("parameters") {
        None | Some(Value::Null) => None,
        Some(Value::Object(p)) => Some(p.clone()),
        Some(_) => {
            issues.push(Issue::new(line_number, "parameters", "must be an object"));
            None
        }
    };
    let group = match obj.get("group") {
        None | Some(Value::Null) => None,
        Some(Value::String(g)) if !g.is_empty() => Some(g.clone()),
        Some(_) => {
            issues.push(Issue::new(line_number, "group", "must be a non-empty string"));
            None
        }
    };

    match (prompt, api, model_name) {
        (Some(prompt), Some(api), Some(model_name)) if issues.is_empty() => ParsedLine::Valid(
            PromptRecord::from_parts(id, line_number, prompt, api, model_name, parameters, group, obj),
        ),
        _ => invalid(Some(obj), id, issues),
    }
}

fn required_string(obj: &JsonMap, key: &str, line_number: usize, issues: &mut Vec<Issue>) -> Option<String> {
    match obj.get(key) {
        None => {
            issues.push(Issue::new(line_number, key, "missing required key"));
            None
        }
        Some(Value::String(s)) if s.trim().is_empty() => {
            issues.push(Issue::new(line_number, key, "must not be empty"));
            None
        }
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => {
            issues.push(Issue::new(line_number, key, "must be a string"));
            None
        }
    }
}
