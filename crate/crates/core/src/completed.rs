//! Output records: an input line plus its response or terminal error.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use chrono::{DateTime, SecondsFormat, Utc};
use serde_json::Value;

use crate::parse::InvalidLine;
use crate::record::PromptRecord;
use crate::JsonMap;

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Response(Value),
    Error(String),
}

/// Everything written for one input line.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletedRecord {
    pub id: String,
    pub source: JsonMap,
    pub outcome: Outcome,
    /// Attempts made against the endpoint; 0 for lines rejected by validation.
    pub attempts: u32,
    pub timestamp_sent: DateTime<Utc>,
    pub timestamp_completed: DateTime<Utc>,
}

impl CompletedRecord {
    pub fn from_record(
        record: &PromptRecord,
        outcome: Outcome,
        attempts: u32,
        sent: DateTime<Utc>,
        completed: DateTime<Utc>,
    ) -> Self {
        Self {
            id: record.id.clone(),
            source: record.source().clone(),
            outcome,
            attempts,
            timestamp_sent: sent,
            timestamp_completed: completed.max(sent),
        }
    }

    /// Error record for a line that failed validation.
    pub fn from_invalid(line: &InvalidLine, at: DateTime<Utc>) -> Self {
        let source = line.source.clone().unwrap_or_else(|| {
            let mut m = JsonMap::new();
            m.insert("raw_line".into(), Value::String(line.raw.clone()));
            m
        });
        Self {
            id: line.id.clone(),
            source,
            outcome: Outcome::Error(line.error_message()),
            attempts: 0,
            timestamp_sent: at,
            timestamp_completed: at,
        }
    }

    pub fn is_success(&self) -> bool {
        matches!(self.outcome, Outcome::Response(_))
    }

    /// The output object: every input key, plus `id`, the outcome and timing.
    pub fn to_json(&self) -> JsonMap {
        let mut out = self.source.clone();
        if !out.contains_key("id") {
            out.insert("id".into(), Value::String(self.id.clone()));
        }
        out.remove("response");
        out.remove("error");
        match &self.outcome {
            Outcome::Response(r) => out.insert("response".into(), r.clone()),
            Outcome::Error(e) => out.insert("error".into(), Value::String(e.clone())),
        };
        out.insert("timestamp_sent".into(), Value::String(stamp(&self.timestamp_sent)));
        out.insert(
            "timestamp_completed".into(),
            Value::String(stamp(&self.timestamp_completed)),
        );
        out.insert("attempts".into(), Value::from(self.attempts));
        out
    }

    /// One JSONL line, without the trailing newline.
    pub fn to_line(&self) -> String {
        // Serializing a map of JSON values cannot fail.
        serde_json::to_string(&self.to_json()).unwrap_or_default()
    }
}

fn stamp(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Millis, true)
}

/// Parses a completed file into objects, skipping blank lines. Returns the
/// 1-based numbers of lines that are not JSON objects alongside.
pub fn parse_completed(text: &str) -> (Vec<JsonMap>, Vec<usize>) {
    let mut records = Vec::new();
    let mut bad = Vec::new();
    for (idx, line) in crate::parse::lines(text).enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<Value>(line) {
            Ok(Value::Object(m)) => records.push(m),
            _ => bad.push(idx + 1),
        }
    }
    (records, bad)
}

/// Renders a response value as plain text: strings verbatim, lists of
/// strings joined by newlines, anything else as JSON.
pub fn response_text(value: &Value) -> String {
    match value {
        Value::String(s) => s.clone(),
        Value::Array(items) if items.iter().all(Value::is_string) => {
            items.iter().filter_map(Value::as_str).collect::<Vec<_>>().join("\n")
        }
        other => other.to_string(),
    }
}
