//! Building judge experiments from completed files.
//!
//! Each completed record with a response becomes a new prompt record whose
//! text is a template with the original prompt and response substituted in.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde_json::Value;

use crate::completed::response_text;
use crate::JsonMap;

pub const INPUT_PLACEHOLDER: &str = "{INPUT_PROMPT}";
pub const OUTPUT_PLACEHOLDER: &str = "{OUTPUT_RESPONSE}";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TemplateError {
    #[error("judge template is missing the {0} placeholder")]
    MissingPlaceholder(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JudgeTemplate(String);

impl JudgeTemplate {
    pub fn new(text: impl Into<String>) -> Result<Self, TemplateError> {
        let text = text.into();
        for p in [INPUT_PLACEHOLDER, OUTPUT_PLACEHOLDER] {
            if !text.contains(p) {
                return Err(TemplateError::MissingPlaceholder(p));
            }
        }
        Ok(Self(text))
    }

    /// Substitutes both placeholders in a single left-to-right pass, so text
    /// that itself contains a placeholder is not expanded again.
    pub fn render(&self, input: &str, output: &str) -> String {
        let mut out = String::with_capacity(self.0.len() + input.len() + output.len());
        let mut rest = self.0.as_str();
        loop {
            let next = [(INPUT_PLACEHOLDER, input), (OUTPUT_PLACEHOLDER, output)]
                .into_iter()
                .filter_map(|(p, v)| rest.find(p).map(|at| (at, p, v)))
                .min_by_key(|(at, _, _)| *at);
            match next {
                Some((at, p, v)) => {
                    out.push_str(&rest[..at]);
                    out.push_str(v);
                    rest = &rest[at + p.len()..];
                }
                None => {
                    out.push_str(rest);
                    return out;
                }
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct JudgeOutput {
    pub records: Vec<JsonMap>,
    /// Completed records without a response.
    pub skipped: usize,
}

/// Renders a `prompt` value as text: strings verbatim, turn lists one per
/// line, chat histories as `role: content` lines.
pub fn prompt_text(prompt: &Value) -> String {
    match prompt {
        Value::String(s) => s.clone(),
        Value::Array(items) => items
            .iter()
            .map(|item| match item {
                Value::String(s) => s.clone(),
                Value::Object(m) => format!(
                    "{}: {}",
                    m.get("role").and_then(Value::as_str).unwrap_or("?"),
                    m.get("content").and_then(Value::as_str).unwrap_or("")
                ),
                other => format!("{other}"),
            })
            .collect::<Vec<_>>()
            .join("\n"),
        other => format!("{other}"),
    }
}

pub fn generate_judge_records<I>(
    completed: I,
    template: &JudgeTemplate,
    judge_api: &str,
    judge_model: &str,
) -> JudgeOutput
where
    I: IntoIterator<Item = JsonMap>,
{
    let mut out = JudgeOutput::default();
    for (idx, rec) in completed.into_iter().enumerate() {
        let Some(response) = rec.get("response").filter(|r| !r.is_null()) else {
            out.skipped += 1;
            continue;
        };
        let prompt = rec.get("prompt").map(prompt_text).unwrap_or_default();
        let rendered = template.render(&prompt, &response_text(response));
        let source_id = match rec.get("id") {
            Some(Value::String(s)) => s.clone(),
            Some(other) => format!("{other}"),
            None => format!("{}", idx + 1),
        };
        let mut judge = JsonMap::new();
        judge.insert("id".into(), Value::String(format!("judge-{source_id}")));
        judge.insert("prompt".into(), Value::String(rendered));
        judge.insert("api".into(), Value::String(judge_api.into()));
        judge.insert("model_name".into(), Value::String(judge_model.into()));
        judge.insert("input".into(), Value::Object(rec));
        out.records.push(judge);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn obj(v: Value) -> JsonMap {
        match v {
            Value::Object(m) => m,
            _ => unreachable!(),
        }
    }

    #[test]
    fn direct_substitution() {
        let t = JudgeTemplate::new("Rate: {INPUT_PROMPT} / {OUTPUT_RESPONSE}").unwrap();
        let out = generate_judge_records(
            [obj(
                json!({"id": "1", "prompt": "p", "api": "a", "model_name": "m", "response": "r"}),
            )],
            &t,
            "openai",
            "gpt-4o",
        );
        assert_eq!(out.skipped, 0);
        let j = &out.records[0];
        assert_eq!(j["prompt"], "Rate: p / r");
        assert_eq!(j["api"], "openai");
        assert_eq!(j["model_name"], "gpt-4o");
        assert_eq!(j["id"], "judge-1");
        assert_eq!(j["input"]["response"], "r");
    }

    #[test]
    fn missing_placeholders_are_refused() {
        assert_eq!(
            JudgeTemplate::new("only {INPUT_PROMPT}"),
            Err(TemplateError::MissingPlaceholder(OUTPUT_PLACEHOLDER))
        );
        assert_eq!(
            JudgeTemplate::new("only {OUTPUT_RESPONSE}"),
            Err(TemplateError::MissingPlaceholder(INPUT_PLACEHOLDER))
        );
    }

    #[test]
    fn error_records_are_skipped_and_counted() {
        let t = JudgeTemplate::new("{INPUT_PROMPT}|{OUTPUT_RESPONSE}").unwrap();
        let rows = [
            json!({"id": "1", "prompt": "a", "response": "x"}),
            json!({"id": "2", "prompt": "b", "error": "max attempts exceeded: boom"}),
            json!({"id": "3", "prompt": "c", "response": "y"}),
            json!({"id": "4", "prompt": "d", "response": "z"}),
        ];
        let out = generate_judge_records(rows.into_iter().map(obj), &t, "j", "m");
        assert_eq!(out.records.len(), 3);
        assert_eq!(out.skipped, 1);
    }

    #[test]
    fn substituted_text_is_not_reexpanded() {
        let t = JudgeTemplate::new("[{OUTPUT_RESPONSE}] [{INPUT_PROMPT}] {INPUT_PROMPT}").unwrap();
        assert_eq!(
            t.render("{OUTPUT_RESPONSE}", "o"),
            "[o] [{OUTPUT_RESPONSE}] {OUTPUT_RESPONSE}"
        );
    }

    #[test]
    fn structured_prompts_render_as_text() {
        assert_eq!(prompt_text(&json!(["a", "b"])), "a\nb");
        assert_eq!(
            prompt_text(&json!([{"role": "user", "content": "hi"}, {"role": "assistant", "content": "yo"}])),
            "user: hi\nassistant: yo"
        );
    }
}
