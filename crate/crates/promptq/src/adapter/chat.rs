//! HTTP chat adapters for the openai-compatible and ollama wire formats.

use std::time::Duration;

use async_trait::async_trait;
use promptq_core::{classify_status, AttemptOutcome, Message, PromptContent, PromptRecord, Role, StatusClass};
use serde_json::{json, Value};

use super::EndpointAdapter;
use promptq_core::JsonMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WireFormat {
    /// `POST <base>/v1/chat/completions`, bearer auth, text from
    /// `choices[0].message.content`.
    OpenAi,
    /// `POST <base>/api/chat` with `stream: false`, text from `message.content`.
    Ollama,
}

impl WireFormat {
    pub fn path(self) -> &'static str {
        match self {
            WireFormat::OpenAi => "/v1/chat/completions",
            WireFormat::Ollama => "/api/chat",
        }
    }

    pub fn request_body(self, model: &str, messages: &[Message], parameters: Option<&JsonMap>) -> Value {
        let messages: Vec<Value> = messages
            .iter()
            .map(|m| json!({"role": m.role.as_str(), "content": m.content}))
            .collect();
        let mut body = JsonMap::new();
        match self {
            WireFormat::OpenAi => {
                if let Some(params) = parameters {
                    body.extend(params.iter().map(|(k, v)| (k.clone(), v.clone())));
                }
            }
            WireFormat::Ollama => {
                body.insert("stream".into(), Value::Bool(false));
                if let Some(params) = parameters {
                    body.insert("options".into(), Value::Object(params.clone()));
                }
            }
        }
        body.insert("model".into(), Value::String(model.to_string()));
        body.insert("messages".into(), Value::Array(messages));
        Value::Object(body)
    }

    pub fn extract_text(self, body: &Value) -> Option<String> {
        let content = match self {
            WireFormat::OpenAi => body.get("choices")?.get(0)?.get("message")?.get("content")?,
            WireFormat::Ollama => body.get("message")?.get("content")?,
        };
        content.as_str().map(str::to_string)
    }
}

pub(crate) fn default_client() -> reqwest::Client {
    reqwest::Client::builder()
        .pool_idle_timeout(Duration::from_secs(30))
        .build()
        .unwrap_or_default()
}

/// Adapter for one chat endpoint.
#[derive(Debug, Clone)]
pub struct ChatAdapter {
    api_name: String,
    wire: WireFormat,
    base_url: String,
    /// Variable name and resolved value, when the endpoint needs a key.
    credential: Option<(String, Option<String>)>,
    client: reqwest::Client,
}

impl ChatAdapter {
    pub fn new(
        api_name: impl Into<String>,
        wire: WireFormat,
        base_url: impl Into<String>,
        credential: Option<(String, Option<String>)>,
        client: reqwest::Client,
    ) -> Self {
        Self {
            api_name: api_name.into(),
            wire,
            base_url: base_url.into().trim_end_matches('/').to_string(),
            credential,
            client,
        }
    }

    /// Openai-compatible adapter using `key` as the bearer token.
    pub fn openai(base_url: impl Into<String>, key: Option<String>) -> Self {
        Self::new(
            "openai",
            WireFormat::OpenAi,
            base_url,
            Some(("OPENAI_API_KEY".into(), key)),
            default_client(),
        )
    }

    pub fn ollama(base_url: impl Into<String>) -> Self {
        Self::new("ollama", WireFormat::Ollama, base_url, None, default_client())
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    /// One request/response exchange.
    async fn exchange(
        &self,
        model: &str,
        messages: &[Message],
        parameters: Option<&JsonMap>,
        bearer: Option<&str>,
        timeout: Duration,
    ) -> Result<String, AttemptOutcome> {
        let url = format!("{}{}", self.base_url, self.wire.path());
        let mut req = self
            .client
            .post(url)
            .timeout(timeout)
            .json(&self.wire.request_body(model, messages, parameters));
        if let Some(token) = bearer {
            req = req.bearer_auth(token);
        }
        let resp = req.send().await.map_err(transport_failure)?;
        let status = resp.status().as_u16();
        let text = resp
            .text()
            .await
            .map_err(|e| AttemptOutcome::RetryableFailure(format!("truncated response: {}", e.without_url())))?;
        match classify_status(status) {
            StatusClass::Success => serde_json::from_str::<Value>(&text)
                .ok()
                .and_then(|v| self.wire.extract_text(&v))
                .ok_or_else(|| AttemptOutcome::RetryableFailure("malformed response".into())),
            StatusClass::Retryable if status == 429 => Err(AttemptOutcome::RetryableFailure("rate limited".into())),
            StatusClass::Retryable => Err(AttemptOutcome::RetryableFailure(format!("http {status}"))),
            StatusClass::Fatal => Err(AttemptOutcome::FatalFailure(format!(
                "http {status}: {}",
                snippet(&text)
            ))),
        }
    }
}

fn transport_failure(e: reqwest::Error) -> AttemptOutcome {
    let reason = if e.is_timeout() {
        "timeout".to_string()
    } else if e.is_connect() {
        "connect".to_string()
    } else {
        format!("transport: {}", e.without_url())
    };
    AttemptOutcome::RetryableFailure(reason)
}

fn snippet(body: &str) -> String {
    let msg = serde_json::from_str::<Value>(body)
        .ok()
        .and_then(|v| {
            v.pointer("/error/message")
                .or_else(|| v.get("error"))
                .and_then(Value::as_str)
                .map(str::to_string)
        })
        .unwrap_or_else(|| body.trim().to_string());
    msg.chars().take(200).collect()
}

#[async_trait]
impl EndpointAdapter for ChatAdapter {
    fn api_name(&self) -> &str {
        &self.api_name
    }

    fn required_credentials(&self) -> Vec<String> {
        self.credential.iter().map(|(name, _)| name.clone()).collect()
    }

    async fn query(&self, record: &PromptRecord, timeout: Duration) -> AttemptOutcome {
        let bearer = match &self.credential {
            None => None,
            Some((_, Some(secret))) => Some(secret.as_str()),
            Some((name, None)) => return AttemptOutcome::FatalFailure(format!("missing credential {name}")),
        };
        let model = &record.model_name;
        let params = record.parameters.as_ref();
        match &record.prompt {
            PromptContent::SingleText(text) => {
                match self
                    .exchange(
                        model,
                        &[Message::new(Role::User, text.as_str())],
                        params,
                        bearer,
                        timeout,
                    )
                    .await
                {
                    Ok(reply) => AttemptOutcome::Success(Value::String(reply)),
                    Err(outcome) => outcome,
                }
            }
            PromptContent::ChatHistory(messages) => match self.exchange(model, messages, params, bearer, timeout).await
            {
                Ok(reply) => AttemptOutcome::Success(json!([reply])),
                Err(outcome) => outcome,
            },
            PromptContent::UserTurnSequence(turns) => {
                let mut conversation = Vec::with_capacity(turns.len() * 2);
                let mut replies = Vec::with_capacity(turns.len());
                for turn in turns {
                    conversation.push(Message::new(Role::User, turn.as_str()));
                    match self.exchange(model, &conversation, params, bearer, timeout).await {
                        Ok(reply) => {
                            conversation.push(Message::new(Role::Assistant, reply.as_str()));
                            replies.push(Value::String(reply));
                        }
                        Err(outcome) => return outcome,
                    }
                }
                AttemptOutcome::Success(Value::Array(replies))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn openai_body_passes_parameters_through() {
        let params: JsonMap =
            serde_json::from_value(json!({"temperature": 0.2, "max_new_tokens": 5, "model": "x"})).unwrap();
        let body = WireFormat::OpenAi.request_body("gpt-4o", &[Message::new(Role::User, "hi")], Some(&params));
        assert_eq!(body["model"], "gpt-4o");
        assert_eq!(body["temperature"], 0.2);
        assert_eq!(body["max_new_tokens"], 5);
        assert_eq!(body["messages"], json!([{"role": "user", "content": "hi"}]));
    }

    #[test]
    fn ollama_body_disables_streaming() {
        let body = WireFormat::Ollama.request_body("llama3", &[Message::new(Role::User, "hi")], None);
        assert_eq!(body["stream"], false);
        assert_eq!(body["model"], "llama3");
        assert!(body.get("options").is_none());
    }

    #[test]
    fn extraction() {
        let openai = json!({"choices": [{"message": {"role": "assistant", "content": "Paris"}}]});
        assert_eq!(WireFormat::OpenAi.extract_text(&openai).as_deref(), Some("Paris"));
        assert_eq!(WireFormat::OpenAi.extract_text(&json!({"choices": []})), None);
        assert_eq!(
            WireFormat::OpenAi.extract_text(&json!({"choices": [{"message": {"content": null}}]})),
            None
        );
        let ollama = json!({"message": {"role": "assistant", "content": "Paris"}, "done": true});
        assert_eq!(WireFormat::Ollama.extract_text(&ollama).as_deref(), Some("Paris"));
        assert_eq!(WireFormat::Ollama.extract_text(&json!("x")), None);
    }

    #[test]
    fn snippets() {
        assert_eq!(snippet(r#"{"error":{"message":"bad key"}}"#), "bad key");
        assert_eq!(snippet(r#"{"error":"model not found"}"#), "model not found");
        assert_eq!(snippet("plain"), "plain");
        assert_eq!(snippet(&"x".repeat(500)).len(), 200);
    }
}
