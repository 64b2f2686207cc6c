//! The three accepted shapes of a record's `prompt` value.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }

    pub fn parse(s: &str) -> Option<Role> {
        match s {
            "system" => Some(Role::System),
            "user" => Some(Role::User),
            "assistant" => Some(Role::Assistant),
            _ => None,
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
        }
    }
}

/// A prompt as it appears under the `prompt` key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PromptContent {
    /// A single user message.
    SingleText(String),
    /// User turns sent one after another in the same conversation.
    UserTurnSequence(Vec<String>),
    /// A conversation history sent as-is.
    ChatHistory(Vec<Message>),
}

impl PromptContent {
    /// Number of user turns that are sent (and therefore answered) when this
    /// prompt is executed.
    pub fn turns_sent(&self) -> usize {
        match self {
            PromptContent::SingleText(_) | PromptContent::ChatHistory(_) => 1,
            PromptContent::UserTurnSequence(turns) => turns.len(),
        }
    }

    /// The text of the last user message, if any.
    pub fn last_user_text(&self) -> Option<&str> {
        match self {
            PromptContent::SingleText(s) => Some(s),
            PromptContent::UserTurnSequence(turns) => turns.last().map(String::as_str),
            PromptContent::ChatHistory(msgs) => msgs
                .iter()
                .rev()
                .find(|m| m.role == Role::User)
                .map(|m| m.content.as_str()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ContentError {
    #[error("prompt must be a string, a list of strings or a list of role/content objects")]
    WrongType,
    #[error("prompt is empty")]
    Empty,
    #[error("prompt list is empty")]
    EmptyList,
    #[error("prompt list mixes strings and objects")]
    MixedList,
    #[error("turn {index} is empty")]
    EmptyTurn { index: usize },
    #[error("message {index} is missing a string \"{key}\"")]
    MissingKey { index: usize, key: &'static str },
    #[error("message {index} has unknown role \"{role}\"")]
    UnknownRole { index: usize, role: String },
    #[error("message {index}: a system message may only appear first")]
    MisplacedSystem { index: usize },
    #[error("message {index} has empty content for role {role}")]
    EmptyContent { index: usize, role: Role },
}

/// Classifies a raw `prompt` value into one of the three accepted forms.
pub fn classify_prompt_content(raw: &Value) -> Result<PromptContent, ContentError> {
    match raw {
        Value::String(s) if s.is_empty() => Err(ContentError::Empty),
        Value::String(s) => Ok(PromptContent::SingleText(s.clone())),
        Value::Array(items) => classify_list(items),
        _ => Err(ContentError::WrongType),
    }
}

fn classify_list(items: &[Value]) -> Result<PromptContent, ContentError> {
    let first = items.first().ok_or(ContentError::EmptyList)?;
    match first {
        Value::String(_) => {
            let mut turns = Vec::with_capacity(items.len());
            for (index, item) in items.iter().enumerate() {
                match item {
                    Value::String(s) if s.is_empty() => return Err(ContentError::EmptyTurn { index }),
                    Value::String(s) => turns.push(s.clone()),
                    Value::Object(_) => return Err(ContentError::MixedList),
                    _ => return Err(ContentError::WrongType),
                }
            }
            Ok(PromptContent::UserTurnSequence(turns))
        }
        Value::Object(_) => {
            let mut msgs = Vec::with_capacity(items.len());
            for (index, item) in items.iter().enumerate() {
                let obj = match item {
                    Value::Object(obj) => obj,
                    Value::String(_) => return Err(ContentError::MixedList),
                    _ => return Err(ContentError::WrongType),
                };
                let role = obj
                    .get("role")
                    .and_then(Value::as_str)
                    .ok_or(ContentError::MissingKey { index, key: "role" })?;
                let role = Role::parse(role).ok_or_else(|| ContentError::UnknownRole {
                    index,
                    role: role.to_string(),
                })?;
                let content = obj
                    .get("content")
                    .and_then(Value::as_str)
                    .ok_or(ContentError::MissingKey { index, key: "content" })?;
                if role == Role::System && index != 0 {
                    return Err(ContentError::MisplacedSystem { index });
                }
                if content.is_empty() && role != Role::Assistant {
                    return Err(ContentError::EmptyContent { index, role });
                }
                msgs.push(Message::new(role, content));
            }
            Ok(PromptContent::ChatHistory(msgs))
        }
        _ => Err(ContentError::WrongType),
    }
}
