//! `.env` parsing and credential naming.
//!
//! Format: `KEY=VALUE` per line. Blank lines and lines whose first
//! non-space character is `#` are ignored. The value is everything after the
//! first `=`, taken literally.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnvWarning {
    pub line_number: usize,
    pub reason: &'static str,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EnvFile {
    /// Entries in file order; a repeated key keeps the later value when merged.
    pub entries: Vec<(String, String)>,
    pub warnings: Vec<EnvWarning>,
}

pub fn parse_env(text: &str) -> EnvFile {
    let mut out = EnvFile::default();
    for (idx, line) in crate::parse::lines(text).enumerate() {
        let trimmed = line.trim_start();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let warn = |reason| EnvWarning {
            line_number: idx + 1,
            reason,
        };
        let Some((key, value)) = trimmed.split_once('=') else {
            out.warnings.push(warn("expected KEY=VALUE"));
            continue;
        };
        let key = key.trim_end();
        if key.is_empty() {
            out.warnings.push(warn("empty key"));
        } else if key.chars().any(char::is_whitespace) {
            out.warnings.push(warn("key contains whitespace"));
        } else {
            out.entries.push((key.to_string(), value.to_string()));
        }
    }
    out
}

/// Environment variable holding the key for an api: `openai` -> `OPENAI_API_KEY`.
pub fn credential_var(api: &str) -> String {
    let mut name = env_prefix(api);
    name.push_str("_API_KEY");
    name
}

/// Environment variable overriding an api's base URL: `ollama` -> `OLLAMA_BASE_URL`.
pub fn base_url_var(api: &str) -> String {
    let mut name = env_prefix(api);
    name.push_str("_BASE_URL");
    name
}

fn env_prefix(api: &str) -> String {
    api.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() {
                c.to_ascii_uppercase()
            } else {
                '_'
            }
        })
        .collect()
}
