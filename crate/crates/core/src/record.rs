use alloc::string::String;

use crate::content::PromptContent;
use crate::JsonMap;

/// Keys with a meaning of their own. Everything else on a line is carried in
/// [`PromptRecord::extra`].
pub const KNOWN_KEYS: [&str; 6] = ["id", "prompt", "api", "model_name", "parameters", "group"];

/// One validated line of an experiment file.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptRecord {
    pub id: String,
    /// 1-based line in the source file.
    pub line_number: usize,
    pub prompt: PromptContent,
    pub api: String,
    pub model_name: String,
    pub parameters: Option<JsonMap>,
    pub group: Option<String>,
    pub extra: JsonMap,
    source: JsonMap,
}

impl PromptRecord {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_parts(
        id: String,
        line_number: usize,
        prompt: PromptContent,
        api: String,
        model_name: String,
        parameters: Option<JsonMap>,
        group: Option<String>,
        source: JsonMap,
    ) -> Self {
        let extra = source
            .iter()
            .filter(|(k, _)| !KNOWN_KEYS.contains(&k.as_str()))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        Self {
            id,
            line_number,
            prompt,
            api,
            model_name,
            parameters,
            group,
            extra,
            source,
        }
    }

    /// The JSON object exactly as it was read.
    pub fn source(&self) -> &JsonMap {
        &self.source
    }

    /// Key used to place this record in a dispatch queue when queues are
    /// split: the group when present, otherwise the api.
    pub fn queue_key(&self) -> &str {
        self.group.as_deref().unwrap_or(&self.api)
    }
}
