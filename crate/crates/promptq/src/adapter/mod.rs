//! Endpoint adapters: one uniform `query` over different chat protocols.
//!
//! New endpoint families plug in by implementing [`EndpointAdapter`] and
//! registering an instance in an [`AdapterRegistry`].

mod chat;

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use promptq_core::dotenv::{base_url_var, credential_var};
use promptq_core::{AttemptOutcome, PromptRecord};

use crate::credentials::CredentialStore;

pub use chat::{ChatAdapter, WireFormat};

pub const OPENAI_DEFAULT_BASE: &str = "https://api.openai.com";
pub const OLLAMA_DEFAULT_BASE: &str = "http://localhost:11434";
pub const SIMULATOR_DEFAULT_BASE: &str = "http://127.0.0.1:8089";

#[async_trait]
pub trait EndpointAdapter: Send + Sync {
    fn api_name(&self) -> &str;

    /// Environment variables this adapter needs.
    fn required_credentials(&self) -> Vec<String>;

    /// Sends one record. Every failure is reported as a retryable or fatal
    /// outcome; this never panics on bad input or bad responses.
    async fn query(&self, record: &PromptRecord, timeout: Duration) -> AttemptOutcome;
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown api")]
pub struct UnknownApi(pub String);

#[derive(Default, Clone)]
pub struct AdapterRegistry {
    adapters: HashMap<String, Arc<dyn EndpointAdapter>>,
}

impl std::fmt::Debug for AdapterRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut names: Vec<_> = self.adapters.keys().collect();
        names.sort();
        f.debug_struct("AdapterRegistry").field("apis", &names).finish()
    }
}

impl AdapterRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registry with the `openai`, `ollama` and `simulator` adapters. Base
    /// URLs come from `<API>_BASE_URL` when set, and the openai key from
    /// `OPENAI_API_KEY`.
    pub fn with_builtins(creds: &CredentialStore) -> Self {
        let base = |api: &str, default: &str| creds.get(&base_url_var(api)).unwrap_or(default).to_string();
        let client = chat::default_client();
        let mut reg = Self::new();
        reg.register(ChatAdapter::new(
            "openai",
            WireFormat::OpenAi,
            base("openai", OPENAI_DEFAULT_BASE),
            Some((
                credential_var("openai"),
                creds.get(&credential_var("openai")).map(str::to_string),
            )),
            client.clone(),
        ));
        reg.register(ChatAdapter::new(
            "ollama",
            WireFormat::Ollama,
            base("ollama", OLLAMA_DEFAULT_BASE),
            None,
            client.clone(),
        ));
        reg.register(ChatAdapter::new(
            "simulator",
            WireFormat::OpenAi,
            base("simulator", SIMULATOR_DEFAULT_BASE),
            None,
            client,
        ));
        reg
    }

    pub fn register<A: EndpointAdapter + 'static>(&mut self, adapter: A) {
        self.register_arc(Arc::new(adapter));
    }

    pub fn register_arc(&mut self, adapter: Arc<dyn EndpointAdapter>) {
        self.adapters.insert(adapter.api_name().to_string(), adapter);
    }

    pub fn resolve(&self, api_name: &str) -> Result<Arc<dyn EndpointAdapter>, UnknownApi> {
        self.adapters
            .get(api_name)
            .cloned()
            .ok_or_else(|| UnknownApi(api_name.to_string()))
    }

    pub fn api_names(&self) -> impl Iterator<Item = &str> {
        self.adapters.keys().map(String::as_str)
    }
}
