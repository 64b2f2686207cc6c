use std::collections::BTreeMap;
use std::num::NonZeroU32;
use std::path::PathBuf;
use std::time::Duration;

use promptq_core::{BackoffPolicy, Qpm, QueueSettings};

/// How a queue launches its requests.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum DispatchMode {
    /// Launch on the rate gate without waiting for earlier responses.
    #[default]
    Async,
    /// Wait for each response (retries included) before sending the next
    /// request; queues run one after another. The baseline for speedups.
    Synchronous,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSettings {
    pub data_folder: PathBuf,
    pub max_queries: Qpm,
    pub max_attempts: NonZeroU32,
    pub parallel: bool,
    pub per_queue_rates: BTreeMap<String, Qpm>,
    pub request_timeout: Duration,
    pub env_file: Option<PathBuf>,
    pub mode: DispatchMode,
    pub backoff: BackoffPolicy,
}

pub const DEFAULT_MAX_QUERIES: u32 = 10;
pub const DEFAULT_MAX_ATTEMPTS: u32 = 3;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);

impl Default for ExperimentSettings {
    fn default() -> Self {
        Self {
            data_folder: PathBuf::from("data"),
            max_queries: Qpm::new(DEFAULT_MAX_QUERIES).unwrap(),
            max_attempts: NonZeroU32::new(DEFAULT_MAX_ATTEMPTS).unwrap(),
            parallel: false,
            per_queue_rates: BTreeMap::new(),
            request_timeout: DEFAULT_TIMEOUT,
            env_file: None,
            mode: DispatchMode::Async,
            backoff: BackoffPolicy::default(),
        }
    }
}

impl ExperimentSettings {
    pub fn queue_settings(&self) -> QueueSettings {
        QueueSettings {
            max_queries: self.max_queries,
            parallel: self.parallel,
            per_queue_rates: self.per_queue_rates.clone(),
        }
    }
}
