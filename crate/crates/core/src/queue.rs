//! Partitioning records into rate-limited dispatch queues.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::rate::Qpm;
use crate::record::PromptRecord;

/// Key of the single queue used when queues are not split.
pub const ALL_QUEUE: &str = "all";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueueSettings {
    /// Default rate for every queue.
    pub max_queries: Qpm,
    /// Split records by group (or api when ungrouped) into concurrent queues.
    pub parallel: bool,
    pub per_queue_rates: BTreeMap<String, Qpm>,
}

impl QueueSettings {
    pub fn new(max_queries: Qpm) -> Self {
        Self {
            max_queries,
            parallel: false,
            per_queue_rates: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Queue {
    pub key: String,
    pub records: Vec<PromptRecord>,
    pub rate: Qpm,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct QueuePlan {
    pub queues: Vec<Queue>,
}

impl QueuePlan {
    pub fn record_count(&self) -> usize {
        self.queues.iter().map(|q| q.records.len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PlanWarning {
    #[error("rate given for queue \"{0}\" but no record falls in it")]
    UnmatchedRate(String),
}

/// Builds the dispatch queues for a set of validated records.
///
/// Queues appear in order of their first record and keep input order inside.
pub fn plan_queues(records: Vec<PromptRecord>, settings: &QueueSettings) -> (QueuePlan, Vec<PlanWarning>) {
    let mut queues: Vec<Queue> = Vec::new();
    for record in records {
        let key = if settings.parallel {
            record.queue_key()
        } else {
            ALL_QUEUE
        };
        match queues.iter_mut().find(|q| q.key == key) {
            Some(q) => q.records.push(record),
            None => {
                let key = key.to_string();
                let rate = settings
                    .per_queue_rates
                    .get(&key)
                    .copied()
                    .unwrap_or(settings.max_queries);
                queues.push(Queue {
                    key,
                    records: alloc::vec![record],
                    rate,
                });
            }
        }
    }
    let warnings = settings
        .per_queue_rates
        .keys()
        .filter(|k| !queues.iter().any(|q| &q.key == *k))
        .map(|k| PlanWarning::UnmatchedRate(k.clone()))
        .collect();
    (QueuePlan { queues }, warnings)
}
