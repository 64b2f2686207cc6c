//! Allocation-only core of `promptq`.
//!
//! Everything in this crate is pure: it never touches the filesystem, the
//! network or a clock. Callers pass in text, values and instants, and get
//! typed records, plans and decisions back. The `promptq` crate layers the
//! async scheduler, HTTP adapters, the pipeline data folder and the CLI on
//! top of it.

#![no_std]

extern crate alloc;

pub mod completed;
pub mod content;
pub mod dotenv;
pub mod judge;
pub mod naming;
pub mod outcome;
pub mod parse;
pub mod profile;
pub mod queue;
pub mod rate;
pub mod record;

pub use completed::{CompletedRecord, Outcome};
pub use content::{classify_prompt_content, ContentError, Message, PromptContent, Role};
pub use outcome::{classify_status, AttemptOutcome, StatusClass};
pub use parse::{parse_experiment, parse_line, InvalidLine, Issue, ParsedExperiment, ParsedLine, ValidationReport};
pub use queue::{plan_queues, PlanWarning, Queue, QueuePlan, QueueSettings};
pub use rate::{launch_interval, BackoffPolicy, Qpm};
pub use record::PromptRecord;

/// JSON object type used for records on the wire.
pub type JsonMap = serde_json::Map<alloc::string::String, serde_json::Value>;
