//! Asynchronous, rate-limited batch querying of model-serving endpoints.
//!
//! An experiment is a JSONL file of prompt records. [`pipeline::process_experiment`]
//! moves it into the data folder's output tree, splits its records into
//! rate-gated queues and sends them through [`adapter`]s, appending each
//! result to a timestamped completed file as it arrives.
//! [`pipeline::watch_input`] does the same for every file dropped into the
//! input folder. [`simulator`] is a local stand-in endpoint with controllable
//! latency, quotas and faults.

pub mod adapter;
pub mod cli;
pub mod credentials;
pub mod pipeline;
pub mod scheduler;
pub mod settings;
pub mod simulator;
pub mod store;

pub use promptq_core as core;
