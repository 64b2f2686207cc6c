//! Rate-gated asynchronous dispatch of queue plans.
//!
//! Each queue owns a [`RateGate`] that hands out launch slots spaced by
//! `60 s / rate`. A record is launched when it gets a slot and its request
//! then runs on its own task, so later launches never wait for earlier
//! responses. Retries take a fresh slot after their backoff sleep. Queues run
//! concurrently with one another.

use std::io;
use std::num::NonZeroU32;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use chrono::Utc;
use promptq_core::{
    launch_interval, AttemptOutcome, BackoffPolicy, CompletedRecord, Outcome, PromptRecord, Qpm, QueuePlan,
};
use tokio::task::JoinSet;
use tokio::time::Instant;
use tokio_util::sync::CancellationToken;

use crate::adapter::{AdapterRegistry, EndpointAdapter};
use crate::settings::{DispatchMode, ExperimentSettings};

/// Fixed-interval launch gate for one queue.
#[derive(Debug)]
pub struct RateGate {
    interval: Duration,
    next: Mutex<Option<Instant>>,
}

impl RateGate {
    pub fn new(rate: Qpm) -> Self {
        Self {
            interval: launch_interval(rate),
            next: Mutex::new(None),
        }
    }

    pub fn interval(&self) -> Duration {
        self.interval
    }

    /// Reserves the next free slot and sleeps until it. Slots are handed out
    /// in call order and never closer than the interval.
    pub async fn acquire(&self) -> Instant {
        let slot = {
            let mut next = self.next.lock().unwrap_or_else(|e| e.into_inner());
            let now = Instant::now();
            let slot = match *next {
                Some(n) if n > now => n,
                _ => now,
            };
            *next = Some(slot + self.interval);
            slot
        };
        tokio::time::sleep_until(slot).await;
        slot
    }
}

/// Source of the uniform sample that scales each backoff sleep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Jitter {
    /// Uniform in `[0, 1)`.
    Full,
    /// Always this fraction of the backoff ceiling.
    Fixed(f64),
}

impl Jitter {
    fn sample(self) -> f64 {
        match self {
            Jitter::Full => rand::random::<f64>(),
            Jitter::Fixed(u) => u,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: NonZeroU32,
    pub timeout: Duration,
    pub backoff: BackoffPolicy,
    pub jitter: Jitter,
}

impl RetryPolicy {
    pub fn from_settings(settings: &ExperimentSettings) -> Self {
        Self {
            max_attempts: settings.max_attempts,
            timeout: settings.request_timeout,
            backoff: settings.backoff,
            jitter: Jitter::Full,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceOutcome {
    Success,
    Retryable(String),
    Fatal(String),
}

/// What happened on one attempt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttemptTrace {
    pub attempt: u32,
    pub outcome: TraceOutcome,
    pub latency: Duration,
    /// Sleep taken before the next attempt, if there was one.
    pub backoff: Option<Duration>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub queue: String,
    pub record: CompletedRecord,
    pub traces: Vec<AttemptTrace>,
}

/// Receives completed records, possibly from many tasks at once.
pub trait CompletionSink: Send + Sync {
    fn accept(&self, completion: &Completion) -> io::Result<()>;
}

/// Collects completions in memory.
#[derive(Debug, Default)]
pub struct MemorySink {
    items: Mutex<Vec<Completion>>,
}

impl MemorySink {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn take(&self) -> Vec<Completion> {
        std::mem::take(&mut *self.items.lock().unwrap_or_else(|e| e.into_inner()))
    }
}

impl CompletionSink for MemorySink {
    fn accept(&self, completion: &Completion) -> io::Result<()> {
        self.items
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push(completion.clone());
        Ok(())
    }
}

/// Sends `record` until it succeeds, fails fatally or runs out of attempts.
/// The first attempt goes out immediately; later ones sleep their backoff
/// and then wait for a slot on `gate` when one is given.
pub async fn send_with_retry(
    record: &PromptRecord,
    adapter: &dyn EndpointAdapter,
    policy: &RetryPolicy,
    gate: Option<&RateGate>,
) -> (CompletedRecord, Vec<AttemptTrace>) {
    send_until(record, adapter, policy, gate, &CancellationToken::new()).await
}

async fn send_until(
    record: &PromptRecord,
    adapter: &dyn EndpointAdapter,
    policy: &RetryPolicy,
    gate: Option<&RateGate>,
    cancel: &CancellationToken,
) -> (CompletedRecord, Vec<AttemptTrace>) {
    let sent = Utc::now();
    let max = policy.max_attempts.get();
    let mut traces: Vec<AttemptTrace> = Vec::new();
    let mut attempt = 1;
    let outcome = loop {
        let started = Instant::now();
        let result = match tokio::time::timeout(policy.timeout, adapter.query(record, policy.timeout)).await {
            Ok(outcome) => outcome,
            Err(_) => AttemptOutcome::RetryableFailure("timeout".into()),
        };
        let latency = started.elapsed();
        let (trace_outcome, done) = match result {
            AttemptOutcome::Success(response) => (TraceOutcome::Success, Some(Outcome::Response(response))),
            AttemptOutcome::FatalFailure(reason) => (TraceOutcome::Fatal(reason.clone()), Some(Outcome::Error(reason))),
            AttemptOutcome::RetryableFailure(reason) if attempt >= max => (
                TraceOutcome::Retryable(reason.clone()),
                Some(Outcome::Error(format!("max attempts exceeded: {reason}"))),
            ),
            AttemptOutcome::RetryableFailure(reason) => (TraceOutcome::Retryable(reason), None),
        };
        traces.push(AttemptTrace {
            attempt,
            outcome: trace_outcome,
            latency,
            backoff: None,
        });
        if let Some(done) = done {
            break done;
        }

        let pause = policy.backoff.delay(attempt, policy.jitter.sample());
        if let Some(last) = traces.last_mut() {
            last.backoff = Some(pause);
        }
        let waited = tokio::select! {
            _ = cancel.cancelled() => false,
            _ = async {
                tokio::time::sleep(pause).await;
                if let Some(gate) = gate {
                    gate.acquire().await;
                }
            } => true,
        };
        if !waited {
            let reason = match &traces[traces.len() - 1].outcome {
                TraceOutcome::Retryable(r) => r.clone(),
                _ => String::new(),
            };
            break Outcome::Error(format!("interrupted: {reason}"));
        }
        attempt += 1;
    };
    let completed = CompletedRecord::from_record(record, outcome, attempt, sent, Utc::now());
    (completed, traces)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueueSummary {
    pub key: String,
    pub rate: Qpm,
    pub records: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub successes: usize,
    pub errors: usize,
    pub wall_time: Duration,
    pub queues: Vec<QueueSummary>,
    /// Stopped early by the shutdown token; some records were not launched.
    pub interrupted: bool,
}

impl RunSummary {
    pub fn delivered(&self) -> usize {
        self.successes + self.errors
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("writing a completed record failed: {0}")]
    Sink(#[from] io::Error),
}

struct Counted {
    inner: Arc<dyn CompletionSink>,
    successes: AtomicUsize,
    errors: AtomicUsize,
}

impl Counted {
    fn deliver(&self, completion: &Completion) -> io::Result<()> {
        self.inner.accept(completion)?;
        if completion.record.is_success() {
            self.successes.fetch_add(1, Ordering::Relaxed);
        } else {
            self.errors.fetch_add(1, Ordering::Relaxed);
        }
        Ok(())
    }
}

#[derive(Clone)]
struct Shared {
    registry: AdapterRegistry,
    policy: RetryPolicy,
    sink: Arc<Counted>,
    shutdown: CancellationToken,
}

/// Runs every record of `plan` and hands each completion to `sink` exactly
/// once, in completion order.
///
/// Cancelling `shutdown` stops new launches; requests already in flight
/// finish (pending retries give up) and are still delivered. A sink error
/// aborts the whole run.
pub async fn run_experiment(
    plan: QueuePlan,
    registry: &AdapterRegistry,
    policy: &RetryPolicy,
    mode: DispatchMode,
    sink: Arc<dyn CompletionSink>,
    shutdown: CancellationToken,
) -> Result<RunSummary, RunError> {
    let start = Instant::now();
    let queues: Vec<QueueSummary> = plan
        .queues
        .iter()
        .map(|q| QueueSummary {
            key: q.key.clone(),
            rate: q.rate,
            records: q.records.len(),
        })
        .collect();
    let shared = Shared {
        registry: registry.clone(),
        policy: *policy,
        sink: Arc::new(Counted {
            inner: sink,
            successes: AtomicUsize::new(0),
            errors: AtomicUsize::new(0),
        }),
        shutdown: shutdown.clone(),
    };

    match mode {
        DispatchMode::Async => {
            let mut tasks = JoinSet::new();
            for queue in plan.queues {
                tasks.spawn(run_queue_async(queue, shared.clone()));
            }
            while let Some(joined) = tasks.join_next().await {
                if let Err(e) = flatten(joined) {
                    tasks.abort_all();
                    return Err(e.into());
                }
            }
        }
        DispatchMode::Synchronous => {
            for queue in plan.queues {
                for record in queue.records {
                    if shutdown.is_cancelled() {
                        break;
                    }
                    let completion = dispatch_one(&record, &queue.key, None, &shared).await;
                    shared.sink.deliver(&completion)?;
                }
            }
        }
    }

    let successes = shared.sink.successes.load(Ordering::Relaxed);
    let errors = shared.sink.errors.load(Ordering::Relaxed);
    let total: usize = queues.iter().map(|q| q.records).sum();
    Ok(RunSummary {
        successes,
        errors,
        wall_time: start.elapsed(),
        interrupted: successes + errors < total,
        queues,
    })
}

fn flatten(joined: Result<io::Result<()>, tokio::task::JoinError>) -> io::Result<()> {
    match joined {
        Ok(r) => r,
        Err(e) if e.is_panic() => std::panic::resume_unwind(e.into_panic()),
        Err(_) => Ok(()),
    }
}

async fn dispatch_one(record: &PromptRecord, queue: &str, gate: Option<&RateGate>, shared: &Shared) -> Completion {
    let (record, traces) = match shared.registry.resolve(&record.api) {
        Ok(adapter) => send_until(record, adapter.as_ref(), &shared.policy, gate, &shared.shutdown).await,
        Err(unknown) => {
            let now = Utc::now();
            let completed = CompletedRecord::from_record(record, Outcome::Error(unknown.to_string()), 1, now, now);
            let trace = AttemptTrace {
                attempt: 1,
                outcome: TraceOutcome::Fatal(unknown.to_string()),
                latency: Duration::ZERO,
                backoff: None,
            };
            (completed, vec![trace])
        }
    };
    Completion {
        queue: queue.to_string(),
        record,
        traces,
    }
}

async fn run_queue_async(queue: promptq_core::Queue, shared: Shared) -> io::Result<()> {
    let gate = Arc::new(RateGate::new(queue.rate));
    let key: Arc<str> = Arc::from(queue.key.as_str());
    let mut inflight = JoinSet::new();
    for record in queue.records {
        if shared.registry.resolve(&record.api).is_ok() {
            tokio::select! {
                biased;
                _ = shared.shutdown.cancelled() => break,
                _ = gate.acquire() => {}
            }
        }
        while let Some(joined) = inflight.try_join_next() {
            flatten(joined)?;
        }
        let (gate, key, shared) = (gate.clone(), key.clone(), shared.clone());
        inflight.spawn(async move {
            let completion = dispatch_one(&record, &key, Some(&gate), &shared).await;
            shared.sink.deliver(&completion)
        });
    }
    while let Some(joined) = inflight.join_next().await {
        flatten(joined)?;
    }
    Ok(())
}
