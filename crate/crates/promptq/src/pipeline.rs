//! Running experiment files end to end, once or continuously.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use chrono::{Local, Utc};
use promptq_core::{parse_experiment, plan_queues, CompletedRecord, ValidationReport};
use tokio_util::sync::CancellationToken;

use crate::adapter::AdapterRegistry;
use crate::scheduler::{run_experiment, RetryPolicy, RunError, RunSummary};
use crate::settings::ExperimentSettings;
use crate::store::{DataFolder, RunArtifacts, StoreError};

#[derive(Debug)]
pub struct ExperimentReport {
    pub artifacts: RunArtifacts,
    pub validation: ValidationReport,
    pub summary: RunSummary,
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("{0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Run(#[from] RunError),
}

/// Runs one experiment file: moves it into the output folder, writes every
/// line's outcome to the completed file and logs the run.
///
/// Lines that fail validation are written first as error records, so the
/// completed file always has one line per non-blank input line.
pub async fn process_experiment(
    folder: &DataFolder,
    file: &Path,
    settings: &ExperimentSettings,
    registry: &AdapterRegistry,
    shutdown: CancellationToken,
) -> Result<ExperimentReport, PipelineError> {
    let artifacts = folder.begin_run(file, Local::now())?;
    let writer = Arc::new(artifacts.open_writer()?);
    let log = &writer.log;
    log.info(&format!(
        "starting experiment {} (run {}) from {}",
        artifacts.experiment_name,
        artifacts.stamp,
        file.display()
    ))?;

    let bytes = fs::read(&artifacts.input_path)?;
    let text = String::from_utf8(bytes).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
    let parsed = parse_experiment(&text);
    let report = parsed.report.clone();
    log.info(&format!(
        "{} lines: {} valid, {} invalid, {} blank",
        report.total_lines,
        report.valid_count,
        report.invalid_lines(),
        report.blank_lines
    ))?;

    let (records, invalid, _) = parsed.into_parts();
    for line in &invalid {
        for issue in &line.issues {
            log.warn(&format!("validation: {issue}"))?;
        }
        writer.append_completed(&CompletedRecord::from_invalid(line, Utc::now()))?;
    }

    let (plan, warnings) = plan_queues(records, &settings.queue_settings());
    for w in &warnings {
        log.warn(&w.to_string())?;
    }
    for q in &plan.queues {
        log.info(&format!("queue {}: {} records at {}", q.key, q.records.len(), q.rate))?;
    }

    let policy = RetryPolicy::from_settings(settings);
    let mut summary = run_experiment(plan, registry, &policy, settings.mode, writer.clone(), shutdown).await?;
    summary.errors += invalid.len();
    log.info(&format!(
        "finished: {} responses, {} errors, wall time {:.3}s{}",
        summary.successes,
        summary.errors,
        summary.wall_time.as_secs_f64(),
        if summary.interrupted { " (interrupted)" } else { "" }
    ))?;

    Ok(ExperimentReport {
        artifacts,
        validation: report,
        summary,
    })
}

#[derive(Debug)]
pub enum WatchEvent<'a> {
    Completed(&'a ExperimentReport),
    Failed { file: &'a Path, error: &'a PipelineError },
    ListFailed(&'a io::Error),
}

/// Polls the input folder until `shutdown` is cancelled, running each
/// experiment found one at a time, oldest modification first. A failing
/// experiment is reported through `on_event` and does not stop the loop.
pub async fn watch_input<F>(
    folder: &DataFolder,
    settings: &ExperimentSettings,
    registry: &AdapterRegistry,
    poll_interval: Duration,
    shutdown: CancellationToken,
    mut on_event: F,
) where
    F: FnMut(WatchEvent<'_>),
{
    while !shutdown.is_cancelled() {
        let pending: Vec<PathBuf> = match folder.pending_experiments() {
            Ok(p) => p,
            Err(e) => {
                on_event(WatchEvent::ListFailed(&e));
                Vec::new()
            }
        };
        for file in pending {
            if shutdown.is_cancelled() {
                return;
            }
            // moved away by someone else since the listing
            if !file.exists() {
                continue;
            }
            match process_experiment(folder, &file, settings, registry, shutdown.clone()).await {
                Ok(report) => on_event(WatchEvent::Completed(&report)),
                Err(error) => on_event(WatchEvent::Failed {
                    file: &file,
                    error: &error,
                }),
            }
        }
        tokio::select! {
            _ = shutdown.cancelled() => return,
            _ = tokio::time::sleep(poll_interval) => {}
        }
    }
}
