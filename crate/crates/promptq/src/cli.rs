//! Command-line interface.
//!
//! Exit codes: 0 success, 1 runtime IO failure, 2 configuration error,
//! 3 validation issues (`check` only).

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::net::SocketAddr;
use std::num::NonZeroU32;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use promptq_core::completed::parse_completed;
use promptq_core::judge::{generate_judge_records, JudgeTemplate};
use promptq_core::profile::SimulatorProfile;
use promptq_core::{parse_experiment, Qpm};
use tokio_util::sync::CancellationToken;

use crate::adapter::AdapterRegistry;
use crate::credentials::{load_env_file, CredentialStore};
use crate::pipeline::{process_experiment, watch_input, PipelineError, WatchEvent};
use crate::settings::{DispatchMode, ExperimentSettings, DEFAULT_MAX_ATTEMPTS, DEFAULT_MAX_QUERIES};
use crate::simulator;
use crate::store::{DataFolder, StoreError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "promptq",
    version,
    about = "Send JSONL prompt experiments to model endpoints, asynchronously and rate limited"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one experiment file and store its results in the data folder.
    RunExperiment(RunExperimentArgs),
    /// Keep running experiment files dropped into the data folder's input folder.
    RunPipeline(RunPipelineArgs),
    /// Validate an experiment file without sending anything.
    Check(CheckArgs),
    /// Build a judge experiment from a completed file.
    Judge(JudgeArgs),
    /// Serve a local endpoint simulator.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct RunSettingsArgs {
    /// Pipeline data folder holding input/, output/ and media/.
    #[arg(short = 'd', long, default_value = "data")]
    pub data_folder: PathBuf,
    /// .env file with credentials; a missing file is ignored.
    #[arg(short = 'e', long = "env", default_value = ".env")]
    pub env_file: PathBuf,
    /// Queries per minute for each queue (also accepted as -mq).
    #[arg(long, default_value_t = DEFAULT_MAX_QUERIES, value_parser = clap::value_parser!(u32).range(1..))]
    pub max_queries: u32,
    /// Attempts per record before giving up (also accepted as -ma).
    #[arg(long, default_value_t = DEFAULT_MAX_ATTEMPTS, value_parser = clap::value_parser!(u32).range(1..))]
    pub max_attempts: u32,
    /// Split records into concurrent queues by group, or by api when ungrouped.
    #[arg(short = 'p', long)]
    pub parallel: bool,
    /// Per-queue rates as a JSON object {"queue": qpm, ...}, inline or as a file path.
    #[arg(long, value_name = "JSON_OR_PATH")]
    pub max_queries_per_queue: Option<String>,
    /// Per-request timeout in seconds.
    #[arg(long, default_value_t = 120.0)]
    pub timeout: f64,
    /// Wait for each response before sending the next request.
    #[arg(long)]
    pub sync: bool,
}

#[derive(Debug, Args)]
pub struct RunExperimentArgs {
    /// Experiment JSONL file.
    #[arg(short = 'f', long)]
    pub file: PathBuf,
    #[command(flatten)]
    pub settings: RunSettingsArgs,
}

#[derive(Debug, Args)]
pub struct RunPipelineArgs {
    #[command(flatten)]
    pub settings: RunSettingsArgs,
    /// Seconds between polls of the input folder.
    #[arg(long, default_value_t = 10.0)]
    pub poll_interval: f64,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    /// Experiment JSONL file.
    #[arg(short = 'f', long)]
    pub file: PathBuf,
}

#[derive(Debug, Args)]
pub struct JudgeArgs {
    /// Completed JSONL file.
    #[arg(short = 'f', long)]
    pub file: PathBuf,
    /// Template file containing {INPUT_PROMPT} and {OUTPUT_RESPONSE}.
    #[arg(short = 't', long)]
    pub template: PathBuf,
    #[arg(long)]
    pub judge_api: String,
    #[arg(long)]
    pub judge_model: String,
    /// Output path; defaults to the data folder's input folder.
    #[arg(short = 'o', long)]
    pub out: Option<PathBuf>,
    #[arg(short = 'd', long, default_value = "data")]
    pub data_folder: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Simulator profile JSON file.
    #[arg(long)]
    pub profile: PathBuf,
    #[arg(long, default_value_t = 8089)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: std::net::IpAddr,
}

/// Rewrites the two-letter short forms `-mq` and `-ma`, which clap cannot
/// express as short flags.
pub fn normalize_args<I: IntoIterator<Item = OsString>>(args: I) -> Vec<OsString> {
    args.into_iter()
        .map(|a| {
            let Some(s) = a.to_str() else { return a };
            for (short, long) in [("-mq", "--max-queries"), ("-ma", "--max-attempts")] {
                if s == short {
                    return long.into();
                }
                if let Some(v) = s.strip_prefix(short).and_then(|r| r.strip_prefix('=')) {
                    return format!("{long}={v}").into();
                }
            }
            a
        })
        .collect()
}

#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

fn config(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_CONFIG,
        message: message.into(),
    }
}

fn io_failure(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_IO,
        message: message.into(),
    }
}

/// Parses arguments and runs the command; returns the process exit code.
pub fn run<I: IntoIterator<Item = OsString>>(args: I) -> i32 {
    let cli = match Cli::try_parse_from(normalize_args(args)) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let runtime = match tokio::runtime::Builder::new_multi_thread().enable_all().build() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: cannot start runtime: {e}");
            return EXIT_IO;
        }
    };
    match runtime.block_on(dispatch(cli.command)) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

async fn dispatch(command: Command) -> Result<i32, Failure> {
    match command {
        Command::RunExperiment(args) => run_experiment_cmd(args).await,
        Command::RunPipeline(args) => run_pipeline_cmd(args).await,
        Command::Check(args) => check_cmd(args),
        Command::Judge(args) => judge_cmd(args),
        Command::Simulate(args) => simulate_cmd(args).await,
    }
}

pub fn parse_rate_map(value: &str) -> Result<BTreeMap<String, Qpm>, String> {
    let text = if value.trim_start().starts_with('{') {
        value.to_string()
    } else {
        std::fs::read_to_string(value).map_err(|e| format!("cannot read rate file {value}: {e}"))?
    };
    serde_json::from_str(&text).map_err(|e| format!("per-queue rates must map queue names to integers >= 1: {e}"))
}

fn build_settings(args: &RunSettingsArgs) -> Result<ExperimentSettings, Failure> {
    if !(args.timeout.is_finite() && args.timeout > 0.0) {
        return Err(config("--timeout must be a positive number of seconds"));
    }
    let per_queue_rates = match &args.max_queries_per_queue {
        Some(v) => parse_rate_map(v).map_err(config)?,
        None => BTreeMap::new(),
    };
    Ok(ExperimentSettings {
        data_folder: args.data_folder.clone(),
        max_queries: Qpm::new(args.max_queries).ok_or_else(|| config("--max-queries must be at least 1"))?,
        max_attempts: NonZeroU32::new(args.max_attempts).ok_or_else(|| config("--max-attempts must be at least 1"))?,
        parallel: args.parallel,
        per_queue_rates,
        request_timeout: Duration::from_secs_f64(args.timeout),
        env_file: Some(args.env_file.clone()),
        mode: if args.sync {
            DispatchMode::Synchronous
        } else {
            DispatchMode::Async
        },
        ..ExperimentSettings::default()
    })
}

fn load_credentials(path: &Path) -> Result<CredentialStore, Failure> {
    let (store, warnings) = load_env_file(path).map_err(|e| config(format!("cannot read {}: {e}", path.display())))?;
    for w in warnings {
        eprintln!(
            "warning: {} line {}: {}, skipped",
            path.display(),
            w.line_number,
            w.reason
        );
    }
    Ok(store)
}

fn init_folder(path: &Path) -> Result<DataFolder, Failure> {
    DataFolder::init(path).map_err(|e| config(e.to_string()))
}

/// Cancels the returned token on SIGINT or SIGTERM.
fn shutdown_on_signal() -> CancellationToken {
    let token = CancellationToken::new();
    let t = token.clone();
    tokio::spawn(async move {
        #[cfg(unix)]
        {
            use tokio::signal::unix::{signal, SignalKind};
            match signal(SignalKind::terminate()) {
                Ok(mut term) => {
                    tokio::select! {
                        _ = tokio::signal::ctrl_c() => {}
                        _ = term.recv() => {}
                    }
                }
                Err(_) => {
                    let _ = tokio::signal::ctrl_c().await;
                }
            }
        }
        #[cfg(not(unix))]
        {
            let _ = tokio::signal::ctrl_c().await;
        }
        t.cancel();
    });
    token
}

fn pipeline_failure(e: PipelineError) -> Failure {
    match e {
        PipelineError::Store(StoreError::MissingExperiment { .. } | StoreError::Name { .. }) => config(e.to_string()),
        other => io_failure(other.to_string()),
    }
}

async fn run_experiment_cmd(args: RunExperimentArgs) -> Result<i32, Failure> {
    let settings = build_settings(&args.settings)?;
    if !args.file.is_file() {
        return Err(config(format!(
            "experiment file {} does not exist",
            args.file.display()
        )));
    }
    let creds = load_credentials(&args.settings.env_file)?;
    let folder = init_folder(&settings.data_folder)?;
    let registry = AdapterRegistry::with_builtins(&creds);
    let shutdown = shutdown_on_signal();
    let report = process_experiment(&folder, &args.file, &settings, &registry, shutdown)
        .await
        .map_err(pipeline_failure)?;
    println!(
        "{}: {} responses, {} errors in {:.2}s{}",
        report.artifacts.experiment_name,
        report.summary.successes,
        report.summary.errors,
        report.summary.wall_time.as_secs_f64(),
        if report.summary.interrupted {
            " (interrupted)"
        } else {
            ""
        }
    );
    println!("completed file: {}", report.artifacts.completed_path.display());
    Ok(EXIT_OK)
}

async fn run_pipeline_cmd(args: RunPipelineArgs) -> Result<i32, Failure> {
    let settings = build_settings(&args.settings)?;
    if !(args.poll_interval.is_finite() && args.poll_interval > 0.0) {
        return Err(config("--poll-interval must be a positive number of seconds"));
    }
    let creds = load_credentials(&args.settings.env_file)?;
    let folder = init_folder(&settings.data_folder)?;
    let registry = AdapterRegistry::with_builtins(&creds);
    let shutdown = shutdown_on_signal();
    println!("watching {}", folder.input_dir().display());
    watch_input(
        &folder,
        &settings,
        &registry,
        Duration::from_secs_f64(args.poll_interval),
        shutdown,
        |event| match event {
            WatchEvent::Completed(r) => println!(
                "{}: {} responses, {} errors in {:.2}s -> {}",
                r.artifacts.experiment_name,
                r.summary.successes,
                r.summary.errors,
                r.summary.wall_time.as_secs_f64(),
                r.artifacts.completed_path.display()
            ),
            WatchEvent::Failed { file, error } => eprintln!("error: {}: {error}", file.display()),
            WatchEvent::ListFailed(e) => eprintln!("error: cannot list input folder: {e}"),
        },
    )
    .await;
    Ok(EXIT_OK)
}

fn check_cmd(args: CheckArgs) -> Result<i32, Failure> {
    let text = std::fs::read(&args.file).map_err(|e| config(format!("cannot read {}: {e}", args.file.display())))?;
    let text = String::from_utf8_lossy(&text);
    let parsed = parse_experiment(&text);
    let report = &parsed.report;
    println!("{} valid / {} issues", report.valid_count, report.issues.len());
    for issue in &report.issues {
        println!("  {issue}");
    }
    Ok(if report.is_clean() { EXIT_OK } else { EXIT_VALIDATION })
}

fn judge_cmd(args: JudgeArgs) -> Result<i32, Failure> {
    let completed =
        std::fs::read_to_string(&args.file).map_err(|e| config(format!("cannot read {}: {e}", args.file.display())))?;
    let template = std::fs::read_to_string(&args.template)
        .map_err(|e| config(format!("cannot read {}: {e}", args.template.display())))?;
    let template = JudgeTemplate::new(template).map_err(|e| config(e.to_string()))?;
    let (records, bad_lines) = parse_completed(&completed);
    for n in bad_lines {
        eprintln!(
            "warning: {} line {n} is not a JSON object, skipped",
            args.file.display()
        );
    }
    let out = generate_judge_records(records, &template, &args.judge_api, &args.judge_model);

    let out_path = match args.out {
        Some(p) => p,
        None => {
            let folder = init_folder(&args.data_folder)?;
            let stem = args.file.file_stem().and_then(|s| s.to_str()).unwrap_or("completed");
            folder.input_dir().join(format!("judge-{stem}.jsonl"))
        }
    };
    let mut text = String::new();
    for r in &out.records {
        text.push_str(&serde_json::to_string(r).unwrap_or_default());
        text.push('\n');
    }
    std::fs::write(&out_path, text).map_err(|e| io_failure(format!("cannot write {}: {e}", out_path.display())))?;
    println!(
        "wrote {} judge records ({} skipped without a response) to {}",
        out.records.len(),
        out.skipped,
        out_path.display()
    );
    Ok(EXIT_OK)
}

async fn simulate_cmd(args: SimulateArgs) -> Result<i32, Failure> {
    let text = std::fs::read_to_string(&args.profile)
        .map_err(|e| config(format!("cannot read {}: {e}", args.profile.display())))?;
    let profile: SimulatorProfile =
        serde_json::from_str(&text).map_err(|e| config(format!("malformed profile: {e}")))?;
    profile
        .validate()
        .map_err(|e| config(format!("invalid profile: {e}")))?;
    let shutdown = shutdown_on_signal();
    let handle = simulator::serve(profile, SocketAddr::new(args.host, args.port))
        .await
        .map_err(|e| io_failure(e.to_string()))?;
    println!("simulator listening on {}", handle.base_url());
    shutdown.cancelled().await;
    handle.shutdown();
    Ok(EXIT_OK)
}
