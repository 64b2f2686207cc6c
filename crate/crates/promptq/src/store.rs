//! The pipeline data folder and per-run artifacts.
//!
//! ```text
//! data/
//!   input/    experiment files waiting to run
//!   output/   <name>/<STAMP>-{input,completed,log}-<name>.{jsonl,jsonl,txt}
//!   media/    media files referenced by experiments
//! ```

use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Local, SecondsFormat};
use promptq_core::naming::{experiment_name, ArtifactKind, NameError, RunStamp};
use promptq_core::CompletedRecord;

use crate::scheduler::{Completion, CompletionSink, TraceOutcome};

pub const INPUT_DIR: &str = "input";
pub const OUTPUT_DIR: &str = "output";
pub const MEDIA_DIR: &str = "media";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("data folder {path} is not a directory")]
    NotADirectory { path: PathBuf },
    #[error("cannot prepare data folder {path}: {source}")]
    Init { path: PathBuf, source: io::Error },
    #[error("experiment file {path} does not exist")]
    MissingExperiment { path: PathBuf },
    #[error("bad experiment file name {path}: {source}")]
    Name { path: PathBuf, source: NameError },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataFolder {
    root: PathBuf,
}

impl DataFolder {
    /// Creates `root` and its three subfolders if needed.
    pub fn init(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        if root.exists() && !root.is_dir() {
            return Err(StoreError::NotADirectory { path: root });
        }
        let folder = Self { root };
        for dir in [folder.input_dir(), folder.output_dir(), folder.media_dir()] {
            if dir.exists() && !dir.is_dir() {
                return Err(StoreError::NotADirectory { path: dir });
            }
            fs::create_dir_all(&dir).map_err(|source| StoreError::Init {
                path: dir.clone(),
                source,
            })?;
        }
        Ok(folder)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn input_dir(&self) -> PathBuf {
        self.root.join(INPUT_DIR)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.root.join(OUTPUT_DIR)
    }

    pub fn media_dir(&self) -> PathBuf {
        self.root.join(MEDIA_DIR)
    }

    /// `*.jsonl` files in the input folder, oldest modification first (ties
    /// broken by name).
    pub fn pending_experiments(&self) -> io::Result<Vec<PathBuf>> {
        let mut found = Vec::new();
        for entry in fs::read_dir(self.input_dir())? {
            let entry = entry?;
            let path = entry.path();
            let is_jsonl = path.extension().is_some_and(|e| e == "jsonl");
            let meta = match entry.metadata() {
                Ok(m) => m,
                // vanished between listing and stat
                Err(e) if e.kind() == io::ErrorKind::NotFound => continue,
                Err(e) => return Err(e),
            };
            if is_jsonl && meta.is_file() {
                found.push((meta.modified()?, path));
            }
        }
        found.sort();
        Ok(found.into_iter().map(|(_, p)| p).collect())
    }

    /// Starts a run of `experiment_file`: picks a free timestamp, moves the
    /// file into `output/<name>/` as the run's input copy and creates the
    /// empty completed and log files.
    pub fn begin_run(&self, experiment_file: &Path, now: DateTime<Local>) -> Result<RunArtifacts, StoreError> {
        if !experiment_file.is_file() {
            return Err(StoreError::MissingExperiment {
                path: experiment_file.to_path_buf(),
            });
        }
        let file_name = experiment_file.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let name = experiment_name(file_name)
            .map_err(|source| StoreError::Name {
                path: experiment_file.to_path_buf(),
                source,
            })?
            .to_string();
        let dir = self.output_dir().join(&name);
        fs::create_dir_all(&dir)?;

        let base = RunStamp::new(now.naive_local());
        let mut n = 1;
        let artifacts = loop {
            let stamp = if n == 1 { base.clone() } else { base.with_suffix(n) };
            let candidate = RunArtifacts::new(&dir, &name, stamp, now);
            let taken = candidate.input_path.exists() || candidate.log_path.exists();
            if !taken {
                // create_new on the completed file claims the stamp
                match OpenOptions::new()
                    .write(true)
                    .create_new(true)
                    .open(&candidate.completed_path)
                {
                    Ok(_) => break candidate,
                    Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {}
                    Err(e) => return Err(e.into()),
                }
            }
            n += 1;
        };
        File::create(&artifacts.log_path)?;
        move_file(experiment_file, &artifacts.input_path)?;
        Ok(artifacts)
    }
}

fn move_file(from: &Path, to: &Path) -> io::Result<()> {
    match fs::rename(from, to) {
        Ok(()) => Ok(()),
        Err(_) => {
            fs::copy(from, to)?;
            fs::remove_file(from)
        }
    }
}

/// Paths of one run's three files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunArtifacts {
    pub experiment_name: String,
    pub stamp: RunStamp,
    pub started: DateTime<Local>,
    pub input_path: PathBuf,
    pub completed_path: PathBuf,
    pub log_path: PathBuf,
}

impl RunArtifacts {
    fn new(dir: &Path, name: &str, stamp: RunStamp, started: DateTime<Local>) -> Self {
        Self {
            experiment_name: name.to_string(),
            input_path: dir.join(stamp.file_name(ArtifactKind::Input, name)),
            completed_path: dir.join(stamp.file_name(ArtifactKind::Completed, name)),
            log_path: dir.join(stamp.file_name(ArtifactKind::Log, name)),
            stamp,
            started,
        }
    }

    pub fn open_writer(&self) -> io::Result<RunWriter> {
        let completed = OpenOptions::new().append(true).open(&self.completed_path)?;
        Ok(RunWriter {
            completed: Mutex::new(completed),
            log: RunLog::open(&self.log_path)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Level {
    Debug,
    Info,
    Warn,
    Error,
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Level::Debug => "DEBUG",
            Level::Info => "INFO",
            Level::Warn => "WARN",
            Level::Error => "ERROR",
        })
    }
}

/// Plain-text run log: `<ISO-8601> <LEVEL> <message>` per line.
#[derive(Debug)]
pub struct RunLog {
    file: Mutex<File>,
}

impl RunLog {
    pub fn open(path: &Path) -> io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self { file: Mutex::new(file) })
    }

    pub fn write(&self, level: Level, message: &str) -> io::Result<()> {
        let line = format!(
            "{} {level} {}\n",
            Local::now().to_rfc3339_opts(SecondsFormat::Millis, false),
            message.replace('\n', " ")
        );
        self.file
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .write_all(line.as_bytes())
    }

    pub fn info(&self, message: &str) -> io::Result<()> {
        self.write(Level::Info, message)
    }

    pub fn warn(&self, message: &str) -> io::Result<()> {
        self.write(Level::Warn, message)
    }

    pub fn debug(&self, message: &str) -> io::Result<()> {
        self.write(Level::Debug, message)
    }
}

/// Appends completed records and their attempt traces for one run.
#[derive(Debug)]
pub struct RunWriter {
    completed: Mutex<File>,
    pub log: RunLog,
}

impl RunWriter {
    /// Appends one record as a single write of the full line, so a crash
    /// leaves only whole lines behind.
    pub fn append_completed(&self, record: &CompletedRecord) -> io::Result<()> {
        let mut line = record.to_line();
        line.push('\n');
        let mut file = self.completed.lock().unwrap_or_else(|e| e.into_inner());
        file.write_all(line.as_bytes())?;
        file.flush()
    }
}

impl CompletionSink for RunWriter {
    fn accept(&self, completion: &Completion) -> io::Result<()> {
        self.append_completed(&completion.record)?;
        for t in &completion.traces {
            let outcome = match &t.outcome {
                TraceOutcome::Success => "success".to_string(),
                TraceOutcome::Retryable(r) => format!("retryable ({r})"),
                TraceOutcome::Fatal(r) => format!("fatal ({r})"),
            };
            let backoff = t
                .backoff
                .map(|b| format!(" backoff={:.3}s", b.as_secs_f64()))
                .unwrap_or_default();
            self.log.debug(&format!(
                "record {} queue={} attempt {}: {outcome} latency={:.3}s{backoff}",
                completion.record.id,
                completion.queue,
                t.attempt,
                t.latency.as_secs_f64()
            ))?;
        }
        Ok(())
    }
}
