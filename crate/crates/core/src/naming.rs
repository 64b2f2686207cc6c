//! Names of run artifacts in the output folder.
//!
//! Every run writes `<STAMP>-input-<name>.jsonl`, `<STAMP>-completed-<name>.jsonl`
//! and `<STAMP>-log-<name>.txt`, where `STAMP` is `YYYYMMDD-HHMMSS` with an
//! optional `-N` suffix when a stamp is already taken.

use alloc::format;
use alloc::string::String;
use core::fmt;

use chrono::NaiveDateTime;

pub const EXPERIMENT_EXTENSION: &str = ".jsonl";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NameError {
    #[error("experiment file name must end in .jsonl")]
    NotJsonl,
    #[error("experiment name is empty")]
    Empty,
    #[error("experiment name contains a path separator")]
    Separator,
}

/// Experiment name for a file name: the file name without `.jsonl`.
pub fn experiment_name(file_name: &str) -> Result<&str, NameError> {
    let name = file_name
        .strip_suffix(EXPERIMENT_EXTENSION)
        .ok_or(NameError::NotJsonl)?;
    if name.is_empty() {
        return Err(NameError::Empty);
    }
    if name.contains(['/', '\\']) {
        return Err(NameError::Separator);
    }
    Ok(name)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArtifactKind {
    Input,
    Completed,
    Log,
}

impl ArtifactKind {
    pub const ALL: [ArtifactKind; 3] = [ArtifactKind::Input, ArtifactKind::Completed, ArtifactKind::Log];

    fn infix(self) -> &'static str {
        match self {
            ArtifactKind::Input => "input",
            ArtifactKind::Completed => "completed",
            ArtifactKind::Log => "log",
        }
    }

    fn extension(self) -> &'static str {
        match self {
            ArtifactKind::Input | ArtifactKind::Completed => "jsonl",
            ArtifactKind::Log => "txt",
        }
    }
}

/// Timestamp prefix shared by the files of one run.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RunStamp(String);

impl RunStamp {
    pub fn new(at: NaiveDateTime) -> Self {
        RunStamp(format!("{}", at.format("%Y%m%d-%H%M%S")))
    }

    /// The `n`-th alternative for a taken stamp (`n >= 2`).
    pub fn with_suffix(&self, n: u32) -> Self {
        RunStamp(format!("{}-{n}", self.0))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn file_name(&self, kind: ArtifactKind, experiment: &str) -> String {
        format!("{}-{}-{}.{}", self.0, kind.infix(), experiment, kind.extension())
    }
}

impl fmt::Display for RunStamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    #[test]
    fn names() {
        assert_eq!(experiment_name("exp_1.jsonl"), Ok("exp_1"));
        assert_eq!(experiment_name("exp_1.json"), Err(NameError::NotJsonl));
        assert_eq!(experiment_name(".jsonl"), Err(NameError::Empty));
        assert_eq!(experiment_name("a/b.jsonl"), Err(NameError::Separator));
    }

    #[test]
    fn artifact_names() {
        let at = NaiveDate::from_ymd_opt(2024, 6, 1)
            .unwrap()
            .and_hms_opt(12, 0, 0)
            .unwrap();
        let s = RunStamp::new(at);
        assert_eq!(s.as_str(), "20240601-120000");
        assert_eq!(
            s.file_name(ArtifactKind::Input, "exp_1"),
            "20240601-120000-input-exp_1.jsonl"
        );
        assert_eq!(
            s.file_name(ArtifactKind::Completed, "exp_1"),
            "20240601-120000-completed-exp_1.jsonl"
        );
        assert_eq!(s.file_name(ArtifactKind::Log, "exp_1"), "20240601-120000-log-exp_1.txt");
        assert_eq!(
            s.with_suffix(2).file_name(ArtifactKind::Log, "e"),
            "20240601-120000-2-log-e.txt"
        );
    }

    #[test]
    fn stamps_sort_chronologically() {
        let d = NaiveDate::from_ymd_opt(2024, 1, 9).unwrap();
        let a = RunStamp::new(d.and_hms_opt(9, 59, 59).unwrap());
        let b = RunStamp::new(d.succ_opt().unwrap().and_hms_opt(0, 0, 0).unwrap());
        assert!(a < b);
    }
}
