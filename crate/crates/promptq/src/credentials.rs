//! Credential resolution from the process environment and a `.env` file.

use std::collections::BTreeMap;
use std::fmt;
use std::io;
use std::path::Path;

use promptq_core::dotenv::{parse_env, EnvWarning};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    ProcessEnvironment,
    EnvFile,
}

/// Resolved variables. The process environment wins over the `.env` file.
///
/// `Debug` prints names and provenance only, never values.
#[derive(Clone, Default)]
pub struct CredentialStore {
    entries: BTreeMap<String, (String, Provenance)>,
}

impl fmt::Debug for CredentialStore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_map()
            .entries(self.entries.iter().map(|(k, (_, p))| (k, p)))
            .finish()
    }
}

impl CredentialStore {
    /// Merges `.env` entries with process variables; a process variable
    /// wins over a file entry of the same name.
    pub fn from_sources<I, K, V>(file_entries: &[(String, String)], process_env: I) -> Self
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: Into<String>,
    {
        let mut entries = BTreeMap::new();
        for (k, v) in file_entries {
            entries.insert(k.clone(), (v.clone(), Provenance::EnvFile));
        }
        for (k, v) in process_env {
            entries.insert(k.into(), (v.into(), Provenance::ProcessEnvironment));
        }
        Self { entries }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(v, _)| v.as_str())
    }

    pub fn provenance(&self, key: &str) -> Option<Provenance> {
        self.entries.get(key).map(|(_, p)| *p)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// Every resolved value.
    pub fn secrets(&self) -> impl Iterator<Item = &str> {
        self.entries.values().map(|(v, _)| v.as_str())
    }

    pub fn insert(&mut self, key: impl Into<String>, value: impl Into<String>, provenance: Provenance) {
        self.entries.insert(key.into(), (value.into(), provenance));
    }
}

/// Loads `path` (a missing file is fine) and merges it under the current
/// process environment.
pub fn load_env_file(path: &Path) -> io::Result<(CredentialStore, Vec<EnvWarning>)> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == io::ErrorKind::NotFound => String::new(),
        Err(e) => return Err(e),
    };
    let parsed = parse_env(&text);
    let process: Vec<(String, String)> = std::env::vars_os()
        .filter_map(|(k, v)| Some((k.into_string().ok()?, v.into_string().ok()?)))
        .collect();
    Ok((CredentialStore::from_sources(&parsed.entries, process), parsed.warnings))
}
