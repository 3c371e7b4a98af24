//! Directory-backed persistence: one directory per case.
//!
//! ```text
//! <root>/<case_id>/record.json
//! <root>/<case_id>/sessions/<session_id>.json
//! <root>/<case_id>/sessions/<session_id>.audit.jsonl
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use tempfile::NamedTempFile;
use thiserror::Error;

use crate::contestation::{audit_to_jsonl, ContestationSession};
use crate::record::CaseRecord;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("case `{0}` not found")]
    CaseNotFound(String),
    #[error("session `{session}` not found for case `{case}`")]
    SessionNotFound { case: String, session: String },
    #[error("case `{0}` already stored")]
    CaseExists(String),
    #[error("invalid id `{0}`")]
    BadId(String),
    #[error("corrupt file {path}: {detail}")]
    Corrupt { path: String, detail: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Ids become path components, so only a conservative character set is allowed.
fn check_id(id: &str) -> Result<(), StoreError> {
    let ok = !id.is_empty()
        && id.len() <= 128
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if ok {
        Ok(())
    } else {
        Err(StoreError::BadId(id.to_string()))
    }
}

#[derive(Debug, Clone)]
pub struct CaseStore {
    root: PathBuf,
}

impl CaseStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(io_err(&root))?;
        Ok(CaseStore { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn case_dir(&self, case_id: &str) -> Result<PathBuf, StoreError> {
        check_id(case_id)?;
        Ok(self.root.join(case_id))
    }

    fn sessions_dir(&self, case_id: &str) -> Result<PathBuf, StoreError> {
        Ok(self.case_dir(case_id)?.join("sessions"))
    }

    pub fn record_path(&self, case_id: &str) -> Result<PathBuf, StoreError> {
        Ok(self.case_dir(case_id)?.join("record.json"))
    }

    pub fn contains(&self, case_id: &str) -> bool {
        self.record_path(case_id).map(|p| p.is_file()).unwrap_or(false)
    }

    /// Writes a record once. A second write for the same id fails.
    pub fn put_record(&self, record: &CaseRecord) -> Result<PathBuf, StoreError> {
        let dir = self.case_dir(&record.case_id)?;
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let path = dir.join("record.json");
        let mut tmp = NamedTempFile::new_in(&dir).map_err(io_err(&dir))?;
        tmp.write_all(record.to_json().as_bytes()).map_err(io_err(&path))?;
        tmp.persist_noclobber(&path).map_err(|e| {
            if e.error.kind() == std::io::ErrorKind::AlreadyExists {
                StoreError::CaseExists(record.case_id.clone())
            } else {
                StoreError::Io {
                    path: path.display().to_string(),
                    source: e.error,
                }
            }
        })?;
        Ok(path)
    }

    pub fn get_record(&self, case_id: &str) -> Result<CaseRecord, StoreError> {
        let path = self.record_path(case_id)?;
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(StoreError::CaseNotFound(case_id.to_string()))
            }
            Err(e) => return Err(io_err(&path)(e)),
        };
        serde_json::from_str(&text).map_err(|e| StoreError::Corrupt {
            path: path.display().to_string(),
            detail: e.to_string(),
        })
    }

    /// Stored case ids, sorted.
    pub fn list_cases(&self) -> Result<Vec<String>, StoreError> {
        let mut ids = Vec::new();
        for entry in fs::read_dir(&self.root).map_err(io_err(&self.root))? {
            let entry = entry.map_err(io_err(&self.root))?;
            let name = entry.file_name().to_string_lossy().to_string();
            if self.contains(&name) {
                ids.push(name);
            }
        }
        ids.sort();
        Ok(ids)
    }

    /// The next unused `s-<n>` id for a case.
    pub fn next_session_id(&self, case_id: &str) -> Result<String, StoreError> {
        let existing = self.list_sessions(case_id)?;
        let n = (1u64..)
            .find(|n| !existing.contains(&format!("s-{n}")))
            .expect("unbounded id space");
        Ok(format!("s-{n}"))
    }

    /// Replaces the session snapshot and its audit log atomically (each file
    /// is swapped in whole).
    pub fn save_session(&self, session: &ContestationSession) -> Result<(), StoreError> {
        if !self.contains(session.case_id()) {
            return Err(StoreError::CaseNotFound(session.case_id().to_string()));
        }
        check_id(session.session_id())?;
        let dir = self.sessions_dir(session.case_id())?;
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let sid = session.session_id();
        write_atomic(&dir, &dir.join(format!("{sid}.audit.jsonl")), &audit_to_jsonl(session.audit()))?;
        write_atomic(&dir, &dir.join(format!("{sid}.json")), &session.to_json())
    }

    pub fn load_session(&self, case_id: &str, session_id: &str) -> Result<ContestationSession, StoreError> {
        check_id(session_id)?;
        let path = self.sessions_dir(case_id)?.join(format!("{session_id}.json"));
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(StoreError::SessionNotFound {
                    case: case_id.to_string(),
                    session: session_id.to_string(),
                })
            }
            Err(e) => return Err(io_err(&path)(e)),
        };
        ContestationSession::from_json(&text).map_err(|detail| StoreError::Corrupt {
            path: path.display().to_string(),
            detail,
        })
    }

    pub fn audit_path(&self, case_id: &str, session_id: &str) -> Result<PathBuf, StoreError> {
        check_id(session_id)?;
        Ok(self.sessions_dir(case_id)?.join(format!("{session_id}.audit.jsonl")))
    }

    pub fn list_sessions(&self, case_id: &str) -> Result<Vec<String>, StoreError> {
        if !self.contains(case_id) {
            return Err(StoreError::CaseNotFound(case_id.to_string()));
        }
        let dir = self.sessions_dir(case_id)?;
        let mut ids = Vec::new();
        if dir.is_dir() {
            for entry in fs::read_dir(&dir).map_err(io_err(&dir))? {
                let name = entry.map_err(io_err(&dir))?.file_name().to_string_lossy().to_string();
                if let Some(id) = name.strip_suffix(".json") {
                    ids.push(id.to_string());
                }
            }
        }
        ids.sort();
        Ok(ids)
    }
}

fn write_atomic(dir: &Path, path: &Path, contents: &str) -> Result<(), StoreError> {
    let mut tmp = NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    tmp.write_all(contents.as_bytes()).map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| StoreError::Io {
        path: path.display().to_string(),
        source: e.error,
    })?;
    Ok(())
}
