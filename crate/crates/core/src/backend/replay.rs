//! Record-once, replay-forever fixtures.
//!
//! A fixture is one JSON file per request digest holding the request and the
//! response it produced. [`RecordingBackend`] writes them while forwarding to
//! a real backend; [`ReplayBackend`] serves them back and fails on a miss.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{BackendError, BackendRequest, BackendResponse, TextModelBackend};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureRecord {
    pub digest: String,
    pub request: BackendRequest,
    pub response: BackendResponse,
}

fn fixture_path(dir: &Path, digest: &str) -> PathBuf {
    dir.join(format!("{digest}.json"))
}

#[derive(Debug, Clone)]
pub struct ReplayBackend {
    dir: PathBuf,
}

impl ReplayBackend {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        ReplayBackend { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

impl TextModelBackend for ReplayBackend {
    fn complete(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError> {
        let digest = request.digest();
        let path = fixture_path(&self.dir, &digest);
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(BackendError::FixtureMissing {
                    purpose: request.purpose,
                    digest,
                })
            }
            Err(e) => return Err(BackendError::Io(format!("{}: {e}", path.display()))),
        };
        let record: FixtureRecord = serde_json::from_str(&text)
            .map_err(|e| BackendError::Io(format!("{}: {e}", path.display())))?;
        if record.request.purpose != request.purpose {
            return Err(BackendError::Io(format!(
                "{} was recorded for {}, requested as {}",
                path.display(),
                record.request.purpose,
                request.purpose
            )));
        }
        Ok(record.response)
    }

    fn name(&self) -> &str {
        "replay"
    }
}

/// Forwards to `inner` and stores every successful exchange as a fixture.
pub struct RecordingBackend<B> {
    inner: B,
    dir: PathBuf,
}

impl<B: TextModelBackend> RecordingBackend<B> {
    pub fn new(inner: B, dir: impl Into<PathBuf>) -> Self {
        RecordingBackend {
            inner,
            dir: dir.into(),
        }
    }

    fn store(&self, record: &FixtureRecord) -> Result<(), BackendError> {
        let io = |e: std::io::Error| BackendError::Io(format!("{}: {e}", self.dir.display()));
        std::fs::create_dir_all(&self.dir).map_err(io)?;
        let text = serde_json::to_string_pretty(record).expect("fixture serialization");
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir).map_err(io)?;
        tmp.write_all(text.as_bytes()).map_err(io)?;
        tmp.persist(fixture_path(&self.dir, &record.digest))
            .map_err(|e| io(e.error))?;
        Ok(())
    }
}

impl<B: TextModelBackend> TextModelBackend for RecordingBackend<B> {
    fn complete(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError> {
        let response = self.inner.complete(request)?;
        self.store(&FixtureRecord {
            digest: request.digest(),
            request: request.clone(),
            response: response.clone(),
        })?;
        Ok(response)
    }

    fn name(&self) -> &str {
        "recording"
    }
}
