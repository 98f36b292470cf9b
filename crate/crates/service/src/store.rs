//! File-backed document store.
//!
//! Layout under the data directory:
//! `charts/<id>.json`, `models/<id>.json`, `sessions/<id>.json`. Chart, model
//! and session ids are content hashes, so creating the same document twice
//! yields the same id. Writes go to a temporary file that is renamed into
//! place.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use groupsense_core::model::{load_model, save_model, GroupingModel, ModelError};
use groupsense_core::{default_model, Chart, Group, DEFAULT_MODEL_ID};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{path}: corrupt document: {message}")]
    Corrupt { path: String, message: String },
    #[error("invalid id {0:?}")]
    InvalidId(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredChart {
    pub id: String,
    pub chart: Chart,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub id: String,
    pub name: String,
    pub version: String,
    pub provenance: String,
    pub builtin: bool,
}

/// The content of a session; its hash is the session id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionDraft {
    pub chart: Chart,
    pub desired: Vec<Group>,
    pub alpha: f64,
    pub threshold: f64,
    pub model_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    #[serde(flatten)]
    pub draft: SessionDraft,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelDeletion {
    Deleted,
    NotFound,
    BuiltIn,
    /// Sessions that still name the model.
    Referenced(Vec<String>),
}

pub struct Store {
    root: PathBuf,
    writes: Mutex<()>,
    tmp_counter: AtomicU64,
}

const KINDS: [&str; 3] = ["charts", "models", "sessions"];

pub fn content_id(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .take(8)
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 64
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        for kind in KINDS {
            let dir = root.join(kind);
            fs::create_dir_all(&dir).map_err(|source| io_err(&dir, source))?;
        }
        Ok(Self {
            root,
            writes: Mutex::new(()),
            tmp_counter: AtomicU64::new(0),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn path(&self, kind: &str, id: &str) -> Result<PathBuf, StoreError> {
        if !valid_id(id) {
            return Err(StoreError::InvalidId(id.to_string()));
        }
        Ok(self.root.join(kind).join(format!("{id}.json")))
    }

    fn write_atomic(&self, path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
        let _guard = self.writes.lock().unwrap_or_else(|e| e.into_inner());
        let n = self.tmp_counter.fetch_add(1, Ordering::Relaxed);
        let tmp = path.with_extension(format!("tmp-{}-{n}", std::process::id()));
        fs::write(&tmp, bytes).map_err(|source| io_err(&tmp, source))?;
        fs::rename(&tmp, path).map_err(|source| io_err(path, source))
    }

    fn read(&self, kind: &str, id: &str) -> Result<Option<String>, StoreError> {
        let path = self.path(kind, id)?;
        match fs::read_to_string(&path) {
            Ok(text) => Ok(Some(text)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(source) => Err(io_err(&path, source)),
        }
    }

    fn remove(&self, kind: &str, id: &str) -> Result<bool, StoreError> {
        let path = self.path(kind, id)?;
        let _guard = self.writes.lock().unwrap_or_else(|e| e.into_inner());
        match fs::remove_file(&path) {
            Ok(()) => Ok(true),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(false),
            Err(source) => Err(io_err(&path, source)),
        }
    }

    fn ids(&self, kind: &str) -> Result<Vec<String>, StoreError> {
        let dir = self.root.join(kind);
        let mut ids = Vec::new();
        for entry in fs::read_dir(&dir).map_err(|source| io_err(&dir, source))? {
            let path = entry.map_err(|source| io_err(&dir, source))?.path();
            if path.extension().and_then(|e| e.to_str()) == Some("json") {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    ids.push(stem.to_string());
                }
            }
        }
        ids.sort();
        Ok(ids)
    }

    fn parse<T: for<'de> Deserialize<'de>>(
        &self,
        kind: &str,
        id: &str,
        text: &str,
    ) -> Result<T, StoreError> {
        serde_json::from_str(text).map_err(|e| StoreError::Corrupt {
            path: format!("{kind}/{id}.json"),
            message: e.to_string(),
        })
    }

    /// Stores a chart that the caller has already validated.
    pub fn put_chart(&self, chart: &Chart) -> Result<StoredChart, StoreError> {
        let bytes = serde_json::to_vec_pretty(chart).expect("charts serialize");
        let id = content_id(&bytes);
        let path = self.path("charts", &id)?;
        if !path.exists() {
            self.write_atomic(&path, &bytes)?;
        }
        Ok(StoredChart {
            id,
            chart: chart.clone(),
        })
    }

    pub fn get_chart(&self, id: &str) -> Result<Option<StoredChart>, StoreError> {
        match self.read("charts", id)? {
            Some(text) => Ok(Some(StoredChart {
                id: id.to_string(),
                chart: self.parse("charts", id, &text)?,
            })),
            None => Ok(None),
        }
    }

    pub fn list_charts(&self) -> Result<Vec<StoredChart>, StoreError> {
        let mut out = Vec::new();
        for id in self.ids("charts")? {
            if let Some(c) = self.get_chart(&id)? {
                out.push(c);
            }
        }
        Ok(out)
    }

    pub fn delete_chart(&self, id: &str) -> Result<bool, StoreError> {
        self.remove("charts", id)
    }

    pub fn put_model(&self, model: &GroupingModel) -> Result<ModelSummary, StoreError> {
        let text = save_model(model);
        let id = content_id(text.as_bytes());
        let path = self.path("models", &id)?;
        if !path.exists() {
            self.write_atomic(&path, text.as_bytes())?;
        }
        Ok(summary(&id, model, false))
    }

    pub fn get_model(&self, id: &str) -> Result<Option<GroupingModel>, StoreError> {
        if id == DEFAULT_MODEL_ID {
            return Ok(Some(default_model().clone()));
        }
        match self.read("models", id)? {
            Some(text) => Ok(Some(load_model(&text)?)),
            None => Ok(None),
        }
    }

    /// The model document as stored.
    pub fn model_document(&self, id: &str) -> Result<Option<String>, StoreError> {
        if id == DEFAULT_MODEL_ID {
            return Ok(Some(save_model(default_model())));
        }
        self.read("models", id)
    }

    pub fn list_models(&self) -> Result<Vec<ModelSummary>, StoreError> {
        let mut out = vec![summary(DEFAULT_MODEL_ID, default_model(), true)];
        for id in self.ids("models")? {
            if let Some(model) = self.get_model(&id)? {
                out.push(summary(&id, &model, false));
            }
        }
        Ok(out)
    }

    pub fn delete_model(&self, id: &str) -> Result<ModelDeletion, StoreError> {
        if id == DEFAULT_MODEL_ID {
            return Ok(ModelDeletion::BuiltIn);
        }
        if self.read("models", id)?.is_none() {
            return Ok(ModelDeletion::NotFound);
        }
        let users: Vec<String> = self
            .list_sessions()?
            .into_iter()
            .filter(|s| s.draft.model_id == id)
            .map(|s| s.id)
            .collect();
        if !users.is_empty() {
            return Ok(ModelDeletion::Referenced(users));
        }
        Ok(if self.remove("models", id)? {
            ModelDeletion::Deleted
        } else {
            ModelDeletion::NotFound
        })
    }

    /// Creates the session, or returns the existing one with identical content.
    pub fn put_session(&self, draft: SessionDraft) -> Result<Session, StoreError> {
        let id = content_id(&serde_json::to_vec(&draft).expect("sessions serialize"));
        if let Some(existing) = self.get_session(&id)? {
            return Ok(existing);
        }
        let now = Utc::now();
        let session = Session {
            id: id.clone(),
            draft,
            created_at: now,
            updated_at: now,
        };
        let bytes = serde_json::to_vec_pretty(&session).expect("sessions serialize");
        self.write_atomic(&self.path("sessions", &id)?, &bytes)?;
        Ok(session)
    }

    pub fn get_session(&self, id: &str) -> Result<Option<Session>, StoreError> {
        match self.read("sessions", id)? {
            Some(text) => Ok(Some(self.parse("sessions", id, &text)?)),
            None => Ok(None),
        }
    }

    pub fn list_sessions(&self) -> Result<Vec<Session>, StoreError> {
        let mut out = Vec::new();
        for id in self.ids("sessions")? {
            if let Some(s) = self.get_session(&id)? {
                out.push(s);
            }
        }
        Ok(out)
    }
}

fn summary(id: &str, model: &GroupingModel, builtin: bool) -> ModelSummary {
    ModelSummary {
        id: id.to_string(),
        name: model.metadata.name.clone(),
        version: model.metadata.version.clone(),
        provenance: model.metadata.provenance.clone(),
        builtin,
    }
}

fn io_err(path: &Path, source: io::Error) -> StoreError {
    StoreError::Io {
        path: path.display().to_string(),
        source,
    }
}
