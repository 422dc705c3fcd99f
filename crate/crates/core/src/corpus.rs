//! Corpus manifests: the explicit, hand-picked list of use cases a run
//! operates on, together with the app each one came from.

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::usecase::{
    parse_use_case, parse_use_cases_jsonl, AppDescription, DocumentError, LegalProvision, UseCase,
    UseCaseError,
};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    UseCase {
        path: PathBuf,
        #[source]
        source: UseCaseError,
    },
    #[error("{path}: {source}")]
    Document {
        path: PathBuf,
        #[source]
        source: DocumentError,
    },
    #[error("use case `{id}` refers to unknown app `{app_id}`")]
    UnknownApp { id: String, app_id: String },
    #[error("duplicate use case id `{0}`")]
    DuplicateId(String),
    #[error("use case in {0} has no id")]
    MissingId(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Overrides the id stored in the file. Required for `.json` files that
    /// carry no `"id"`; ignored for `.jsonl` streams.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub path: PathBuf,
    pub app_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusManifest {
    #[serde(default)]
    pub name: String,
    pub apps: Vec<PathBuf>,
    pub use_cases: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusEntry {
    pub use_case: UseCase,
    pub app: AppDescription,
}

/// Ordered use cases with their app descriptions. Ids are unique.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub name: String,
    pub entries: Vec<CorpusEntry>,
}

fn read(path: &Path) -> Result<String, CorpusError> {
    std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_app(path: &Path) -> Result<AppDescription, CorpusError> {
    AppDescription::from_json(&read(path)?).map_err(|source| CorpusError::Document {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_provision(path: &Path) -> Result<LegalProvision, CorpusError> {
    LegalProvision::from_json(&read(path)?).map_err(|source| CorpusError::Document {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_use_case(path: &Path) -> Result<UseCase, CorpusError> {
    parse_use_case(&read(path)?).map_err(|source| CorpusError::UseCase {
        path: path.to_path_buf(),
        source,
    })
}

impl Corpus {
    pub fn new(name: impl Into<String>, entries: Vec<CorpusEntry>) -> Result<Self, CorpusError> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.use_case.id().to_string()) {
                return Err(CorpusError::DuplicateId(e.use_case.id().to_string()));
            }
        }
        Ok(Self {
            name: name.into(),
            entries,
        })
    }

    /// Loads a manifest; relative paths resolve against its directory.
    pub fn load(manifest_path: &Path) -> Result<Self, CorpusError> {
        let manifest: CorpusManifest =
            serde_json::from_str(&read(manifest_path)?).map_err(|e| CorpusError::Manifest {
                path: manifest_path.to_path_buf(),
                message: e.to_string(),
            })?;
        let base = manifest_path.parent().unwrap_or(Path::new("."));

        let mut apps = HashMap::new();
        for rel in &manifest.apps {
            let app = load_app(&base.join(rel))?;
            apps.insert(app.app_id.clone(), app);
        }

        let mut entries = Vec::new();
        for entry in &manifest.use_cases {
            let app = apps.get(&entry.app_id).cloned();
            let path = base.join(&entry.path);
            let use_cases = if path.extension().is_some_and(|e| e == "jsonl") {
                parse_use_cases_jsonl(&read(&path)?).map_err(|(line, source)| CorpusError::Manifest {
                    path: path.clone(),
                    message: format!("line {line}: {source}"),
                })?
            } else {
                let uc = load_use_case(&path)?;
                vec![match &entry.id {
                    Some(id) => uc.with_id(id.clone()),
                    None => uc,
                }]
            };
            for uc in use_cases {
                if uc.id().is_empty() {
                    return Err(CorpusError::MissingId(path));
                }
                let app = app.clone().ok_or_else(|| CorpusError::UnknownApp {
                    id: uc.id().to_string(),
                    app_id: entry.app_id.clone(),
                })?;
                entries.push(CorpusEntry { use_case: uc, app });
            }
        }
        Self::new(manifest.name, entries)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&CorpusEntry> {
        self.entries.iter().find(|e| e.use_case.id() == id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.get(id).is_some()
    }
}
