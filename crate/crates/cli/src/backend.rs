//! Turns endpoint names from a config into gateways, either scripted
//! (offline, table-driven) or live HTTP endpoints.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use agent_judge::gateway::{EndpointConfig, HttpBackend, ResponseCache, ScriptedBackend};
use agent_judge::trajectory::BlobStore;
use agent_judge::Gateway;
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum BackendKind {
    Scripted,
    Endpoint,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedSection {
    /// JSONL table of `{digest, response}` entries.
    pub table: Option<PathBuf>,
    /// Answer for requests missing from the table.
    pub default_response: Option<String>,
}

/// Backend-related config keys, resolved against the config directory.
#[derive(Debug, Clone, Default)]
pub struct BackendSources {
    pub scripted: ScriptedSection,
    pub endpoints: BTreeMap<String, EndpointConfig>,
    pub cache_dir: Option<PathBuf>,
    pub blobs: Option<PathBuf>,
}

impl BackendSources {
    pub fn resolved(mut self, dir: &Path) -> Self {
        self.scripted.table = self.scripted.table.map(|p| dir.join(p));
        self.cache_dir = self.cache_dir.map(|p| dir.join(p));
        self.blobs = self.blobs.map(|p| dir.join(p));
        self
    }
}

pub struct Backends {
    kind: BackendKind,
    sources: BackendSources,
    table: ScriptedBackend,
    log_dir: PathBuf,
}

impl Backends {
    pub fn new(kind: BackendKind, sources: BackendSources, log_dir: &Path) -> Result<Self, CliError> {
        let mut table = match (&kind, &sources.scripted.table) {
            (BackendKind::Scripted, Some(path)) => {
                ScriptedBackend::load_jsonl(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
            }
            _ => ScriptedBackend::new(),
        };
        if let Some(d) = &sources.scripted.default_response {
            table = table.with_default(d.clone());
        }
        Ok(Self {
            kind,
            sources,
            table,
            log_dir: log_dir.to_path_buf(),
        })
    }

    pub fn gateway(&self, name: &str) -> Result<Gateway, CliError> {
        self.build(name, None)
    }

    /// Like [`Backends::gateway`], but a scripted backend falls back to
    /// `fallback` for requests its table does not cover.
    pub fn gateway_with_fallback(&self, name: &str, fallback: &str) -> Result<Gateway, CliError> {
        self.build(name, Some(fallback))
    }

    fn build(&self, name: &str, fallback: Option<&str>) -> Result<Gateway, CliError> {
        let gateway = match self.kind {
            BackendKind::Scripted => {
                let mut table = self.table.clone();
                if let (Some(f), None) = (fallback, &self.sources.scripted.default_response) {
                    table = table.with_default(f);
                }
                Gateway::new(table)
            }
            BackendKind::Endpoint => {
                let cfg = self
                    .sources
                    .endpoints
                    .get(name)
                    .ok_or_else(|| CliError::Config(format!("no [endpoints.{name}] section")))?;
                cfg.validate()
                    .map_err(|e| CliError::Config(format!("endpoint {name}: {e}")))?;
                let mut backend =
                    HttpBackend::new(cfg.clone()).map_err(|e| CliError::Config(format!("endpoint {name}: {e}")))?;
                if let Some(dir) = &self.sources.blobs {
                    backend = backend.with_blob_store(BlobStore::new(dir));
                }
                Gateway::new(backend).with_max_in_flight(cfg.max_in_flight)
            }
        };
        let gateway = match &self.sources.cache_dir {
            Some(dir) => gateway.with_cache(ResponseCache::on_disk(dir).map_err(CliError::io(dir))?),
            None => gateway,
        };
        let log = self.log_dir.join(format!("requests-{name}.jsonl"));
        gateway.with_log_file(&log).map_err(CliError::io(&log))
    }

    /// Digests of backend inputs that determine outputs.
    pub fn input_hashes(&self) -> Result<Vec<(String, String)>, CliError> {
        match (&self.kind, &self.sources.scripted.table) {
            (BackendKind::Scripted, Some(p)) => Ok(vec![("scripted_table".into(), crate::hash_input(p)?)]),
            _ => Ok(Vec::new()),
        }
    }
}
