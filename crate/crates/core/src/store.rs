//! Flat-file run store: an immutable `manifest.json` plus an append-only
//! `records.jsonl`, one directory per run.

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

use crate::judges::{Evaluation, EvaluatorSpec};
use crate::metrics::AgreementReport;
use crate::refine::{BcSample, ReflexionOutcome};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const RECORDS_FILE: &str = "records.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Evaluate,
    Reflexion,
    FilterBc,
    Metrics,
    SandboxGen,
}

impl Command {
    pub fn as_str(&self) -> &'static str {
        match self {
            Command::Evaluate => "evaluate",
            Command::Reflexion => "reflexion",
            Command::FilterBc => "filter-bc",
            Command::Metrics => "metrics",
            Command::SandboxGen => "sandbox-gen",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub run_id: String,
    pub command: Command,
    pub evaluator_spec: Option<EvaluatorSpec>,
    /// Model names of the endpoints involved. Never URLs with credentials
    /// or tokens.
    pub endpoints: Vec<String>,
    pub seed: u64,
    pub assets_hash: String,
    /// Input name to sha256 of its bytes.
    pub inputs: BTreeMap<String, String>,
    /// Free-form run parameters (thresholds, round budgets, rates).
    #[serde(default)]
    pub params: BTreeMap<String, String>,
    /// Seconds since the Unix epoch; `SOURCE_DATE_EPOCH` when set.
    pub created_unix: u64,
}

impl RunManifest {
    /// Builds a manifest whose run id is a digest of everything that
    /// determines the run's outputs.
    pub fn new(
        command: Command,
        evaluator_spec: Option<EvaluatorSpec>,
        endpoints: Vec<String>,
        seed: u64,
        inputs: BTreeMap<String, String>,
        params: BTreeMap<String, String>,
    ) -> Self {
        let assets_hash = crate::templates::assets_hash();
        let mut h = Sha256::new();
        h.update(command.as_str());
        h.update([0]);
        h.update(serde_json::to_vec(&evaluator_spec).expect("spec serializes"));
        h.update(serde_json::to_vec(&endpoints).expect("names serialize"));
        h.update(seed.to_le_bytes());
        h.update(&assets_hash);
        h.update(serde_json::to_vec(&inputs).expect("map serializes"));
        h.update(serde_json::to_vec(&params).expect("map serializes"));
        let run_id = hex::encode(&h.finalize()[..8]);
        Self {
            run_id,
            command,
            evaluator_spec,
            endpoints,
            seed,
            assets_hash,
            inputs,
            params,
            created_unix: timestamp(),
        }
    }
}

fn timestamp() -> u64 {
    if let Some(t) = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|v| v.trim().parse().ok())
    {
        return t;
    }
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub fn sha256_file(path: &Path) -> io::Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum Payload {
    Evaluation(Evaluation),
    Reflexion(Box<ReflexionOutcome>),
    Agreement(AgreementReport),
    BcSamples(Vec<BcSample>),
    /// A task that could not be processed. `line` is the 1-based input line
    /// when the failure traces back to one.
    Error {
        line: Option<usize>,
        message: String,
    },
}

impl Payload {
    pub fn kind(&self) -> &'static str {
        match self {
            Payload::Evaluation(_) => "evaluation",
            Payload::Reflexion(_) => "reflexion",
            Payload::Agreement(_) => "agreement",
            Payload::BcSamples(_) => "bc_samples",
            Payload::Error { .. } => "error",
        }
    }

    pub fn is_error(&self) -> bool {
        matches!(self, Payload::Error { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub run_id: String,
    pub task_id: String,
    #[serde(flatten)]
    pub payload: Payload,
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{0} already holds a run manifest")]
    AlreadyExists(PathBuf),
    #[error("{path}:{line}: {source}")]
    Json {
        path: PathBuf,
        line: usize,
        source: serde_json::Error,
    },
    #[error("duplicate {kind} record for task {task_id:?}")]
    Duplicate { task_id: String, kind: &'static str },
    #[error("{path}:{line}: record belongs to run {found}, expected {expected}")]
    ForeignRecord {
        path: PathBuf,
        line: usize,
        found: String,
        expected: String,
    },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Single writer for one run directory.
pub struct RunWriter {
    dir: PathBuf,
    manifest: RunManifest,
    records: BufWriter<File>,
    seen: HashSet<(String, &'static str)>,
}

impl RunWriter {
    /// Creates `dir` if needed and writes the manifest. Fails if the
    /// directory already holds one.
    pub fn create(dir: &Path, manifest: RunManifest) -> Result<Self, StoreError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let mpath = dir.join(MANIFEST_FILE);
        let file = OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&mpath)
            .map_err(|e| {
                if e.kind() == io::ErrorKind::AlreadyExists {
                    StoreError::AlreadyExists(dir.to_path_buf())
                } else {
                    StoreError::Io {
                        path: mpath.clone(),
                        source: e,
                    }
                }
            })?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer_pretty(&mut w, &manifest).map_err(|e| StoreError::Io {
            path: mpath.clone(),
            source: e.into(),
        })?;
        w.write_all(b"\n").and_then(|_| w.flush()).map_err(io_err(&mpath))?;
        let rpath = dir.join(RECORDS_FILE);
        let records = File::create(&rpath).map_err(io_err(&rpath))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest,
            records: BufWriter::new(records),
            seen: HashSet::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn manifest(&self) -> &RunManifest {
        &self.manifest
    }

    pub fn append(&mut self, task_id: &str, payload: Payload) -> Result<(), StoreError> {
        let kind = payload.kind();
        if !self.seen.insert((task_id.to_string(), kind)) {
            return Err(StoreError::Duplicate {
                task_id: task_id.to_string(),
                kind,
            });
        }
        let record = ResultRecord {
            run_id: self.manifest.run_id.clone(),
            task_id: task_id.to_string(),
            payload,
        };
        let path = self.dir.join(RECORDS_FILE);
        serde_json::to_writer(&mut self.records, &record).map_err(|e| StoreError::Io {
            path: path.clone(),
            source: e.into(),
        })?;
        self.records
            .write_all(b"\n")
            .and_then(|_| self.records.flush())
            .map_err(io_err(&path))
    }
}

pub fn read_manifest(dir: &Path) -> Result<RunManifest, StoreError> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&text).map_err(|source| StoreError::Json {
        line: source.line(),
        path,
        source,
    })
}

/// Reads a JSONL file into `T`, reporting the 1-based line of the first
/// malformed entry. Blank lines are skipped.
pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, StoreError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| StoreError::Json {
            path: path.to_path_buf(),
            line: i + 1,
            source,
        })?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), StoreError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| StoreError::Io {
            path: path.to_path_buf(),
            source: e.into(),
        })?;
        w.write_all(b"\n").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// A run directory read back and validated: every record parses, belongs
/// to the manifest's run and is unique per (task, kind).
#[derive(Debug, Clone)]
pub struct Run {
    pub manifest: RunManifest,
    pub records: Vec<ResultRecord>,
}

impl Run {
    pub fn open(dir: &Path) -> Result<Self, StoreError> {
        let manifest = read_manifest(dir)?;
        let path = dir.join(RECORDS_FILE);
        let records: Vec<ResultRecord> = read_jsonl(&path)?;
        let mut seen = HashSet::new();
        for (i, r) in records.iter().enumerate() {
            if r.run_id != manifest.run_id {
                return Err(StoreError::ForeignRecord {
                    path,
                    line: i + 1,
                    found: r.run_id.clone(),
                    expected: manifest.run_id.clone(),
                });
            }
            if !seen.insert((r.task_id.as_str(), r.payload.kind())) {
                return Err(StoreError::Duplicate {
                    task_id: r.task_id.clone(),
                    kind: r.payload.kind(),
                });
            }
        }
        Ok(Self { manifest, records })
    }

    pub fn errors(&self) -> impl Iterator<Item = &ResultRecord> {
        self.records.iter().filter(|r| r.payload.is_error())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::judges::{rewards_from_verdict, VerdictStatus};

    fn manifest(seed: u64) -> RunManifest {
        RunManifest::new(
            Command::Evaluate,
            None,
            vec!["scripted".into()],
            seed,
            BTreeMap::new(),
            BTreeMap::new(),
        )
    }

    fn evaluation() -> Payload {
        Payload::Evaluation(Evaluation {
            rewards: rewards_from_verdict(VerdictStatus::Success, 2),
            verdict: None,
            steps: None,
        })
    }

    #[test]
    fn run_ids_follow_inputs() {
        assert_eq!(manifest(1).run_id, manifest(1).run_id);
        assert_ne!(manifest(1).run_id, manifest(2).run_id);
    }

    #[test]
    fn write_then_read_back() {
        let dir = tempfile::tempdir().unwrap();
        let run_dir = dir.path().join("run");
        let mut w = RunWriter::create(&run_dir, manifest(1)).unwrap();
        w.append("a", evaluation()).unwrap();
        w.append(
            "b",
            Payload::Error {
                line: Some(2),
                message: "bad".into(),
            },
        )
        .unwrap();
        assert!(matches!(w.append("a", evaluation()), Err(StoreError::Duplicate { .. })));
        drop(w);
        let run = Run::open(&run_dir).unwrap();
        assert_eq!(run.records.len(), 2);
        assert_eq!(run.errors().count(), 1);
        assert_eq!(run.manifest, manifest(1).clone_with_time(run.manifest.created_unix));
        assert!(matches!(
            RunWriter::create(&run_dir, manifest(1)),
            Err(StoreError::AlreadyExists(_))
        ));
    }

    #[test]
    fn foreign_and_malformed_records_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = RunWriter::create(dir.path(), manifest(1)).unwrap();
        w.append("a", evaluation()).unwrap();
        drop(w);
        let path = dir.path().join(RECORDS_FILE);
        let mut text = fs::read_to_string(&path).unwrap();
        text.push_str(&text.replace(&manifest(1).run_id, "0000000000000000"));
        fs::write(&path, &text).unwrap();
        assert!(matches!(
            Run::open(dir.path()),
            Err(StoreError::ForeignRecord { line: 2, .. })
        ));
        fs::write(&path, "{\"run_id\":1}\n").unwrap();
        assert!(matches!(Run::open(dir.path()), Err(StoreError::Json { line: 1, .. })));
    }

    impl RunManifest {
        fn clone_with_time(mut self, t: u64) -> Self {
            self.created_unix = t;
            self
        }
    }
}
