//! Command implementations behind the `agent-judge` binary.

pub mod backend;
pub mod commands;

use std::fs;
use std::path::{Path, PathBuf};

use agent_judge::store::StoreError;
use serde::de::DeserializeOwned;

pub use backend::BackendKind;

/// A failure that stops a command before or while it writes output.
/// Per-task problems are not errors; they become error records.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
        move |source| CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub const EXIT_OK: u8 = 0;
pub const EXIT_TASK_ERRORS: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;

/// What a finished command reports back to the shell.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub task_errors: usize,
    /// Human-readable summary lines, printed to stdout.
    pub lines: Vec<String>,
}

impl Report {
    pub fn exit_code(&self) -> u8 {
        if self.task_errors > 0 {
            EXIT_TASK_ERRORS
        } else {
            EXIT_OK
        }
    }
}

pub fn exit_code(result: &Result<Report, CliError>) -> u8 {
    match result {
        Ok(r) => r.exit_code(),
        Err(_) => EXIT_CONFIG,
    }
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, clap::Args)]
pub struct CommonArgs {
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output run directory. Must not already hold a run.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for per-task parallelism.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long, value_enum, default_value_t = BackendKind::Scripted)]
    pub backend: BackendKind,
}

impl CommonArgs {
    pub fn new(out: impl Into<PathBuf>) -> Self {
        Self {
            config: None,
            out: out.into(),
            seed: 0,
            jobs: 1,
            backend: BackendKind::Scripted,
        }
    }

    pub fn with_config(mut self, path: impl Into<PathBuf>) -> Self {
        self.config = Some(path.into());
        self
    }

    pub fn require_config(&self) -> Result<&Path, CliError> {
        self.config
            .as_deref()
            .ok_or_else(|| CliError::Config("--config is required".into()))
    }

    pub(crate) fn pool(&self) -> Result<rayon::ThreadPool, CliError> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs.max(1))
            .build()
            .map_err(|e| CliError::Config(format!("cannot start {} workers: {e}", self.jobs)))
    }

    /// Refuses to touch a directory that already holds a run.
    pub(crate) fn check_out_dir(&self) -> Result<(), CliError> {
        if self.out.join(agent_judge::store::MANIFEST_FILE).exists() {
            return Err(StoreError::AlreadyExists(self.out.clone()).into());
        }
        fs::create_dir_all(&self.out).map_err(CliError::io(&self.out))
    }
}

/// A parsed config file with the directory its relative paths resolve
/// against and the digest of its bytes.
pub struct Loaded<T> {
    pub value: T,
    pub dir: PathBuf,
    pub sha256: String,
}

impl<T> Loaded<T> {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.dir.join(p)
    }
}

pub fn load_toml<T: DeserializeOwned>(path: &Path) -> Result<Loaded<T>, CliError> {
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    let value = toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok(Loaded {
        value,
        dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
        sha256: agent_judge::store::sha256_file(path).map_err(CliError::io(path))?,
    })
}

pub(crate) fn hash_input(path: &Path) -> Result<String, CliError> {
    agent_judge::store::sha256_file(path).map_err(CliError::io(path))
}
