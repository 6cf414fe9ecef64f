use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use super::ScreenshotRef;

#[derive(Debug, thiserror::Error)]
pub enum BlobError {
    #[error("blob {0} not found")]
    Missing(ScreenshotRef),
    #[error("blob {expected} is corrupt: content hashes to {actual}")]
    HashMismatch {
        expected: ScreenshotRef,
        actual: ScreenshotRef,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Content-addressed screenshot storage rooted at a directory containing `blobs/`.
#[derive(Debug, Clone)]
pub struct BlobStore {
    root: PathBuf,
}

impl BlobStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_of(&self, r: &ScreenshotRef) -> PathBuf {
        self.root.join(r.locator())
    }

    /// Stores bytes under their hash. Writing identical bytes twice is a no-op.
    pub fn put(&self, bytes: &[u8]) -> Result<ScreenshotRef, BlobError> {
        let r = ScreenshotRef::for_bytes(bytes);
        let path = self.path_of(&r);
        if path.exists() {
            return Ok(r);
        }
        let dir = path.parent().expect("blob path has a parent");
        fs::create_dir_all(dir)?;
        let tmp = dir.join(format!(".{}.tmp", r.hash()));
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, &path)?;
        Ok(r)
    }

    /// Reads the bytes back and checks them against the reference hash.
    pub fn get(&self, r: &ScreenshotRef) -> Result<Vec<u8>, BlobError> {
        let bytes = match fs::read(self.path_of(r)) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Err(BlobError::Missing(r.clone())),
            Err(e) => return Err(e.into()),
        };
        let actual = ScreenshotRef::for_bytes(&bytes);
        if &actual != r {
            return Err(BlobError::HashMismatch {
                expected: r.clone(),
                actual,
            });
        }
        Ok(bytes)
    }
}
