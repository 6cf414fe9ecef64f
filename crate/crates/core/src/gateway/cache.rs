use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::PathBuf;
use std::sync::RwLock;

use super::Digest;

/// Response cache keyed by [`super::cache_key`]. Optionally persisted as a
/// directory of `<key>.txt` files holding the exact response bytes.
#[derive(Debug)]
pub struct ResponseCache {
    dir: Option<PathBuf>,
    entries: RwLock<HashMap<Digest, String>>,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        Self {
            dir: None,
            entries: RwLock::new(HashMap::new()),
        }
    }

    pub fn on_disk(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self {
            dir: Some(dir),
            entries: RwLock::new(HashMap::new()),
        })
    }

    fn file_for(&self, key: &Digest) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{key}.txt")))
    }

    pub fn get(&self, key: &Digest) -> io::Result<Option<String>> {
        if let Some(hit) = self.entries.read().expect("cache lock").get(key) {
            return Ok(Some(hit.clone()));
        }
        let Some(path) = self.file_for(key) else {
            return Ok(None);
        };
        match fs::read_to_string(&path) {
            Ok(text) => {
                self.entries.write().expect("cache lock").insert(*key, text.clone());
                Ok(Some(text))
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }

    pub fn put(&self, key: &Digest, text: &str) -> io::Result<()> {
        let mut entries = self.entries.write().expect("cache lock");
        if let Some(path) = self.file_for(key) {
            let tmp = path.with_extension("tmp");
            fs::write(&tmp, text)?;
            fs::rename(&tmp, &path)?;
        }
        entries.insert(*key, text.to_string());
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disk_cache_survives_reopen_byte_exact() {
        let dir = tempfile::tempdir().unwrap();
        let key = Digest::of_bytes(b"k");
        let text = "Thoughts: ok\nStatus: \"success\"\n\u{00e9}";
        ResponseCache::on_disk(dir.path()).unwrap().put(&key, text).unwrap();
        let reopened = ResponseCache::on_disk(dir.path()).unwrap();
        assert_eq!(reopened.get(&key).unwrap().as_deref(), Some(text));
        assert!(dir.path().join(format!("{key}.txt")).exists());
        assert_eq!(reopened.get(&Digest::of_bytes(b"other")).unwrap(), None);
    }
}
