use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{request_digest, ChatBackend, ChatMessage, Digest, GatewayError, GenerationParams};

/// One line of a scripted-response table file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedEntry {
    pub digest: Digest,
    pub response: String,
}

/// Deterministic test double: answers from a digest-keyed table.
#[derive(Debug, Clone, Default)]
pub struct ScriptedBackend {
    table: BTreeMap<Digest, String>,
    default_response: Option<String>,
}

impl ScriptedBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_default(mut self, response: impl Into<String>) -> Self {
        self.default_response = Some(response.into());
        self
    }

    pub fn insert(
        &mut self,
        messages: &[ChatMessage],
        params: &GenerationParams,
        response: impl Into<String>,
    ) -> Option<String> {
        self.table.insert(request_digest(messages, params), response.into())
    }

    /// Inserts unless the digest already maps to a different response.
    pub fn insert_consistent(
        &mut self,
        messages: &[ChatMessage],
        params: &GenerationParams,
        response: impl Into<String>,
    ) -> Result<(), Digest> {
        let digest = request_digest(messages, params);
        let response = response.into();
        match self.table.get(&digest) {
            Some(existing) if existing != &response => Err(digest),
            _ => {
                self.table.insert(digest, response);
                Ok(())
            }
        }
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn lookup(&self, digest: &Digest) -> Option<&str> {
        self.table
            .get(digest)
            .or(self.default_response.as_ref())
            .map(String::as_str)
    }

    pub fn load_jsonl(path: &Path) -> io::Result<Self> {
        let mut backend = Self::new();
        let reader = BufReader::new(fs::File::open(path)?);
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: ScriptedEntry = serde_json::from_str(&line).map_err(|e| {
                io::Error::new(
                    io::ErrorKind::InvalidData,
                    format!("{}:{}: {e}", path.display(), idx + 1),
                )
            })?;
            backend.table.insert(entry.digest, entry.response);
        }
        Ok(backend)
    }

    /// Writes the table sorted by digest so output is byte-stable.
    pub fn save_jsonl(&self, path: &Path) -> io::Result<()> {
        let mut w = io::BufWriter::new(fs::File::create(path)?);
        for (digest, response) in &self.table {
            let entry = ScriptedEntry {
                digest: *digest,
                response: response.clone(),
            };
            serde_json::to_writer(&mut w, &entry)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }
}

impl ChatBackend for ScriptedBackend {
    fn model_name(&self) -> &str {
        "scripted"
    }

    fn send(&self, messages: &[ChatMessage], params: &GenerationParams) -> Result<String, GatewayError> {
        let digest = request_digest(messages, params);
        self.lookup(&digest)
            .map(str::to_string)
            .ok_or(GatewayError::UnknownScriptedRequest(digest))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_file_roundtrip_and_conflicts() {
        let p = GenerationParams::default();
        let a = vec![ChatMessage::user("a")];
        let b = vec![ChatMessage::user("b")];
        let mut backend = ScriptedBackend::new();
        backend.insert(&a, &p, "one");
        backend.insert(&b, &p, "two");
        assert!(backend.insert_consistent(&a, &p, "one").is_ok());
        assert!(backend.insert_consistent(&a, &p, "uno").is_err());

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("table.jsonl");
        backend.save_jsonl(&path).unwrap();
        let loaded = ScriptedBackend::load_jsonl(&path).unwrap();
        assert_eq!(loaded.send(&a, &p).unwrap(), "one");
        assert_eq!(loaded.send(&b, &p).unwrap(), "two");
        assert_eq!(loaded.len(), 2);
    }

    #[test]
    fn default_response_covers_misses() {
        let backend = ScriptedBackend::new().with_default("fallback");
        let msgs = vec![ChatMessage::user("anything")];
        assert_eq!(backend.send(&msgs, &GenerationParams::default()).unwrap(), "fallback");
    }
}
