use std::fs::{File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::Digest;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    CacheHit,
    Error(String),
}

impl Serialize for Outcome {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Outcome::Ok => s.serialize_str("ok"),
            Outcome::CacheHit => s.serialize_str("cache_hit"),
            Outcome::Error(kind) => s.serialize_str(&format!("error:{kind}")),
        }
    }
}

impl<'de> Deserialize<'de> for Outcome {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        Ok(match text.as_str() {
            "ok" => Outcome::Ok,
            "cache_hit" => Outcome::CacheHit,
            other => match other.strip_prefix("error:") {
                Some(kind) => Outcome::Error(kind.to_string()),
                None => return Err(serde::de::Error::custom(format!("unknown outcome {other}"))),
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub digest: Digest,
    pub model_name: String,
    pub latency_ms: u64,
    pub outcome: Outcome,
}

/// Append-only request log, kept in memory and optionally mirrored to JSONL.
#[derive(Debug)]
pub struct RequestLog {
    entries: Mutex<Vec<LogEntry>>,
    sink: Option<Mutex<BufWriter<File>>>,
}

impl RequestLog {
    pub fn in_memory() -> Self {
        Self {
            entries: Mutex::new(Vec::new()),
            sink: None,
        }
    }

    pub fn append_to(path: &Path) -> io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            entries: Mutex::new(Vec::new()),
            sink: Some(Mutex::new(BufWriter::new(file))),
        })
    }

    pub fn record(&self, entry: LogEntry) -> io::Result<()> {
        if let Some(sink) = &self.sink {
            let mut w = sink.lock().expect("log lock");
            serde_json::to_writer(&mut *w, &entry)?;
            w.write_all(b"\n")?;
            w.flush()?;
        }
        self.entries.lock().expect("log lock").push(entry);
        Ok(())
    }

    pub fn entries(&self) -> Vec<LogEntry> {
        self.entries.lock().expect("log lock").clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_log_appends_jsonl() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("requests.jsonl");
        let log = RequestLog::append_to(&path).unwrap();
        for outcome in [Outcome::Ok, Outcome::CacheHit, Outcome::Error("timeout".into())] {
            log.record(LogEntry {
                digest: Digest::of_bytes(b"r"),
                model_name: "m".into(),
                latency_ms: 3,
                outcome,
            })
            .unwrap();
        }
        let text = std::fs::read_to_string(&path).unwrap();
        let parsed: Vec<LogEntry> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(parsed, log.entries());
        assert!(text.contains("\"outcome\":\"error:timeout\""));
    }
}
