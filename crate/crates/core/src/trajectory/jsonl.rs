//! One-trajectory-per-line JSONL interchange format.

use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

use super::{Action, DomainTag, Instruction, OcrToken, ScreenshotRef, State, Trajectory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryRecord {
    pub task_id: String,
    pub instruction: String,
    #[serde(default = "default_domain")]
    pub domain: DomainTag,
    pub policy_id: String,
    pub actions: Vec<Action>,
    pub screenshots: Vec<ScreenshotRef>,
    pub ocr: Vec<Option<Vec<OcrToken>>>,
    pub captions: Vec<Option<String>>,
    pub response: Option<String>,
}

fn default_domain() -> DomainTag {
    DomainTag::Web
}

impl From<&Trajectory> for TrajectoryRecord {
    fn from(t: &Trajectory) -> Self {
        Self {
            task_id: t.instruction.task_id.clone(),
            instruction: t.instruction.text.clone(),
            domain: t.instruction.domain_tag,
            policy_id: t.policy_id.clone(),
            actions: t.actions.clone(),
            screenshots: t.states.iter().map(|s| s.screenshot.clone()).collect(),
            ocr: t.states.iter().map(|s| s.ocr.clone()).collect(),
            captions: t.states.iter().map(|s| s.caption.clone()).collect(),
            response: t.agent_response.clone(),
        }
    }
}

impl TryFrom<TrajectoryRecord> for Trajectory {
    type Error = String;

    fn try_from(r: TrajectoryRecord) -> Result<Self, Self::Error> {
        let n = r.screenshots.len();
        if r.ocr.len() != n || r.captions.len() != n {
            return Err(format!(
                "per-state arrays disagree: {} screenshots, {} ocr, {} captions",
                n,
                r.ocr.len(),
                r.captions.len()
            ));
        }
        let states = r
            .screenshots
            .into_iter()
            .zip(r.ocr)
            .zip(r.captions)
            .map(|((screenshot, ocr), caption)| State {
                screenshot,
                ocr,
                caption,
            })
            .collect();
        Ok(Trajectory {
            instruction: Instruction::new(r.task_id, r.instruction, r.domain),
            actions: r.actions,
            states,
            agent_response: r.response,
            policy_id: r.policy_id,
        })
    }
}

impl Trajectory {
    /// Hex SHA-256 of the trajectory's JSONL record.
    pub fn content_hash(&self) -> String {
        let bytes = serde_json::to_vec(&TrajectoryRecord::from(self)).expect("record serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum JsonlError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// A parsed line: its 1-based line number and either the trajectory or the
/// reason it could not be read. Malformed lines do not abort the read.
#[derive(Debug)]
pub struct TrajectoryLine {
    pub line: usize,
    pub parsed: Result<Trajectory, JsonlError>,
}

pub fn read_trajectories(path: &Path) -> io::Result<Vec<TrajectoryLine>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let text = line?;
        if text.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<TrajectoryRecord>(&text)
            .map_err(|e| e.to_string())
            .and_then(Trajectory::try_from)
            .map_err(|message| JsonlError::Line { line: line_no, message });
        out.push(TrajectoryLine { line: line_no, parsed });
    }
    Ok(out)
}

pub fn write_trajectories<'a>(path: &Path, trajectories: impl IntoIterator<Item = &'a Trajectory>) -> io::Result<()> {
    let mut f = io::BufWriter::new(fs::File::create(path)?);
    for t in trajectories {
        serde_json::to_writer(&mut f, &TrajectoryRecord::from(t))?;
        f.write_all(b"\n")?;
    }
    f.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::tests::sample_trajectory;

    #[test]
    fn file_roundtrip_with_bad_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        let mut t = sample_trajectory(2, 3);
        t.states[1].caption = Some("# Screen".into());
        t.states[2].ocr = Some(vec![OcrToken::new("Hi", [0.1, 0.1, 0.2, 0.2], 0.9)]);
        t.agent_response = Some("done".into());
        write_trajectories(&path, [&t]).unwrap();
        let mut text = fs::read_to_string(&path).unwrap();
        text.push_str("{\"task_id\": 3}\n");
        fs::write(&path, text).unwrap();

        let lines = read_trajectories(&path).unwrap();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0].parsed.as_ref().unwrap(), &t);
        match &lines[1].parsed {
            Err(JsonlError::Line { line, .. }) => assert_eq!(*line, 2),
            other => panic!("expected line error, got {other:?}"),
        }
    }

    #[test]
    fn ragged_state_arrays_rejected() {
        let mut r = TrajectoryRecord::from(&sample_trajectory(1, 2));
        r.captions.pop();
        assert!(Trajectory::try_from(r).is_err());
    }
}
