//! Trajectory data model: instruction, actions, observed states.

mod action;
mod blob;
mod jsonl;

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

pub use action::{parse_action, render_action, Action, ActionKind, Direction, Point};
pub use blob::{BlobError, BlobStore};
pub use jsonl::{read_trajectories, write_trajectories, JsonlError, TrajectoryLine, TrajectoryRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainTag {
    Web,
    Android,
    Ios,
    Sandbox,
}

impl fmt::Display for DomainTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DomainTag::Web => "web",
            DomainTag::Android => "android",
            DomainTag::Ios => "ios",
            DomainTag::Sandbox => "sandbox",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instruction {
    pub text: String,
    pub task_id: String,
    pub domain_tag: DomainTag,
}

impl Instruction {
    pub fn new(task_id: impl Into<String>, text: impl Into<String>, domain_tag: DomainTag) -> Self {
        Self {
            text: text.into(),
            task_id: task_id.into(),
            domain_tag,
        }
    }
}

/// SHA-256 of screenshot bytes, hex encoded. Bytes live at `blobs/<hash>.png`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScreenshotRef(String);

impl ScreenshotRef {
    pub fn for_bytes(bytes: &[u8]) -> Self {
        Self(hex::encode(Sha256::digest(bytes)))
    }

    /// Wraps an existing hash; returns `None` unless it is 64 lowercase hex digits.
    pub fn from_hash(hash: &str) -> Option<Self> {
        let ok = hash.len() == 64 && hash.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'));
        ok.then(|| Self(hash.to_string()))
    }

    pub fn hash(&self) -> &str {
        &self.0
    }

    /// Path of the blob relative to the store root.
    pub fn locator(&self) -> String {
        format!("blobs/{}.png", self.0)
    }
}

impl fmt::Display for ScreenshotRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcrToken {
    pub text: String,
    /// Normalized `(x0, y0, x1, y1)`.
    pub bbox: [f64; 4],
    pub confidence: f64,
}

impl OcrToken {
    pub fn new(text: impl Into<String>, bbox: [f64; 4], confidence: f64) -> Self {
        Self {
            text: text.into(),
            bbox,
            confidence,
        }
    }

    pub fn center(&self) -> (f64, f64) {
        let [x0, y0, x1, y1] = self.bbox;
        ((x0 + x1) / 2.0, (y0 + y1) / 2.0)
    }

    fn is_valid(&self) -> bool {
        let [x0, y0, x1, y1] = self.bbox;
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        self.bbox.iter().all(|v| unit(*v)) && x0 < x1 && y0 < y1 && unit(self.confidence)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub screenshot: ScreenshotRef,
    pub ocr: Option<Vec<OcrToken>>,
    pub caption: Option<String>,
}

impl State {
    pub fn new(screenshot: ScreenshotRef) -> Self {
        Self {
            screenshot,
            ocr: None,
            caption: None,
        }
    }

    pub fn with_ocr(mut self, ocr: Vec<OcrToken>) -> Self {
        self.ocr = Some(ocr);
        self
    }

    pub fn with_caption(mut self, caption: impl Into<String>) -> Self {
        self.caption = Some(caption.into());
        self
    }
}

/// Instruction `x`, actions `a_0..a_n` and states `s_0..s_{n+1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub instruction: Instruction,
    pub actions: Vec<Action>,
    pub states: Vec<State>,
    pub agent_response: Option<String>,
    pub policy_id: String,
}

impl Trajectory {
    pub fn task_id(&self) -> &str {
        &self.instruction.task_id
    }

    pub fn final_state(&self) -> Option<&State> {
        self.states.last()
    }

    /// The action history, one canonical string per line.
    pub fn rendered_actions(&self) -> String {
        self.actions.iter().map(render_action).collect::<Vec<_>>().join("\n")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    EmptyInstruction,
    EmptyActionSequence,
    LengthMismatch { actions: usize, states: usize },
    EmptyCaption { state: usize },
    InvalidOcrToken { state: usize, token: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyInstruction => write!(f, "instruction.text: must be non-empty"),
            Violation::EmptyActionSequence => write!(f, "actions: at least one action required"),
            Violation::LengthMismatch { actions, states } => write!(
                f,
                "states: expected {} states for {actions} actions, found {states}",
                actions + 1
            ),
            Violation::EmptyCaption { state } => {
                write!(f, "states[{state}].caption: must be non-empty when present")
            }
            Violation::InvalidOcrToken { state, token } => write!(
                f,
                "states[{state}].ocr[{token}]: bbox must satisfy x0<x1, y0<y1 within [0,1] and confidence within [0,1]"
            ),
        }
    }
}

/// Lists every invariant the trajectory breaks. Empty means valid.
pub fn validate_trajectory(t: &Trajectory) -> Vec<Violation> {
    let mut out = Vec::new();
    if t.instruction.text.trim().is_empty() {
        out.push(Violation::EmptyInstruction);
    }
    if t.actions.is_empty() {
        out.push(Violation::EmptyActionSequence);
    }
    if t.states.len() != t.actions.len() + 1 {
        out.push(Violation::LengthMismatch {
            actions: t.actions.len(),
            states: t.states.len(),
        });
    }
    for (i, state) in t.states.iter().enumerate() {
        if matches!(&state.caption, Some(c) if c.trim().is_empty()) {
            out.push(Violation::EmptyCaption { state: i });
        }
        for (j, token) in state.ocr.iter().flatten().enumerate() {
            if !token.is_valid() {
                out.push(Violation::InvalidOcrToken { state: i, token: j });
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RemapMode {
    Collection,
    Evaluation,
}

/// Bridges the Android swipe-up (app drawer) onto the iOS home screen.
///
/// Only `Swipe(Up)` changes: evaluation always maps it to `Swipe(Right)`,
/// collection picks left or right with equal probability from `rng_seed`.
pub fn remap_ios_action(action: &Action, mode: RemapMode, rng_seed: u64) -> Action {
    match (action, mode) {
        (Action::Swipe(Direction::Up), RemapMode::Evaluation) => Action::Swipe(Direction::Right),
        (Action::Swipe(Direction::Up), RemapMode::Collection) => {
            let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
            if rng.random_bool(0.5) {
                Action::Swipe(Direction::Right)
            } else {
                Action::Swipe(Direction::Left)
            }
        }
        _ => action.clone(),
    }
}
