pub mod evaluate;
pub mod filter_bc;
pub mod metrics;
pub mod reflexion;
pub mod sandbox_gen;

use std::path::Path;

use agent_judge::sandbox::Suite;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// One line of an oracle (or prediction) label file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuccessLabel {
    pub task_id: String,
    pub success: bool,
}

/// The shipped suite, or one parsed from `path`.
pub fn load_suite(path: Option<&Path>) -> Result<Suite, CliError> {
    match path {
        None => Ok(Suite::shipped()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(CliError::io(p))?;
            Suite::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))
        }
    }
}

fn default_min_confidence() -> f64 {
    agent_judge::perception::DEFAULT_MIN_CONFIDENCE
}
