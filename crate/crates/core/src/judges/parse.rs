//! Parsers for the two-line judge output contract.
//!
//! Both parsers look for `Label: value` lines, take the last one, and
//! normalize the value: case, surrounding quotes, markdown emphasis and a
//! trailing period are ignored.

use super::{Progress, StepCategory, Verdict, VerdictStatus};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("no `Status:` line in model output")]
    MissingStatus,
    #[error("unrecognized status {0:?}")]
    UnrecognizedStatus(String),
    #[error("no `Response:` line in model output")]
    MissingResponse,
    #[error("unrecognized step category {0:?}")]
    UnrecognizedCategory(String),
}

const QUOTES: &[char] = &['"', '\'', '`', '\u{201c}', '\u{201d}', '\u{2018}', '\u{2019}', '*'];

/// If `line` is `label: value` (label matched case-insensitively, markdown
/// decoration allowed around it), returns the raw value.
fn labeled<'a>(line: &'a str, label: &str) -> Option<&'a str> {
    let s = line.trim_start().trim_start_matches(['*', '#', '-', '>', ' ', '\t']);
    let head = s.get(..label.len())?;
    if !head.eq_ignore_ascii_case(label) {
        return None;
    }
    let rest = s[label.len()..].trim_start_matches(['*', ' ', '\t']);
    rest.strip_prefix(':')
}

fn normalize(value: &str) -> String {
    let mut v = value.trim();
    loop {
        let next = v.trim_end_matches('.').trim_matches(QUOTES).trim();
        if next == v {
            break;
        }
        v = next;
    }
    v.to_lowercase()
}

/// Index and value of the last line carrying `label`.
fn last_labeled<'a>(lines: &[&'a str], label: &str) -> Option<(usize, &'a str)> {
    lines
        .iter()
        .enumerate()
        .rev()
        .find_map(|(i, l)| labeled(l, label).map(|v| (i, v)))
}

/// Text from the last `Thoughts:` line before `end` up to `end`.
fn thoughts_before(lines: &[&str], end: usize) -> String {
    let Some((start, first)) = last_labeled(&lines[..end], "thoughts") else {
        return String::new();
    };
    let mut parts = vec![first.trim()];
    parts.extend(lines[start + 1..end].iter().map(|l| l.trim()));
    parts.join("\n").trim().to_string()
}

pub fn parse_trajectory_verdict(text: &str) -> Result<Verdict, ParseError> {
    let lines: Vec<&str> = text.lines().collect();
    let (idx, raw) = last_labeled(&lines, "status").ok_or(ParseError::MissingStatus)?;
    let status = match normalize(raw).as_str() {
        "success" => VerdictStatus::Success,
        "failure" => VerdictStatus::Failure,
        _ => return Err(ParseError::UnrecognizedStatus(raw.trim().to_string())),
    };
    Ok(Verdict {
        thoughts: thoughts_before(&lines, idx),
        status,
    })
}

pub fn parse_step_verdict(text: &str) -> Result<StepCategory, ParseError> {
    let lines: Vec<&str> = text.lines().collect();
    let (idx, raw) = last_labeled(&lines, "response").ok_or(ParseError::MissingResponse)?;
    let key = normalize(raw).replace([' ', '_'], "-");
    let value = Progress::ALL
        .into_iter()
        .find(|p| p.literal() == key)
        .ok_or_else(|| ParseError::UnrecognizedCategory(raw.trim().to_string()))?;
    Ok(StepCategory {
        value,
        thoughts: thoughts_before(&lines, idx),
    })
}
