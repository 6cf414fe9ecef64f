//! Evaluator-vs-oracle agreement, rank correlation between policy rankings,
//! positional action matching and success-rate arithmetic.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::trajectory::Action;

pub const DEFAULT_TAP_RADIUS: f64 = 0.14;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("input is empty")]
    EmptyInput,
    #[error("rankings cover different policy sets")]
    MismatchedPolicySets,
    #[error("policy {0:?} appears more than once in a ranking")]
    DuplicatePolicy(String),
    #[error("score for policy {0:?} is not finite")]
    NonFiniteScore(String),
    #[error("baseline rate is zero")]
    ZeroBaseline,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgmentPair {
    pub task_id: String,
    pub predicted: bool,
    pub oracle: bool,
}

impl JudgmentPair {
    pub fn new(task_id: impl Into<String>, predicted: bool, oracle: bool) -> Self {
        Self {
            task_id: task_id.into(),
            predicted,
            oracle,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub accuracy: f64,
    pub confusion: Confusion,
    pub n: usize,
}

impl AgreementReport {
    /// Aligned two-column summary.
    pub fn to_text(&self) -> String {
        let c = &self.confusion;
        let mut out = String::new();
        for (k, v) in [
            ("n", self.n.to_string()),
            ("accuracy", format!("{:.4}", self.accuracy)),
            ("tp", c.tp.to_string()),
            ("fp", c.fp.to_string()),
            ("tn", c.tn.to_string()),
            ("fn", c.fn_.to_string()),
        ] {
            let _ = writeln!(out, "{k:<10}{v:>10}");
        }
        out
    }

    /// Confusion matrix with oracle labels as rows, predictions as columns.
    pub fn confusion_csv(&self) -> String {
        let c = &self.confusion;
        format!(
            "oracle,predicted_success,predicted_failure\nsuccess,{},{}\nfailure,{},{}\n",
            c.tp, c.fn_, c.fp, c.tn
        )
    }
}

pub fn agreement(pairs: &[JudgmentPair]) -> Result<AgreementReport, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut c = Confusion::default();
    for p in pairs {
        match (p.predicted, p.oracle) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(AgreementReport {
        accuracy: (c.tp + c.tn) as f64 / pairs.len() as f64,
        confusion: c,
        n: pairs.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedPolicy {
    pub policy_id: String,
    pub score: f64,
}

pub type PolicyRanking = Vec<RankedPolicy>;

fn score_map(r: &[RankedPolicy]) -> Result<BTreeMap<&str, f64>, MetricsError> {
    let mut map = BTreeMap::new();
    for p in r {
        if !p.score.is_finite() {
            return Err(MetricsError::NonFiniteScore(p.policy_id.clone()));
        }
        if map.insert(p.policy_id.as_str(), p.score).is_some() {
            return Err(MetricsError::DuplicatePolicy(p.policy_id.clone()));
        }
    }
    Ok(map)
}

/// Kendall tau-a over all policy pairs. Pairs tied in either ranking count
/// as neither concordant nor discordant. Fewer than two policies is an
/// empty input.
pub fn kendall_tau(a: &[RankedPolicy], b: &[RankedPolicy]) -> Result<f64, MetricsError> {
    let ma = score_map(a)?;
    let mb = score_map(b)?;
    if !ma.keys().eq(mb.keys()) {
        return Err(MetricsError::MismatchedPolicySets);
    }
    let pts: Vec<(f64, f64)> = ma.iter().map(|(k, x)| (*x, mb[k])).collect();
    let n = pts.len();
    if n < 2 {
        return Err(MetricsError::EmptyInput);
    }
    let mut net: i64 = 0;
    for i in 0..n {
        for j in i + 1..n {
            let s = (pts[i].0 - pts[j].0).signum() * (pts[i].1 - pts[j].1).signum();
            if pts[i].0 != pts[j].0 && pts[i].1 != pts[j].1 {
                net += s as i64;
            }
        }
    }
    Ok(net as f64 / (n * (n - 1) / 2) as f64)
}

fn actions_match(p: &Action, r: &Action, tap_radius: f64) -> bool {
    match (p, r) {
        (Action::Click(a), Action::Click(b)) => a.distance(b) <= tap_radius,
        (Action::Stop(_), Action::Stop(_)) => true,
        _ => p == r,
    }
}

/// Fraction of reference positions whose predicted counterpart matches.
/// Positions past the end of `predicted` count as misses; clicks match
/// within `tap_radius`, stops match regardless of answer, everything else
/// must be equal.
pub fn action_match_score(predicted: &[Action], reference: &[Action], tap_radius: f64) -> Result<f64, MetricsError> {
    if reference.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let hits = predicted
        .iter()
        .zip(reference)
        .filter(|(p, r)| actions_match(p, r, tap_radius))
        .count();
    Ok(hits as f64 / reference.len() as f64)
}

pub fn success_rate(outcomes: &[bool]) -> Result<f64, MetricsError> {
    if outcomes.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    Ok(outcomes.iter().filter(|o| **o).count() as f64 / outcomes.len() as f64)
}

pub fn relative_improvement(base: f64, new: f64) -> Result<f64, MetricsError> {
    if base == 0.0 {
        return Err(MetricsError::ZeroBaseline);
    }
    Ok((new - base) / base)
}
