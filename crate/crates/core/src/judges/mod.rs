//! Model-based evaluators and the reward mappings built on their output.
//!
//! Two architectures share one interface. End-to-end judges see the final
//! screenshot directly; modular judges reason over captions produced by
//! [`crate::perception`]. Trajectory-level judging makes one model call and
//! yields a binary verdict; per-step judging makes one call per action and
//! yields a progress category for each.

mod parse;
mod prompts;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::gateway::{Gateway, GatewayError, GenerationParams};
use crate::trajectory::{validate_trajectory, DomainTag, Trajectory, Violation};

pub use parse::{parse_step_verdict, parse_trajectory_verdict, ParseError};
pub use prompts::{
    build_e2e_trajectory_prompt, build_modular_trajectory_prompt, build_step_prompt, PromptError, StateSlot,
    NO_RESPONSE,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerdictStatus {
    Success,
    Failure,
}

impl VerdictStatus {
    pub fn from_success(success: bool) -> Self {
        if success {
            Self::Success
        } else {
            Self::Failure
        }
    }

    pub fn is_success(self) -> bool {
        self == Self::Success
    }

    pub fn literal(self) -> &'static str {
        match self {
            Self::Success => "success",
            Self::Failure => "failure",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub thoughts: String,
    pub status: VerdictStatus,
}

impl Verdict {
    pub fn new(status: VerdictStatus, thoughts: impl Into<String>) -> Self {
        Self {
            thoughts: thoughts.into(),
            status,
        }
    }

    /// The judge output that parses back to this verdict.
    pub fn to_text(&self) -> String {
        format!("Thoughts: {}\nStatus: \"{}\"", self.thoughts, self.status.literal())
    }
}

/// Per-step progress class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Progress {
    #[serde(rename = "towards-the-goal")]
    TowardsGoal,
    NotSure,
    GoalReached,
    #[serde(rename = "away-from-the-goal")]
    AwayFromGoal,
}

impl Progress {
    pub const ALL: [Progress; 4] = [
        Progress::TowardsGoal,
        Progress::NotSure,
        Progress::GoalReached,
        Progress::AwayFromGoal,
    ];

    pub fn literal(self) -> &'static str {
        match self {
            Progress::TowardsGoal => "towards-the-goal",
            Progress::NotSure => "not-sure",
            Progress::GoalReached => "goal-reached",
            Progress::AwayFromGoal => "away-from-the-goal",
        }
    }
}

impl fmt::Display for Progress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.literal())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepCategory {
    pub value: Progress,
    pub thoughts: String,
}

impl StepCategory {
    pub fn new(value: Progress, thoughts: impl Into<String>) -> Self {
        Self {
            value,
            thoughts: thoughts.into(),
        }
    }

    pub fn to_text(&self) -> String {
        format!("Thoughts: {}\nResponse: \"{}\"", self.thoughts, self.value.literal())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    TrajectoryLevel,
    PerStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardConfig {
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default = "default_d")]
    pub d: f64,
    #[serde(default)]
    pub not_sure_value: f64,
}

fn default_p() -> f64 {
    0.5
}

fn default_d() -> f64 {
    -1.0
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            p: default_p(),
            d: default_d(),
            not_sure_value: 0.0,
        }
    }
}

impl RewardConfig {
    /// Checks `d < 0 <= not_sure_value <= p <= 1`.
    pub fn validate(&self) -> Result<(), String> {
        let ok = self.d < 0.0
            && 0.0 <= self.not_sure_value
            && self.not_sure_value <= self.p
            && self.p <= 1.0
            && self.d.is_finite();
        if ok {
            Ok(())
        } else {
            Err(format!(
                "reward config must satisfy d < 0 <= not_sure_value <= p <= 1, got p={} d={} not_sure_value={}",
                self.p, self.d, self.not_sure_value
            ))
        }
    }

    pub fn reward(&self, progress: Progress) -> f64 {
        match progress {
            Progress::GoalReached => 1.0,
            Progress::TowardsGoal => self.p,
            Progress::NotSure => self.not_sure_value,
            Progress::AwayFromGoal => self.d,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardSequence {
    pub values: Vec<f64>,
    pub granularity: Granularity,
}

impl RewardSequence {
    /// Trajectory-level sequences are zero except a final 0 or 1.
    pub fn is_well_formed(&self) -> bool {
        match self.granularity {
            Granularity::PerStep => self.values.iter().all(|v| v.is_finite()),
            Granularity::TrajectoryLevel => match self.values.split_last() {
                Some((last, rest)) => rest.iter().all(|v| *v == 0.0) && (*last == 0.0 || *last == 1.0),
                None => true,
            },
        }
    }
}

/// `[0, ..., 0, 1]` for a success, all zeros for a failure.
pub fn rewards_from_verdict(status: VerdictStatus, action_count: usize) -> RewardSequence {
    let mut values = vec![0.0; action_count];
    if let Some(last) = values.last_mut() {
        *last = if status.is_success() { 1.0 } else { 0.0 };
    }
    RewardSequence {
        values,
        granularity: Granularity::TrajectoryLevel,
    }
}

pub fn rewards_from_categories(cats: &[Progress], cfg: &RewardConfig) -> RewardSequence {
    RewardSequence {
        values: cats.iter().map(|c| cfg.reward(*c)).collect(),
        granularity: Granularity::PerStep,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    EndToEnd,
    Modular,
}

/// Which evaluator to run and against which named endpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluatorSpec {
    pub architecture: Architecture,
    pub granularity: Granularity,
    pub domain_tag: DomainTag,
    #[serde(default)]
    pub vision_endpoint: Option<String>,
    #[serde(default)]
    pub text_endpoint: Option<String>,
    #[serde(default)]
    pub reward_config: RewardConfig,
}

impl EvaluatorSpec {
    pub fn validate(&self) -> Result<(), String> {
        self.reward_config.validate()?;
        match self.architecture {
            Architecture::EndToEnd if self.vision_endpoint.is_none() => {
                Err("end_to_end architecture requires vision_endpoint".into())
            }
            Architecture::Modular if self.text_endpoint.is_none() => {
                Err("modular architecture requires text_endpoint".into())
            }
            Architecture::EndToEnd if self.granularity == Granularity::PerStep => {
                Err("per_step granularity is only available with the modular architecture".into())
            }
            _ => Ok(()),
        }
    }

    /// The endpoint this spec sends judge requests to.
    pub fn judge_endpoint(&self) -> Option<&str> {
        match self.architecture {
            Architecture::EndToEnd => self.vision_endpoint.as_deref(),
            Architecture::Modular => self.text_endpoint.as_deref(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("invalid evaluator spec: {0}")]
    InvalidSpec(String),
    #[error("invalid trajectory: {}", join_violations(.0))]
    InvalidTrajectory(Vec<Violation>),
    #[error("{}state {state} has no caption", step_prefix(*.step))]
    MissingCaption { step: Option<usize>, state: usize },
    #[error("{}{source}", step_prefix(*.step))]
    Gateway {
        step: Option<usize>,
        #[source]
        source: GatewayError,
    },
    #[error("{}{source}", step_prefix(*.step))]
    Parse {
        step: Option<usize>,
        #[source]
        source: ParseError,
    },
}

fn step_prefix(step: Option<usize>) -> String {
    step.map(|s| format!("step {s}: ")).unwrap_or_default()
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

impl EvalError {
    pub fn step(&self) -> Option<usize> {
        match self {
            EvalError::MissingCaption { step, .. }
            | EvalError::Gateway { step, .. }
            | EvalError::Parse { step, .. } => *step,
            _ => None,
        }
    }
}

/// Everything one evaluation produced: the mapped rewards plus the parsed
/// judge outputs they came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub rewards: RewardSequence,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Verdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<Vec<StepCategory>>,
}

impl Evaluation {
    /// Success reading of the evaluation: the verdict, or a goal-reached
    /// final step for per-step runs.
    pub fn judged_success(&self) -> bool {
        match (&self.verdict, &self.steps) {
            (Some(v), _) => v.status.is_success(),
            (None, Some(steps)) => steps.last().is_some_and(|s| s.value == Progress::GoalReached),
            (None, None) => false,
        }
    }
}

/// Scores `t` under `spec`, sending every judge request through `gateway`.
pub fn evaluate(t: &Trajectory, spec: &EvaluatorSpec, gateway: &Gateway) -> Result<Evaluation, EvalError> {
    spec.validate().map_err(EvalError::InvalidSpec)?;
    let violations = validate_trajectory(t);
    if !violations.is_empty() {
        return Err(EvalError::InvalidTrajectory(violations));
    }
    let params = GenerationParams::default();
    let n = t.actions.len();

    match spec.granularity {
        Granularity::TrajectoryLevel => {
            let messages = match spec.architecture {
                Architecture::EndToEnd => build_e2e_trajectory_prompt(t),
                Architecture::Modular => build_modular_trajectory_prompt(t),
            }
            .map_err(|_| EvalError::MissingCaption { step: None, state: n })?;
            let text = gateway
                .complete(&messages, &params)
                .map_err(|source| EvalError::Gateway { step: None, source })?;
            let verdict = parse_trajectory_verdict(&text).map_err(|source| EvalError::Parse { step: None, source })?;
            Ok(Evaluation {
                rewards: rewards_from_verdict(verdict.status, n),
                verdict: Some(verdict),
                steps: None,
            })
        }
        Granularity::PerStep => {
            let mut steps = Vec::with_capacity(n);
            for (i, action) in t.actions.iter().enumerate() {
                let step = Some(i);
                let messages =
                    build_step_prompt(&t.instruction, action, &t.states[i], &t.states[i + 1]).map_err(|e| {
                        EvalError::MissingCaption {
                            step,
                            state: match e {
                                PromptError::MissingCaption(StateSlot::Current) => i,
                                _ => i + 1,
                            },
                        }
                    })?;
                let text = gateway
                    .complete(&messages, &params)
                    .map_err(|source| EvalError::Gateway { step, source })?;
                steps.push(parse_step_verdict(&text).map_err(|source| EvalError::Parse { step, source })?);
            }
            let cats: Vec<Progress> = steps.iter().map(|s| s.value).collect();
            Ok(Evaluation {
                rewards: rewards_from_categories(&cats, &spec.reward_config),
                verdict: None,
                steps: Some(steps),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::ScriptedBackend;
    use crate::trajectory::{Action, Instruction, ScreenshotRef, State};

    fn spec(arch: Architecture, gran: Granularity) -> EvaluatorSpec {
        EvaluatorSpec {
            architecture: arch,
            granularity: gran,
            domain_tag: DomainTag::Sandbox,
            vision_endpoint: Some("vision".into()),
            text_endpoint: Some("text".into()),
            reward_config: RewardConfig::default(),
        }
    }

    fn captioned(n: usize) -> Trajectory {
        Trajectory {
            instruction: Instruction::new("s1", "Open the alarm app", DomainTag::Sandbox),
            actions: (0..n).map(|i| Action::click(0.1 * i as f64, 0.5).unwrap()).collect(),
            states: (0..=n)
                .map(|i| State::new(ScreenshotRef::for_bytes(&[i as u8])).with_caption(format!("# S{i}")))
                .collect(),
            agent_response: None,
            policy_id: "p".into(),
        }
    }

    #[test]
    fn verdict_rewards() {
        assert_eq!(
            rewards_from_verdict(VerdictStatus::Success, 4).values,
            [0.0, 0.0, 0.0, 1.0]
        );
        assert_eq!(rewards_from_verdict(VerdictStatus::Failure, 4).values, [0.0; 4]);
        assert_eq!(rewards_from_verdict(VerdictStatus::Success, 1).values, [1.0]);
    }

    #[test]
    fn category_rewards() {
        let cfg = RewardConfig::default();
        use Progress::*;
        assert_eq!(
            rewards_from_categories(&[TowardsGoal, TowardsGoal, GoalReached], &cfg).values,
            [0.5, 0.5, 1.0]
        );
        assert_eq!(rewards_from_categories(&[AwayFromGoal], &cfg).values, [-1.0]);
        assert_eq!(rewards_from_categories(&[NotSure], &cfg).values, [0.0]);
    }

    #[test]
    fn reward_config_bounds() {
        assert!(RewardConfig::default().validate().is_ok());
        for bad in [
            RewardConfig {
                d: 0.0,
                ..Default::default()
            },
            RewardConfig {
                p: 1.5,
                ..Default::default()
            },
            RewardConfig {
                not_sure_value: 0.6,
                ..Default::default()
            },
            RewardConfig {
                not_sure_value: -0.1,
                ..Default::default()
            },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn spec_requirements() {
        let mut s = spec(Architecture::EndToEnd, Granularity::PerStep);
        assert!(s.validate().is_err());
        s.granularity = Granularity::TrajectoryLevel;
        assert!(s.validate().is_ok());
        s.vision_endpoint = None;
        assert!(s.validate().is_err());
        let mut m = spec(Architecture::Modular, Granularity::PerStep);
        assert!(m.validate().is_ok());
        m.text_endpoint = None;
        assert!(m.validate().is_err());
    }

    #[test]
    fn trajectory_level_is_one_call() {
        let t = captioned(3);
        let gw = Gateway::new(ScriptedBackend::new().with_default("Thoughts: ok\nStatus: success"));
        let e = evaluate(&t, &spec(Architecture::EndToEnd, Granularity::TrajectoryLevel), &gw).unwrap();
        assert_eq!(e.rewards.values, [0.0, 0.0, 1.0]);
        assert_eq!(gw.backend_calls(), 1);
        assert!(e.judged_success());
    }

    #[test]
    fn per_step_is_one_call_per_action() {
        let t = captioned(2);
        let s = spec(Architecture::Modular, Granularity::PerStep);
        let p = GenerationParams::default();
        let mut backend = ScriptedBackend::new();
        for (i, reply) in ["towards-the-goal", "goal-reached"].iter().enumerate() {
            let m = build_step_prompt(&t.instruction, &t.actions[i], &t.states[i], &t.states[i + 1]).unwrap();
            backend.insert(&m, &p, format!("Thoughts: t\nResponse: \"{reply}\""));
        }
        let gw = Gateway::new(backend);
        let e = evaluate(&t, &s, &gw).unwrap();
        assert_eq!(e.rewards.values, [0.5, 1.0]);
        assert_eq!(gw.backend_calls(), 2);
        assert!(e.judged_success());
    }

    #[test]
    fn per_step_error_names_step() {
        let t = captioned(3);
        let s = spec(Architecture::Modular, Granularity::PerStep);
        let p = GenerationParams::default();
        let mut backend = ScriptedBackend::new();
        for i in 0..3 {
            let m = build_step_prompt(&t.instruction, &t.actions[i], &t.states[i], &t.states[i + 1]).unwrap();
            let reply = if i == 1 {
                "Response: maybe"
            } else {
                "Response: not-sure"
            };
            backend.insert(&m, &p, reply);
        }
        let err = evaluate(&t, &s, &Gateway::new(backend)).unwrap_err();
        assert_eq!(err.step(), Some(1));
        assert!(matches!(
            err,
            EvalError::Parse {
                source: ParseError::UnrecognizedCategory(_),
                ..
            }
        ));
    }

    #[test]
    fn unrecognized_status_is_an_error() {
        let t = captioned(1);
        let gw = Gateway::new(ScriptedBackend::new().with_default("Status: partial"));
        let err = evaluate(&t, &spec(Architecture::Modular, Granularity::TrajectoryLevel), &gw).unwrap_err();
        assert!(matches!(
            err,
            EvalError::Parse {
                source: ParseError::UnrecognizedStatus(_),
                ..
            }
        ));
    }

    #[test]
    fn text_roundtrips_through_parsers() {
        for status in [VerdictStatus::Success, VerdictStatus::Failure] {
            let v = Verdict::new(status, "because");
            assert_eq!(parse_trajectory_verdict(&v.to_text()).unwrap(), v);
        }
        for p in Progress::ALL {
            let c = StepCategory::new(p, "because");
            assert_eq!(parse_step_verdict(&c.to_text()).unwrap(), c);
        }
    }
}
