//! Evaluator-driven agent refinement.
//!
//! [`reflexion_episode`] retries a task with verbal self-reflection after
//! every judged failure. [`filter_bc`] turns per-step rewards into a
//! behavior-cloning dataset.

mod bc;

use serde::{Deserialize, Serialize};

use crate::gateway::{ChatMessage, Gateway, GenerationParams};
use crate::judges::{evaluate, EvalError, EvaluatorSpec, Verdict, VerdictStatus};
use crate::seed::derive_seed;
use crate::templates;
use crate::trajectory::{Action, Instruction, State, Trajectory};

pub use bc::{filter_bc, self_training_export, BcSample, FilterError};

/// Reflections gathered on earlier failed attempts of one task.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReflexionMemory {
    pub reflections: Vec<String>,
}

impl ReflexionMemory {
    pub fn len(&self) -> usize {
        self.reflections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reflections.is_empty()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EnvError {
    #[error("screen {0:?} does not exist")]
    UnreachableScreen(String),
    #[error("{0}")]
    Other(String),
}

/// A resettable task environment.
pub trait Environment {
    /// What the actor gets to see.
    type Observation;

    fn instruction(&self) -> &Instruction;
    /// Restores the initial state exactly.
    fn reset(&mut self) -> Result<(), EnvError>;
    fn state(&self) -> State;
    fn observation(&self) -> Self::Observation;
    fn step(&mut self, action: &Action) -> Result<(), EnvError>;
    fn is_terminal(&self) -> bool;
    fn max_steps(&self) -> usize;
    fn agent_response(&self) -> Option<String>;
    /// Ground truth, when the environment can decide it.
    fn oracle_success(&self) -> Option<bool>;
}

pub trait ActorPort<O> {
    fn act(&mut self, instruction: &Instruction, memory: &ReflexionMemory, observation: &O, seed: u64) -> Action;
    fn reset(&mut self);
    fn policy_id(&self) -> String;
}

/// Inputs a judge may use besides the trajectory itself.
#[derive(Debug, Clone, Copy)]
pub struct JudgeContext {
    pub oracle_success: Option<bool>,
    pub draw_seed: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum JudgeError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("oracle judge needs an environment that reports ground truth")]
    NoOracle,
}

pub trait EpisodeJudge {
    fn judge(&self, t: &Trajectory, ctx: &JudgeContext) -> Result<Verdict, JudgeError>;
}

/// Judges with the environment's own success predicate.
pub struct OracleJudge;

impl EpisodeJudge for OracleJudge {
    fn judge(&self, _t: &Trajectory, ctx: &JudgeContext) -> Result<Verdict, JudgeError> {
        let ok = ctx.oracle_success.ok_or(JudgeError::NoOracle)?;
        Ok(Verdict::new(VerdictStatus::from_success(ok), "oracle"))
    }
}

/// Judges by running a model evaluator through a gateway.
pub struct ModelJudge<'a> {
    pub spec: &'a EvaluatorSpec,
    pub gateway: &'a Gateway,
}

impl EpisodeJudge for ModelJudge<'_> {
    fn judge(&self, t: &Trajectory, _ctx: &JudgeContext) -> Result<Verdict, JudgeError> {
        let e = evaluate(t, self.spec, self.gateway)?;
        Ok(match e.verdict {
            Some(v) => v,
            None => Verdict::new(
                VerdictStatus::from_success(e.judged_success()),
                "per-step evaluation; success read from the final step",
            ),
        })
    }
}

pub fn build_reflection_request(
    instruction: &Instruction,
    failed: &Trajectory,
    memory: &ReflexionMemory,
) -> Vec<ChatMessage> {
    let reflections = memory
        .reflections
        .iter()
        .enumerate()
        .map(|(i, r)| format!("{}. {r}", i + 1))
        .collect::<Vec<_>>()
        .join("\n");
    let actions = failed.rendered_actions();
    let user = templates::REFLECTION_USER
        .render(&[
            ("intent", &instruction.text),
            ("last_actions", &actions),
            ("response", failed.agent_response.as_deref().unwrap_or("N/A")),
            ("reflections", &reflections),
        ])
        .expect("reflection template placeholders are fixed");
    vec![
        ChatMessage::system(templates::REFLECTION_SYSTEM.text()),
        ChatMessage::user(user),
    ]
}

/// Plays one attempt from a fresh environment state.
pub fn run_attempt<E: Environment>(
    env: &mut E,
    actor: &mut dyn ActorPort<E::Observation>,
    memory: &ReflexionMemory,
    seed: u64,
) -> Result<Trajectory, EnvError> {
    env.reset()?;
    actor.reset();
    let instruction = env.instruction().clone();
    let mut actions = Vec::new();
    let mut states = vec![env.state()];
    while actions.len() < env.max_steps() && !env.is_terminal() {
        let step_seed = derive_seed(seed, &["step".into(), actions.len().into()]);
        let action = actor.act(&instruction, memory, &env.observation(), step_seed);
        env.step(&action)?;
        actions.push(action);
        states.push(env.state());
    }
    Ok(Trajectory {
        instruction,
        actions,
        states,
        agent_response: env.agent_response(),
        policy_id: actor.policy_id(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    /// Content hash of the attempt's trajectory record.
    pub trajectory_ref: String,
    pub verdict: Verdict,
    pub oracle_success: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflexionOutcome {
    pub task_id: String,
    pub rounds_used: usize,
    pub judged_success: bool,
    pub oracle_success: Option<bool>,
    pub per_round: Vec<RoundRecord>,
    pub memory: ReflexionMemory,
    pub final_trajectory: Option<Trajectory>,
    /// Set when an environment or evaluator failure cut the episode short.
    pub abort: Option<String>,
}

impl ReflexionOutcome {
    /// Ground-truth success had the round budget been `k`: the oracle label
    /// of the last attempt made in rounds `0..=k`.
    pub fn success_at_round(&self, k: usize) -> Option<bool> {
        self.per_round
            .iter()
            .take_while(|r| r.round <= k)
            .last()
            .and_then(|r| r.oracle_success)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReflexionConfig {
    /// Extra attempts after the first; 0 means a single attempt.
    pub max_rounds: usize,
    pub seed: u64,
}

/// Attempt, judge, reflect and retry until a judged success or until
/// `max_rounds + 1` attempts are spent.
pub fn reflexion_episode<E: Environment>(
    env: &mut E,
    actor: &mut dyn ActorPort<E::Observation>,
    judge: &dyn EpisodeJudge,
    reflector: &Gateway,
    cfg: ReflexionConfig,
) -> ReflexionOutcome {
    let instruction = env.instruction().clone();
    let task_id = instruction.task_id.clone();
    let mut memory = ReflexionMemory::default();
    let mut outcome = ReflexionOutcome {
        task_id: task_id.clone(),
        rounds_used: 0,
        judged_success: false,
        oracle_success: None,
        per_round: Vec::new(),
        memory: ReflexionMemory::default(),
        final_trajectory: None,
        abort: None,
    };

    for round in 0..=cfg.max_rounds {
        let attempt_seed = derive_seed(cfg.seed, &["attempt".into(), task_id.as_str().into(), round.into()]);
        let trajectory = match run_attempt(env, actor, &memory, attempt_seed) {
            Ok(t) => t,
            Err(e) => {
                outcome.abort = Some(format!("environment failure in round {round}: {e}"));
                break;
            }
        };
        let oracle = env.oracle_success();
        let ctx = JudgeContext {
            oracle_success: oracle,
            draw_seed: derive_seed(cfg.seed, &["judge".into(), task_id.as_str().into(), round.into()]),
        };
        outcome.rounds_used = round + 1;
        outcome.oracle_success = oracle;
        let verdict = match judge.judge(&trajectory, &ctx) {
            Ok(v) => v,
            Err(e) => {
                outcome.final_trajectory = Some(trajectory);
                outcome.judged_success = false;
                outcome.abort = Some(format!("evaluator failure in round {round}: {e}"));
                break;
            }
        };
        let success = verdict.status.is_success();
        outcome.per_round.push(RoundRecord {
            round,
            trajectory_ref: trajectory.content_hash(),
            verdict,
            oracle_success: oracle,
        });
        outcome.judged_success = success;
        if success || round == cfg.max_rounds {
            outcome.final_trajectory = Some(trajectory);
            break;
        }
        let request = build_reflection_request(&instruction, &trajectory, &memory);
        match reflector.complete(&request, &GenerationParams::default()) {
            Ok(text) => memory.reflections.push(text.trim().to_string()),
            Err(e) => {
                outcome.final_trajectory = Some(trajectory);
                outcome.abort = Some(format!("reflection failure in round {round}: {e}"));
                break;
            }
        }
    }
    outcome.memory = memory;
    outcome
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::ScriptedBackend;
    use crate::trajectory::{DomainTag, ScreenshotRef};

    /// Counter environment: success once `Stop` arrives after `need` clicks.
    struct Counter {
        instruction: Instruction,
        need: usize,
        clicks: usize,
        stopped: bool,
        resets: usize,
    }

    impl Counter {
        fn new(need: usize) -> Self {
            Self {
                instruction: Instruction::new("count", "Click twice then stop", DomainTag::Sandbox),
                need,
                clicks: 0,
                stopped: false,
                resets: 0,
            }
        }
    }

    impl Environment for Counter {
        type Observation = usize;

        fn instruction(&self) -> &Instruction {
            &self.instruction
        }
        fn reset(&mut self) -> Result<(), EnvError> {
            self.clicks = 0;
            self.stopped = false;
            self.resets += 1;
            Ok(())
        }
        fn state(&self) -> State {
            State::new(ScreenshotRef::for_bytes(&[self.clicks as u8, self.stopped as u8]))
        }
        fn observation(&self) -> usize {
            self.clicks
        }
        fn step(&mut self, action: &Action) -> Result<(), EnvError> {
            match action {
                Action::Click(_) => self.clicks += 1,
                Action::Stop(_) => self.stopped = true,
                _ => {}
            }
            Ok(())
        }
        fn is_terminal(&self) -> bool {
            self.stopped
        }
        fn max_steps(&self) -> usize {
            5
        }
        fn agent_response(&self) -> Option<String> {
            None
        }
        fn oracle_success(&self) -> Option<bool> {
            Some(self.stopped && self.clicks == self.need)
        }
    }

    /// Stops after one click on the first attempt, after two once it has
    /// a reflection.
    struct Learner;

    impl ActorPort<usize> for Learner {
        fn act(&mut self, _: &Instruction, memory: &ReflexionMemory, clicks: &usize, _: u64) -> Action {
            let target = if memory.is_empty() { 1 } else { 2 };
            if *clicks < target {
                Action::click(0.5, 0.5).unwrap()
            } else {
                Action::Stop(None)
            }
        }
        fn reset(&mut self) {}
        fn policy_id(&self) -> String {
            "learner".into()
        }
    }

    struct AlwaysFail;

    impl EpisodeJudge for AlwaysFail {
        fn judge(&self, _: &Trajectory, _: &JudgeContext) -> Result<Verdict, JudgeError> {
            Ok(Verdict::new(VerdictStatus::Failure, "no"))
        }
    }

    fn reflector() -> Gateway {
        Gateway::new(ScriptedBackend::new().with_default("Click one more time before stopping."))
    }

    #[test]
    fn retries_until_success() {
        let mut env = Counter::new(2);
        let gw = reflector();
        let out = reflexion_episode(
            &mut env,
            &mut Learner,
            &OracleJudge,
            &gw,
            ReflexionConfig { max_rounds: 3, seed: 1 },
        );
        assert_eq!(out.rounds_used, 2);
        assert_eq!(out.memory.len(), 1);
        assert!(out.judged_success);
        assert_eq!(out.oracle_success, Some(true));
        assert_eq!(out.success_at_round(0), Some(false));
        assert_eq!(out.success_at_round(3), Some(true));
        assert_eq!(env.resets, 2);
        assert_eq!(gw.backend_calls(), 1);
    }

    #[test]
    fn false_negatives_exhaust_the_budget() {
        let mut env = Counter::new(1);
        let gw = reflector();
        let out = reflexion_episode(
            &mut env,
            &mut Learner,
            &AlwaysFail,
            &gw,
            ReflexionConfig { max_rounds: 3, seed: 1 },
        );
        assert_eq!(out.rounds_used, 4);
        assert!(!out.judged_success);
        assert_eq!(out.per_round[0].oracle_success, Some(true));
        // Reflections push the learner off the one-click answer.
        assert_eq!(out.oracle_success, Some(false));
        assert_eq!(out.memory.len(), 3);
        assert_eq!(gw.backend_calls(), 3);
    }

    #[test]
    fn zero_rounds_is_one_attempt() {
        let mut env = Counter::new(2);
        let gw = reflector();
        let out = reflexion_episode(
            &mut env,
            &mut Learner,
            &AlwaysFail,
            &gw,
            ReflexionConfig { max_rounds: 0, seed: 1 },
        );
        assert_eq!(out.rounds_used, 1);
        assert_eq!(gw.backend_calls(), 0);
        assert!(out.final_trajectory.is_some());
    }

    #[test]
    fn reflector_failure_aborts_with_partial_record() {
        let mut env = Counter::new(2);
        let gw = Gateway::new(ScriptedBackend::new());
        let out = reflexion_episode(
            &mut env,
            &mut Learner,
            &OracleJudge,
            &gw,
            ReflexionConfig { max_rounds: 3, seed: 1 },
        );
        assert_eq!(out.rounds_used, 1);
        assert_eq!(out.per_round.len(), 1);
        assert!(out.abort.unwrap().contains("reflection failure"));
    }

    #[test]
    fn reflection_prompt_contents() {
        let mut env = Counter::new(2);
        let t = run_attempt(&mut env, &mut Learner, &ReflexionMemory::default(), 0).unwrap();
        let first = build_reflection_request(env.instruction(), &t, &ReflexionMemory::default());
        assert!(first[1]
            .text
            .contains("Reflections from earlier attempts:\n\n\nReflection:"));
        assert!(first[1].text.contains(&t.rendered_actions()));
        let memory = ReflexionMemory {
            reflections: vec!["Click twice.".into()],
        };
        let second = build_reflection_request(env.instruction(), &t, &memory);
        assert!(second[1].text.contains("Click twice."));
    }
}
