//! A synthetic GUI sandbox: declarative screen graphs, a simulator with a
//! ground-truth oracle, a skill-parameterized actor and a noisy evaluator.

mod actor;
mod env;
mod noise;
mod sim;
mod suite;

pub use actor::{ActorConfig, ScriptedActor, JUNK_TEXT};
pub use env::{replay, rollout, synth_per_step_labels, SandboxEnv};
pub use noise::{judge_with_noise, NoisyOracleEvaluator};
pub use sim::{apply, caption, distance, observe, satisfied, screenshot_bytes, shortest_path, SimState};
pub use suite::{Effect, Goal, SandboxTask, Screen, ScreenGraph, Suite, SuiteError, Widget, SHIPPED_SUITE};
