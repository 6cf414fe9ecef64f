//! Autonomous evaluation and refinement of GUI agents.
//!
//! The crate covers the whole loop: a trajectory model with a canonical action
//! grammar, a chat-completion gateway with caching and deterministic scripted
//! backends, a caption-then-reason perception stage, end-to-end and modular
//! judges with reward mappings, Reflexion and filtered behavior cloning,
//! agreement and rank-correlation metrics, and a synthetic device sandbox
//! with oracle success predicates.

pub mod gateway;
pub mod judges;
pub mod metrics;
pub mod perception;
pub mod refine;
pub mod sandbox;
pub mod seed;
pub mod store;
pub mod templates;
pub mod trajectory;

pub use gateway::{ChatMessage, Gateway, GenerationParams, Role};
pub use judges::{EvaluatorSpec, Granularity, RewardConfig, RewardSequence, StepCategory, Verdict, VerdictStatus};
pub use trajectory::{Action, DomainTag, Instruction, OcrToken, ScreenshotRef, State, Trajectory};
