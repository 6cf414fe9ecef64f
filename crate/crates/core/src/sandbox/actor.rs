use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::sim::{apply, distance, shortest_path, SimState};
use super::suite::{Goal, ScreenGraph};
use crate::refine::{ActorPort, ReflexionMemory};
use crate::trajectory::{Action, Direction, Instruction};

/// Text a clumsy actor types into whatever field has focus.
pub const JUNK_TEXT: &str = "asdf";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActorConfig {
    /// Per-step probability of taking an optimal action.
    pub skill: f64,
    /// Skill gained per stored reflection.
    #[serde(default)]
    pub reflection_boost: f64,
}

impl ActorConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.skill) {
            return Err(format!("skill must lie in [0, 1], got {}", self.skill));
        }
        if !(self.reflection_boost >= 0.0 && self.reflection_boost.is_finite()) {
            return Err(format!("reflection_boost must be >= 0, got {}", self.reflection_boost));
        }
        Ok(())
    }

    pub fn effective_skill(&self, memory_len: usize) -> f64 {
        (self.skill + self.reflection_boost * memory_len as f64).min(1.0)
    }
}

/// Synthetic policy: optimal with probability `effective_skill`, otherwise
/// a uniformly drawn action that does not bring the goal closer.
pub struct ScriptedActor<'a> {
    graph: &'a ScreenGraph,
    goal: &'a Goal,
    config: ActorConfig,
}

impl<'a> ScriptedActor<'a> {
    pub fn new(graph: &'a ScreenGraph, goal: &'a Goal, config: ActorConfig) -> Self {
        Self { graph, goal, config }
    }

    /// Every action the actor may fumble into from `s`.
    fn detours(&self, s: &SimState) -> Vec<Action> {
        let screen = &self.graph.screens[s.screen];
        let mut all: Vec<Action> = screen
            .widgets
            .iter()
            .map(|w| {
                let (x, y) = w.center();
                Action::click(x, y).expect("widget centers lie in the unit square")
            })
            .collect();
        if s.focus.is_some() {
            all.push(Action::type_text(JUNK_TEXT));
        }
        if screen.enter.is_some() {
            all.push(Action::PressEnter);
        }
        if screen.back.is_some() {
            all.push(Action::PressBack);
        }
        all.push(Action::PressHome);
        all.push(Action::Swipe(Direction::Down));
        let here = distance(self.graph, self.goal, s).unwrap_or(usize::MAX);
        all.retain(|a| {
            let next = apply(self.graph, s, a);
            distance(self.graph, self.goal, &next).unwrap_or(usize::MAX) >= here
        });
        all
    }
}

impl ActorPort<SimState> for ScriptedActor<'_> {
    fn act(&mut self, _: &Instruction, memory: &ReflexionMemory, s: &SimState, seed: u64) -> Action {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let skill = self.config.effective_skill(memory.len());
        if rng.random_bool(skill) {
            if let Some((_, Some(a))) = shortest_path(self.graph, self.goal, s) {
                return a;
            }
        }
        self.detours(s)
            .choose(&mut rng)
            .cloned()
            .unwrap_or(Action::Swipe(Direction::Down))
    }

    fn reset(&mut self) {}

    fn policy_id(&self) -> String {
        format!(
            "scripted(skill={},boost={})",
            self.config.skill, self.config.reflection_boost
        )
    }
}
