use super::actor::ScriptedActor;
use super::sim::{apply, caption, distance, observe, satisfied, SimState};
use super::suite::{SandboxTask, ScreenGraph};
use crate::judges::Progress;
use crate::refine::{run_attempt, EnvError, Environment, ReflexionMemory};
use crate::trajectory::{Action, Instruction, State, Trajectory};

pub struct SandboxEnv<'a> {
    graph: &'a ScreenGraph,
    task: &'a SandboxTask,
    state: SimState,
    max_steps: usize,
    captions: bool,
}

impl<'a> SandboxEnv<'a> {
    pub fn new(graph: &'a ScreenGraph, task: &'a SandboxTask) -> Self {
        Self {
            graph,
            task,
            state: SimState::initial(graph),
            max_steps: task.max_steps,
            captions: false,
        }
    }

    pub fn with_max_steps(mut self, n: usize) -> Self {
        self.max_steps = n;
        self
    }

    /// Attach the synthesized caption to every observed state.
    pub fn with_captions(mut self, on: bool) -> Self {
        self.captions = on;
        self
    }

    pub fn sim_state(&self) -> &SimState {
        &self.state
    }
}

impl Environment for SandboxEnv<'_> {
    type Observation = SimState;

    fn instruction(&self) -> &Instruction {
        &self.task.instruction
    }

    fn reset(&mut self) -> Result<(), EnvError> {
        self.state = SimState::initial(self.graph);
        Ok(())
    }

    fn state(&self) -> State {
        let s = observe(self.graph, &self.state);
        if self.captions {
            s.with_caption(caption(self.graph, &self.state))
        } else {
            s
        }
    }

    fn observation(&self) -> SimState {
        self.state.clone()
    }

    fn step(&mut self, action: &Action) -> Result<(), EnvError> {
        self.state = apply(self.graph, &self.state, action);
        Ok(())
    }

    fn is_terminal(&self) -> bool {
        self.state.stopped
    }

    fn max_steps(&self) -> usize {
        self.max_steps
    }

    fn agent_response(&self) -> Option<String> {
        self.state.response.clone()
    }

    fn oracle_success(&self) -> Option<bool> {
        Some(satisfied(&self.task.goal, &self.state))
    }
}

/// One memoryless attempt. Returns the trajectory (captioned states) and
/// the oracle label.
pub fn rollout(
    actor: &mut ScriptedActor<'_>,
    graph: &ScreenGraph,
    task: &SandboxTask,
    seed: u64,
    max_steps: usize,
) -> (Trajectory, bool) {
    let mut env = SandboxEnv::new(graph, task)
        .with_max_steps(max_steps)
        .with_captions(true);
    let t =
        run_attempt(&mut env, actor, &ReflexionMemory::default(), seed).expect("the sandbox environment never fails");
    let ok = env.oracle_success() == Some(true);
    (t, ok)
}

/// Simulator states visited by `actions`, starting from the initial state.
pub fn replay(graph: &ScreenGraph, actions: &[Action]) -> Vec<SimState> {
    let mut out = vec![SimState::initial(graph)];
    for a in actions {
        let next = apply(graph, out.last().expect("non-empty"), a);
        out.push(next);
    }
    out
}

/// Ground-truth per-step labels from goal distances: reaching the goal,
/// getting closer, getting farther (an unreachable goal is infinitely far),
/// or no change.
pub fn synth_per_step_labels(graph: &ScreenGraph, task: &SandboxTask, actions: &[Action]) -> Vec<Progress> {
    let states = replay(graph, actions);
    let dist = |s: &SimState| distance(graph, &task.goal, s).unwrap_or(usize::MAX);
    states
        .windows(2)
        .map(|w| {
            let (before, after) = (&w[0], &w[1]);
            if satisfied(&task.goal, after) && !satisfied(&task.goal, before) {
                return Progress::GoalReached;
            }
            match dist(after).cmp(&dist(before)) {
                std::cmp::Ordering::Less => Progress::TowardsGoal,
                std::cmp::Ordering::Greater => Progress::AwayFromGoal,
                std::cmp::Ordering::Equal => Progress::NotSure,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sandbox::{ActorConfig, Suite};
    use crate::trajectory::validate_trajectory;

    #[test]
    fn perfect_actor_takes_the_shortest_path() {
        let suite = Suite::shipped();
        for task in &suite.tasks {
            let g = suite.graph_of(task);
            let mut actor = ScriptedActor::new(
                g,
                &task.goal,
                ActorConfig {
                    skill: 1.0,
                    reflection_boost: 0.0,
                },
            );
            let (t, ok) = rollout(&mut actor, g, task, 11, task.max_steps);
            assert!(ok, "{}", task.instruction.task_id);
            assert_eq!(t.actions.len(), task.optimal_path_length);
            assert!(validate_trajectory(&t).is_empty());
            assert!(t.states.iter().all(|s| s.caption.is_some()));
            let labels = synth_per_step_labels(g, task, &t.actions);
            assert_eq!(labels.last(), Some(&Progress::GoalReached));
            assert!(labels[..labels.len() - 1].iter().all(|l| *l == Progress::TowardsGoal));
        }
    }

    #[test]
    fn rollouts_are_seed_deterministic() {
        let suite = Suite::shipped();
        let task = &suite.tasks[3];
        let g = suite.graph_of(task);
        let cfg = ActorConfig {
            skill: 0.5,
            reflection_boost: 0.0,
        };
        let run = |seed| {
            rollout(
                &mut ScriptedActor::new(g, &task.goal, cfg),
                g,
                task,
                seed,
                task.max_steps,
            )
        };
        assert_eq!(run(5), run(5));
        let distinct: std::collections::HashSet<_> = (0..20).map(|s| run(s).0.content_hash()).collect();
        assert!(distinct.len() > 1);
    }

    #[test]
    fn clumsy_actor_never_succeeds_and_labels_never_advance() {
        let suite = Suite::shipped();
        for task in &suite.tasks {
            let g = suite.graph_of(task);
            let mut actor = ScriptedActor::new(
                g,
                &task.goal,
                ActorConfig {
                    skill: 0.0,
                    reflection_boost: 0.0,
                },
            );
            let (t, ok) = rollout(&mut actor, g, task, 2, task.max_steps);
            assert!(!ok);
            assert_eq!(t.actions.len(), task.max_steps);
            let labels = synth_per_step_labels(g, task, &t.actions);
            assert!(labels
                .iter()
                .all(|l| matches!(l, Progress::NotSure | Progress::AwayFromGoal)));
        }
    }

    #[test]
    fn replay_matches_the_environment() {
        let suite = Suite::shipped();
        let task = &suite.tasks[9];
        let g = suite.graph_of(task);
        let mut actor = ScriptedActor::new(
            g,
            &task.goal,
            ActorConfig {
                skill: 0.6,
                reflection_boost: 0.0,
            },
        );
        let (t, _) = rollout(&mut actor, g, task, 4, task.max_steps);
        let states = replay(g, &t.actions);
        for (sim, observed) in states.iter().zip(&t.states) {
            assert_eq!(observe(g, sim).screenshot, observed.screenshot);
        }
    }
}
