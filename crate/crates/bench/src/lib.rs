//! Shared fixtures for the benchmarks.

use agent_judge::judges::{rewards_from_categories, Progress};
use agent_judge::sandbox::{rollout, synth_per_step_labels, ActorConfig, ScriptedActor, Suite};
use agent_judge::{RewardConfig, RewardSequence, Trajectory};

/// `per_task` captioned rollouts of every shipped task, paired with their
/// simulator-derived per-step rewards.
pub fn sandbox_corpus(per_task: u64, skill: f64) -> Vec<(Trajectory, RewardSequence)> {
    let suite = Suite::shipped();
    let cfg = RewardConfig::default();
    let actor_cfg = ActorConfig {
        skill,
        reflection_boost: 0.0,
    };
    let mut out = Vec::new();
    for task in &suite.tasks {
        let graph = suite.graph_of(task);
        for seed in 0..per_task {
            let mut actor = ScriptedActor::new(graph, &task.goal, actor_cfg);
            let (t, _) = rollout(&mut actor, graph, task, seed, task.max_steps);
            let labels: Vec<Progress> = synth_per_step_labels(graph, task, &t.actions);
            let rewards = rewards_from_categories(&labels, &cfg);
            out.push((t, rewards));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_is_aligned() {
        let corpus = sandbox_corpus(2, 0.5);
        assert_eq!(corpus.len(), 48);
        assert!(corpus.iter().all(|(t, r)| t.actions.len() == r.values.len()));
    }
}
