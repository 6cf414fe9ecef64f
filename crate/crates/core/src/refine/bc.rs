use serde::{Deserialize, Serialize};

use crate::judges::{Granularity, RewardSequence};
use crate::trajectory::{render_action, ScreenshotRef, Trajectory};

/// One state-action pair of a behavior-cloning dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BcSample {
    pub screenshot: ScreenshotRef,
    pub instruction: String,
    pub action: String,
    pub reward: f64,
    /// `<task_id>/<content hash>` of the originating trajectory.
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FilterError {
    #[error("item {index}: rewards must be per-step")]
    GranularityMismatch { index: usize },
    #[error("item {index}: {rewards} rewards for {actions} actions")]
    LengthMismatch {
        index: usize,
        rewards: usize,
        actions: usize,
    },
}

pub fn source_id(t: &Trajectory) -> String {
    format!("{}/{}", t.task_id(), t.content_hash())
}

/// Keeps every `(s_i, a_i)` whose reward is at least `threshold`, in
/// corpus order.
pub fn filter_bc(items: &[(Trajectory, RewardSequence)], threshold: f64) -> Result<Vec<BcSample>, FilterError> {
    for (index, (t, r)) in items.iter().enumerate() {
        if r.granularity != Granularity::PerStep {
            return Err(FilterError::GranularityMismatch { index });
        }
        if r.values.len() != t.actions.len() {
            return Err(FilterError::LengthMismatch {
                index,
                rewards: r.values.len(),
                actions: t.actions.len(),
            });
        }
    }
    let mut out = Vec::new();
    for (t, r) in items {
        let source = source_id(t);
        for (i, (action, reward)) in t.actions.iter().zip(&r.values).enumerate() {
            if *reward >= threshold {
                out.push(BcSample {
                    screenshot: t.states[i].screenshot.clone(),
                    instruction: t.instruction.text.clone(),
                    action: render_action(action),
                    reward: *reward,
                    source: source.clone(),
                });
            }
        }
    }
    Ok(out)
}

/// The unfiltered baseline: every pair, whatever its reward.
pub fn self_training_export(items: &[(Trajectory, RewardSequence)]) -> Result<Vec<BcSample>, FilterError> {
    filter_bc(items, f64::NEG_INFINITY)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::judges::{rewards_from_categories, rewards_from_verdict, Progress, RewardConfig, VerdictStatus};
    use crate::trajectory::tests::sample_trajectory;
    use proptest::prelude::*;

    fn per_step(values: &[f64]) -> RewardSequence {
        RewardSequence {
            values: values.to_vec(),
            granularity: Granularity::PerStep,
        }
    }

    #[test]
    fn keeps_steps_at_or_above_threshold() {
        let t = sample_trajectory(3, 4);
        let out = filter_bc(&[(t.clone(), per_step(&[0.5, -1.0, 1.0]))], 0.5).unwrap();
        let kept: Vec<_> = out.iter().map(|s| s.screenshot.clone()).collect();
        assert_eq!(
            kept,
            vec![t.states[0].screenshot.clone(), t.states[2].screenshot.clone()]
        );
        assert!(filter_bc(&[(sample_trajectory(2, 3), per_step(&[0.0, 0.0]))], 0.5)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn rejects_trajectory_level_rewards() {
        let t = sample_trajectory(2, 3);
        let r = rewards_from_verdict(VerdictStatus::Success, 2);
        assert_eq!(
            filter_bc(&[(t, r)], 0.5),
            Err(FilterError::GranularityMismatch { index: 0 })
        );
        let t = sample_trajectory(2, 3);
        assert!(matches!(
            filter_bc(&[(t, per_step(&[1.0]))], 0.5),
            Err(FilterError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn default_threshold_keeps_progress_steps() {
        let cfg = RewardConfig::default();
        for cat in Progress::ALL {
            let t = sample_trajectory(1, 2);
            let r = rewards_from_categories(&[cat], &cfg);
            let kept = !filter_bc(&[(t, r)], cfg.p).unwrap().is_empty();
            assert_eq!(
                kept,
                matches!(cat, Progress::GoalReached | Progress::TowardsGoal),
                "{cat}"
            );
        }
    }

    #[test]
    fn self_training_keeps_everything() {
        let items = vec![
            (sample_trajectory(3, 4), per_step(&[-1.0, 0.0, 0.5])),
            (sample_trajectory(3, 4), per_step(&[1.0, -1.0, -1.0])),
        ];
        let all = self_training_export(&items).unwrap();
        assert_eq!(all.len(), 6);
        assert!(all[..3].iter().all(|s| s.source == source_id(&items[0].0)));
    }

    fn corpus() -> impl Strategy<Value = Vec<Vec<f64>>> {
        let reward = prop::sample::select(vec![-1.0, 0.0, 0.5, 1.0]);
        prop::collection::vec(prop::collection::vec(reward, 1..6), 0..6)
    }

    proptest! {
        #[test]
        fn matches_brute_force_and_is_antitone(rows in corpus(), t1 in -1.5f64..1.5, t2 in -1.5f64..1.5) {
            let items: Vec<_> = rows
                .iter()
                .map(|r| (sample_trajectory(r.len(), r.len() + 1), per_step(r)))
                .collect();
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let expected: Vec<(usize, usize)> = rows
                .iter()
                .enumerate()
                .flat_map(|(ti, r)| r.iter().enumerate().filter(|(_, v)| **v >= lo).map(move |(si, _)| (ti, si)))
                .collect();
            let got = filter_bc(&items, lo).unwrap();
            prop_assert_eq!(got.len(), expected.len());
            for (s, (ti, si)) in got.iter().zip(&expected) {
                prop_assert_eq!(&s.screenshot, &items[*ti].0.states[*si].screenshot);
                prop_assert_eq!(s.reward, rows[*ti][*si]);
            }
            let strict = filter_bc(&items, hi).unwrap();
            prop_assert!(strict.iter().all(|s| got.contains(s)));
        }
    }
}
