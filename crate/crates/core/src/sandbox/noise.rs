use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::judges::{Verdict, VerdictStatus};
use crate::refine::{EpisodeJudge, JudgeContext, JudgeError};
use crate::trajectory::Trajectory;

/// Ground truth with seeded label flips: `fp_rate` turns failures into
/// successes, `fn_rate` turns successes into failures.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoisyOracleEvaluator {
    #[serde(default)]
    pub fp_rate: f64,
    #[serde(default)]
    pub fn_rate: f64,
}

impl NoisyOracleEvaluator {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [("fp_rate", self.fp_rate), ("fn_rate", self.fn_rate)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        Ok(())
    }
}

pub fn judge_with_noise(oracle_success: bool, eval: &NoisyOracleEvaluator, draw_seed: u64) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(draw_seed);
    let rate = if oracle_success { eval.fn_rate } else { eval.fp_rate };
    let flipped = rng.random_bool(rate);
    let judged = oracle_success ^ flipped;
    let thoughts = if flipped {
        "noisy oracle (flipped)"
    } else {
        "noisy oracle"
    };
    Verdict::new(VerdictStatus::from_success(judged), thoughts)
}

impl EpisodeJudge for NoisyOracleEvaluator {
    fn judge(&self, _t: &Trajectory, ctx: &JudgeContext) -> Result<Verdict, JudgeError> {
        let oracle = ctx.oracle_success.ok_or(JudgeError::NoOracle)?;
        Ok(judge_with_noise(oracle, self, ctx.draw_seed))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_noise_is_the_oracle() {
        let e = NoisyOracleEvaluator::default();
        for seed in 0..100 {
            for oracle in [true, false] {
                assert_eq!(judge_with_noise(oracle, &e, seed).status.is_success(), oracle);
            }
        }
    }

    #[test]
    fn certain_false_positive() {
        let e = NoisyOracleEvaluator {
            fp_rate: 1.0,
            fn_rate: 0.0,
        };
        assert_eq!(judge_with_noise(false, &e, 3).status, VerdictStatus::Success);
        assert_eq!(judge_with_noise(true, &e, 3).status, VerdictStatus::Success);
    }

    #[test]
    fn false_negative_rate_is_honored() {
        let e = NoisyOracleEvaluator {
            fp_rate: 0.0,
            fn_rate: 0.2,
        };
        let n = 10_000u64;
        let flips = (0..n)
            .filter(|s| !judge_with_noise(true, &e, *s).status.is_success())
            .count();
        let frac = flips as f64 / n as f64;
        assert!((0.18..=0.22).contains(&frac), "{frac}");
    }
}
