use std::collections::BTreeMap;
use std::path::PathBuf;

use agent_judge::gateway::EndpointConfig;
use agent_judge::refine::{
    reflexion_episode, EpisodeJudge, ModelJudge, OracleJudge, ReflexionConfig, ReflexionOutcome,
};
use agent_judge::sandbox::{ActorConfig, NoisyOracleEvaluator, SandboxEnv, SandboxTask, ScriptedActor, Suite};
use agent_judge::seed::derive_seed;
use agent_judge::store::{Command, Payload, RunManifest, RunWriter};
use agent_judge::{EvaluatorSpec, Gateway};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::load_suite;
use crate::backend::{BackendSources, Backends, ScriptedSection};
use crate::{load_toml, CliError, CommonArgs, Report};

pub const DEFAULT_REFLECTION: &str =
    "The last attempt did not complete the task. Follow the most direct route to the goal screen and stop only once the goal is visibly reached.";

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum JudgeConfig {
    /// Ground truth from the sandbox predicates.
    #[default]
    Oracle,
    Noisy {
        #[serde(default)]
        fp_rate: f64,
        #[serde(default)]
        fn_rate: f64,
    },
    /// A model evaluator reached through the configured backend.
    Model { evaluator: EvaluatorSpec },
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReflectorConfig {
    /// Endpoint name for reflection requests; defaults to `reflector`.
    pub endpoint: Option<String>,
    /// Scripted-backend reflection text for requests the table lacks.
    pub response: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReflexionFileConfig {
    /// Sandbox suite document; the shipped suite when absent.
    pub suite: Option<PathBuf>,
    /// Subset of task ids; all tasks when empty.
    #[serde(default)]
    pub tasks: Vec<String>,
    #[serde(default = "default_rounds")]
    pub max_rounds: usize,
    /// Independently seeded episodes per task.
    #[serde(default = "default_episodes")]
    pub episodes: usize,
    pub actor: ActorConfig,
    #[serde(default)]
    pub judge: JudgeConfig,
    #[serde(default)]
    pub reflector: ReflectorConfig,
    #[serde(default)]
    pub scripted: ScriptedSection,
    #[serde(default)]
    pub endpoints: BTreeMap<String, EndpointConfig>,
    pub cache_dir: Option<PathBuf>,
}

fn default_rounds() -> usize {
    3
}

fn default_episodes() -> usize {
    1
}

#[derive(Debug, Clone, clap::Args)]
pub struct ReflexionArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Overrides the config's round budget.
    #[arg(long)]
    pub max_rounds: Option<usize>,
}

/// Aggregate over a batch of episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflexionSummary {
    pub episodes: usize,
    /// Oracle success rate had the budget been `k` rounds, for each `k`.
    pub per_round: Vec<f64>,
    /// Episodes whose last attempt was both judged and truly successful.
    pub judged_and_oracle: f64,
    pub aborted: usize,
}

pub fn summarize(outcomes: &[ReflexionOutcome], max_rounds: usize) -> ReflexionSummary {
    let n = outcomes.len().max(1) as f64;
    let rate = |f: &dyn Fn(&ReflexionOutcome) -> bool| outcomes.iter().filter(|o| f(o)).count() as f64 / n;
    ReflexionSummary {
        episodes: outcomes.len(),
        per_round: (0..=max_rounds)
            .map(|k| rate(&|o: &ReflexionOutcome| o.success_at_round(k) == Some(true)))
            .collect(),
        judged_and_oracle: rate(&|o: &ReflexionOutcome| o.judged_success && o.oracle_success == Some(true)),
        aborted: outcomes.iter().filter(|o| o.abort.is_some()).count(),
    }
}

/// Settings for a batch of sandbox Reflexion episodes.
#[derive(Debug, Clone, Copy)]
pub struct Batch {
    pub actor: ActorConfig,
    pub max_rounds: usize,
    pub episodes: usize,
    pub seed: u64,
    /// Attach synthesized captions to states (needed by modular judges).
    pub captions: bool,
}

/// Seed of episode `e`; shared by every task so that runs differing only
/// in the judge are paired draw for draw.
pub fn episode_seed(seed: u64, e: usize) -> u64 {
    derive_seed(seed, &["episode".into(), e.into()])
}

/// Runs `batch.episodes` episodes of every task, in task-major order.
pub fn run_batch(
    suite: &Suite,
    tasks: &[&SandboxTask],
    batch: Batch,
    judge: &(dyn EpisodeJudge + Sync),
    reflector: &Gateway,
) -> Vec<ReflexionOutcome> {
    let work: Vec<(&SandboxTask, usize)> = tasks
        .iter()
        .flat_map(|t| (0..batch.episodes).map(move |e| (*t, e)))
        .collect();
    work.par_iter()
        .map(|(task, e)| {
            let graph = suite.graph_of(task);
            let mut env = SandboxEnv::new(graph, task).with_captions(batch.captions);
            let mut actor = ScriptedActor::new(graph, &task.goal, batch.actor);
            let cfg = ReflexionConfig {
                max_rounds: batch.max_rounds,
                seed: episode_seed(batch.seed, *e),
            };
            reflexion_episode(&mut env, &mut actor, judge, reflector, cfg)
        })
        .collect()
}

pub fn run(args: &ReflexionArgs) -> Result<Report, CliError> {
    let common = &args.common;
    let cfg = load_toml::<ReflexionFileConfig>(common.require_config()?)?;
    let c = &cfg.value;
    c.actor.validate().map_err(CliError::Config)?;
    let max_rounds = args.max_rounds.unwrap_or(c.max_rounds);
    let suite = load_suite(c.suite.as_ref().map(|p| cfg.resolve(p)).as_deref())?;
    let tasks: Vec<&SandboxTask> = if c.tasks.is_empty() {
        suite.tasks.iter().collect()
    } else {
        c.tasks
            .iter()
            .map(|id| {
                suite
                    .task(id)
                    .ok_or_else(|| CliError::Config(format!("unknown task {id:?}")))
            })
            .collect::<Result<_, _>>()?
    };

    common.check_out_dir()?;
    let sources = BackendSources {
        scripted: c.scripted.clone(),
        endpoints: c.endpoints.clone(),
        cache_dir: c.cache_dir.clone(),
        blobs: None,
    }
    .resolved(&cfg.dir);
    let backends = Backends::new(common.backend, sources, &common.out)?;
    let reflector_name = c.reflector.endpoint.as_deref().unwrap_or("reflector");
    let reflector = backends.gateway_with_fallback(
        reflector_name,
        c.reflector.response.as_deref().unwrap_or(DEFAULT_REFLECTION),
    )?;

    let mut params = BTreeMap::from([
        ("max_rounds".to_string(), max_rounds.to_string()),
        ("episodes".to_string(), c.episodes.to_string()),
        ("skill".to_string(), c.actor.skill.to_string()),
        ("reflection_boost".to_string(), c.actor.reflection_boost.to_string()),
    ]);
    let mut endpoints = vec![reflector.model_name().to_string()];
    let model_gateway;
    let model_judge;
    let noisy;
    let (judge, spec): (&(dyn EpisodeJudge + Sync), Option<EvaluatorSpec>) = match &c.judge {
        JudgeConfig::Oracle => {
            params.insert("judge".into(), "oracle".into());
            (&OracleJudge, None)
        }
        JudgeConfig::Noisy { fp_rate, fn_rate } => {
            noisy = NoisyOracleEvaluator {
                fp_rate: *fp_rate,
                fn_rate: *fn_rate,
            };
            noisy.validate().map_err(CliError::Config)?;
            params.insert("judge".into(), format!("noisy(fp={fp_rate},fn={fn_rate})"));
            (&noisy, None)
        }
        JudgeConfig::Model { evaluator } => {
            evaluator.validate().map_err(CliError::Config)?;
            let name = evaluator
                .judge_endpoint()
                .expect("validated spec names a judge endpoint");
            model_gateway = backends.gateway(name)?;
            endpoints.push(model_gateway.model_name().to_string());
            params.insert("judge".into(), "model".into());
            model_judge = ModelJudge {
                spec: evaluator,
                gateway: &model_gateway,
            };
            (&model_judge, Some(evaluator.clone()))
        }
    };

    let mut inputs = BTreeMap::from([("config".to_string(), cfg.sha256.clone())]);
    inputs.extend(backends.input_hashes()?);
    let manifest = RunManifest::new(Command::Reflexion, spec, endpoints, common.seed, inputs, params);
    let mut writer = RunWriter::create(&common.out, manifest)?;

    let batch = Batch {
        actor: c.actor,
        max_rounds,
        episodes: c.episodes,
        seed: common.seed,
        captions: true,
    };
    let outcomes = common
        .pool()?
        .install(|| run_batch(&suite, &tasks, batch, judge, &reflector));

    let mut report = Report::default();
    for (i, o) in outcomes.iter().enumerate() {
        let id = if c.episodes == 1 {
            o.task_id.clone()
        } else {
            format!("{}#{}", o.task_id, i % c.episodes)
        };
        if let Some(reason) = &o.abort {
            report.task_errors += 1;
            report.lines.push(format!("{id}: {reason}"));
        }
        writer.append(&id, Payload::Reflexion(Box::new(o.clone())))?;
    }
    let summary = summarize(&outcomes, max_rounds);
    let path = common.out.join("summary.json");
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
    std::fs::write(&path, text).map_err(CliError::io(&path))?;
    for (k, r) in summary.per_round.iter().enumerate() {
        report.lines.push(format!("round {k}: success rate {r:.4}"));
    }
    report.lines.push(format!(
        "judged and oracle success {:.4} over {} episodes",
        summary.judged_and_oracle, summary.episodes
    ));
    Ok(report)
}
