use std::collections::{BTreeMap, HashSet};
use std::path::PathBuf;

use agent_judge::gateway::EndpointConfig;
use agent_judge::judges::{evaluate, Architecture, Evaluation};
use agent_judge::perception::caption_trajectory;
use agent_judge::store::{Command, Payload, RunManifest, RunWriter};
use agent_judge::trajectory::read_trajectories;
use agent_judge::{EvaluatorSpec, Gateway, Trajectory};
use rayon::prelude::*;
use serde::Deserialize;

use super::default_min_confidence;
use crate::backend::{BackendSources, Backends, ScriptedSection};
use crate::{hash_input, load_toml, CliError, CommonArgs, Report};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateConfig {
    /// Trajectory JSONL; `--trajectories` overrides it.
    pub trajectories: Option<PathBuf>,
    pub evaluator: EvaluatorSpec,
    /// OCR tokens below this confidence are dropped before captioning.
    #[serde(default = "default_min_confidence")]
    pub min_ocr_confidence: f64,
    #[serde(default)]
    pub scripted: ScriptedSection,
    #[serde(default)]
    pub endpoints: BTreeMap<String, EndpointConfig>,
    pub cache_dir: Option<PathBuf>,
    pub blobs: Option<PathBuf>,
}

#[derive(Debug, Clone, clap::Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub trajectories: Option<PathBuf>,
}

enum Job {
    Score {
        line: usize,
        trajectory: Trajectory,
    },
    Reject {
        task_id: String,
        line: usize,
        message: String,
    },
}

enum Outcome {
    Scored(String, Evaluation),
    Failed {
        task_id: String,
        line: usize,
        message: String,
    },
}

pub fn run(args: &EvaluateArgs) -> Result<Report, CliError> {
    let common = &args.common;
    let cfg = load_toml::<EvaluateConfig>(common.require_config()?)?;
    let spec = &cfg.value.evaluator;
    spec.validate().map_err(CliError::Config)?;
    let traj_path = args
        .trajectories
        .clone()
        .or_else(|| cfg.value.trajectories.as_ref().map(|p| cfg.resolve(p)))
        .ok_or_else(|| CliError::Config("no trajectories given (config key or --trajectories)".into()))?;
    let lines = read_trajectories(&traj_path).map_err(CliError::io(&traj_path))?;

    common.check_out_dir()?;
    let sources = BackendSources {
        scripted: cfg.value.scripted.clone(),
        endpoints: cfg.value.endpoints.clone(),
        cache_dir: cfg.value.cache_dir.clone(),
        blobs: cfg.value.blobs.clone(),
    }
    .resolved(&cfg.dir);
    let backends = Backends::new(common.backend, sources, &common.out)?;
    let judge_name = spec.judge_endpoint().expect("validated spec names a judge endpoint");
    let judge = backends.gateway(judge_name)?;
    let vision = match (spec.architecture, &spec.vision_endpoint) {
        (Architecture::Modular, Some(name)) => Some(backends.gateway(name)?),
        _ => None,
    };

    let mut inputs = BTreeMap::from([
        ("config".to_string(), cfg.sha256.clone()),
        ("trajectories".to_string(), hash_input(&traj_path)?),
    ]);
    inputs.extend(backends.input_hashes()?);
    let mut endpoints = vec![judge.model_name().to_string()];
    endpoints.extend(vision.as_ref().map(|g| g.model_name().to_string()));
    let params = BTreeMap::from([(
        "min_ocr_confidence".to_string(),
        cfg.value.min_ocr_confidence.to_string(),
    )]);
    let manifest = RunManifest::new(
        Command::Evaluate,
        Some(spec.clone()),
        endpoints,
        common.seed,
        inputs,
        params,
    );
    let mut writer = RunWriter::create(&common.out, manifest)?;

    let mut seen = HashSet::new();
    let jobs: Vec<Job> = lines
        .into_iter()
        .map(|l| match l.parsed {
            Ok(t) if !seen.insert(t.task_id().to_string()) => Job::Reject {
                task_id: format!("line-{}", l.line),
                line: l.line,
                message: format!("duplicate task id {:?}", t.task_id()),
            },
            Ok(trajectory) => Job::Score {
                line: l.line,
                trajectory,
            },
            Err(e) => Job::Reject {
                task_id: format!("line-{}", l.line),
                line: l.line,
                message: e.to_string(),
            },
        })
        .collect();

    let min_conf = cfg.value.min_ocr_confidence;
    let outcomes: Vec<Outcome> = common.pool()?.install(|| {
        jobs.into_par_iter()
            .map(|job| match job {
                Job::Reject { task_id, line, message } => Outcome::Failed { task_id, line, message },
                Job::Score { line, trajectory } => {
                    let task_id = trajectory.task_id().to_string();
                    match score(&trajectory, spec, &judge, vision.as_ref(), min_conf) {
                        Ok(e) => Outcome::Scored(task_id, e),
                        Err(message) => Outcome::Failed { task_id, line, message },
                    }
                }
            })
            .collect()
    });

    let mut report = Report::default();
    let (mut scored, mut judged) = (0usize, 0usize);
    for o in outcomes {
        match o {
            Outcome::Scored(task_id, e) => {
                scored += 1;
                judged += usize::from(e.judged_success());
                writer.append(&task_id, Payload::Evaluation(e))?;
            }
            Outcome::Failed { task_id, line, message } => {
                report.task_errors += 1;
                report.lines.push(format!("{}:{line}: {message}", traj_path.display()));
                writer.append(
                    &task_id,
                    Payload::Error {
                        line: Some(line),
                        message,
                    },
                )?;
            }
        }
    }
    report.lines.push(format!(
        "run {}: {scored} evaluated, {} errors, {judged} judged successful",
        writer.manifest().run_id,
        report.task_errors
    ));
    Ok(report)
}

fn score(
    t: &Trajectory,
    spec: &EvaluatorSpec,
    judge: &Gateway,
    vision: Option<&Gateway>,
    min_conf: f64,
) -> Result<Evaluation, String> {
    let captioned;
    let t = match vision {
        Some(v) if t.states.iter().any(|s| s.caption.is_none()) => {
            captioned = caption_trajectory(t, v, min_conf).map_err(|e| format!("captioning: {e}"))?;
            &captioned
        }
        _ => t,
    };
    evaluate(t, spec, judge).map_err(|e| e.to_string())
}
