use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;

use agent_judge::refine::{filter_bc, FilterError};
use agent_judge::store::{write_jsonl, Command, Payload, Run, RunManifest, RunWriter};
use agent_judge::trajectory::read_trajectories;
use agent_judge::{RewardSequence, Trajectory};

use crate::{hash_input, CliError, CommonArgs, Report};

pub const SAMPLES_FILE: &str = "bc_samples.jsonl";

#[derive(Debug, Clone, clap::Args)]
pub struct FilterBcArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Directory of an `evaluate` run with per-step rewards.
    #[arg(long)]
    pub run: PathBuf,
    /// The trajectory file that run scored.
    #[arg(long)]
    pub trajectories: PathBuf,
    /// Minimum reward kept; defaults to the run's progress reward.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Keep every step regardless of reward.
    #[arg(long)]
    pub self_training: bool,
}

pub fn run(args: &FilterBcArgs) -> Result<Report, CliError> {
    let common = &args.common;
    let eval = Run::open(&args.run)?;
    if eval.manifest.command != Command::Evaluate {
        return Err(CliError::Config(format!(
            "{} is a {} run, not an evaluate run",
            args.run.display(),
            eval.manifest.command.as_str()
        )));
    }
    let traj_hash = hash_input(&args.trajectories)?;
    if eval.manifest.inputs.get("trajectories") != Some(&traj_hash) {
        return Err(CliError::Config(format!(
            "{} is not the trajectory file run {} scored",
            args.trajectories.display(),
            eval.manifest.run_id
        )));
    }
    let threshold = match (args.self_training, args.threshold) {
        (true, _) => f64::NEG_INFINITY,
        (false, Some(t)) => t,
        (false, None) => eval
            .manifest
            .evaluator_spec
            .as_ref()
            .map(|s| s.reward_config.p)
            .ok_or_else(|| CliError::Config("run has no evaluator spec; pass --threshold".into()))?,
    };

    let rewards: HashMap<&str, &RewardSequence> = eval
        .records
        .iter()
        .filter_map(|r| match &r.payload {
            Payload::Evaluation(e) => Some((r.task_id.as_str(), &e.rewards)),
            _ => None,
        })
        .collect();
    let lines = read_trajectories(&args.trajectories).map_err(CliError::io(&args.trajectories))?;
    let pairs: Vec<(Trajectory, RewardSequence)> = lines
        .into_iter()
        .filter_map(|l| l.parsed.ok())
        .filter_map(|t| {
            let r = (*rewards.get(t.task_id())?).clone();
            Some((t, r))
        })
        .collect();

    let inputs = BTreeMap::from([
        ("evaluate_run".to_string(), eval.manifest.run_id.clone()),
        ("trajectories".to_string(), traj_hash),
    ]);
    let params = BTreeMap::from([("threshold".to_string(), threshold.to_string())]);
    let manifest = RunManifest::new(
        Command::FilterBc,
        eval.manifest.evaluator_spec.clone(),
        Vec::new(),
        common.seed,
        inputs,
        params,
    );

    let mut all = Vec::new();
    let mut batches = Vec::with_capacity(pairs.len());
    for pair in &pairs {
        let kept = filter_bc(std::slice::from_ref(pair), threshold).map_err(|e| match e {
            FilterError::GranularityMismatch { .. } => CliError::Config(format!(
                "task {}: rewards are not per-step; filtered BC needs a per_step evaluate run",
                pair.0.task_id()
            )),
            other => CliError::Config(format!("task {}: {other}", pair.0.task_id())),
        })?;
        all.extend(kept.iter().cloned());
        batches.push((pair.0.task_id().to_string(), kept));
    }

    common.check_out_dir()?;
    let mut writer = RunWriter::create(&common.out, manifest)?;
    for (task_id, kept) in batches {
        writer.append(&task_id, Payload::BcSamples(kept))?;
    }
    write_jsonl(&common.out.join(SAMPLES_FILE), &all)?;
    let skipped = eval.errors().count();
    let mut report = Report::default();
    report.lines.push(format!(
        "{} samples kept from {} trajectories at threshold {threshold} ({skipped} errored evaluations skipped)",
        all.len(),
        pairs.len()
    ));
    Ok(report)
}
