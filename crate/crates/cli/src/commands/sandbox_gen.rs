use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use agent_judge::gateway::ScriptedBackend;
use agent_judge::judges::{build_e2e_trajectory_prompt, build_modular_trajectory_prompt, build_step_prompt, Progress};
use agent_judge::perception::{build_caption_request, DEFAULT_MIN_CONFIDENCE};
use agent_judge::sandbox::{
    judge_with_noise, replay, rollout, screenshot_bytes, synth_per_step_labels, ActorConfig, NoisyOracleEvaluator,
    ScriptedActor,
};
use agent_judge::seed::derive_seed;
use agent_judge::store::{write_jsonl, Command, RunManifest, RunWriter};
use agent_judge::trajectory::{write_trajectories, BlobStore};
use agent_judge::{ChatMessage, GenerationParams, StepCategory, Trajectory, Verdict};
use serde::Deserialize;

use super::{load_suite, SuccessLabel};
use crate::{load_toml, CliError, CommonArgs, Report};

pub const TRAJECTORIES_FILE: &str = "trajectories.jsonl";
pub const ORACLE_FILE: &str = "oracle.jsonl";
pub const TABLE_FILE: &str = "scripted_table.jsonl";
pub const BLOB_DIR: &str = "blobs";
pub const EVAL_E2E: &str = "eval_e2e.toml";
pub const EVAL_MODULAR: &str = "eval_modular.toml";
pub const EVAL_PER_STEP: &str = "eval_per_step.toml";
pub const REFLEXION_CONFIG: &str = "reflexion.toml";

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SandboxGenConfig {
    pub suite: Option<PathBuf>,
    #[serde(default = "default_skill")]
    pub skill: f64,
    #[serde(default = "default_episodes")]
    pub episodes: usize,
    /// Keep synthesized captions in the written trajectories. Off by
    /// default so that modular evaluation exercises the captioner.
    #[serde(default)]
    pub include_captions: bool,
    /// Label noise baked into the scripted judge responses.
    #[serde(default)]
    pub fp_rate: f64,
    #[serde(default)]
    pub fn_rate: f64,
}

fn default_skill() -> f64 {
    0.5
}

fn default_episodes() -> usize {
    1
}

impl Default for SandboxGenConfig {
    fn default() -> Self {
        toml::from_str("").expect("every field has a default")
    }
}

#[derive(Debug, Clone, clap::Args)]
pub struct SandboxGenArgs {
    #[command(flatten)]
    pub common: CommonArgs,
}

fn verdict_thoughts(success: bool) -> &'static str {
    if success {
        "The final screen shows the requested outcome and the agent stopped there."
    } else {
        "The final screen does not show the requested outcome."
    }
}

fn step_thoughts(p: Progress) -> &'static str {
    match p {
        Progress::GoalReached => "The action completes the task.",
        Progress::TowardsGoal => "The action brings the screen closer to the goal.",
        Progress::NotSure => "The action leaves the distance to the goal unchanged.",
        Progress::AwayFromGoal => "The action moves away from the goal.",
    }
}

fn strip_captions(t: &Trajectory) -> Trajectory {
    let mut out = t.clone();
    for s in &mut out.states {
        s.caption = None;
    }
    out
}

/// Collects table entries, remembering requests that would need two
/// different answers.
struct Table {
    backend: ScriptedBackend,
    params: GenerationParams,
    conflicts: Vec<String>,
}

impl Table {
    fn add(&mut self, what: &str, messages: &[ChatMessage], response: String) {
        if let Err(d) = self.backend.insert_consistent(messages, &self.params, response) {
            self.conflicts
                .push(format!("{what}: request {} already has another response", d.to_hex()));
        }
    }
}

pub fn run(args: &SandboxGenArgs) -> Result<Report, CliError> {
    let common = &args.common;
    let (cfg, dir, cfg_hash) = match &common.config {
        Some(p) => {
            let l = load_toml::<SandboxGenConfig>(p)?;
            (l.value, l.dir, Some(l.sha256))
        }
        None => (SandboxGenConfig::default(), PathBuf::new(), None),
    };
    let actor_cfg = ActorConfig {
        skill: cfg.skill,
        reflection_boost: 0.0,
    };
    actor_cfg.validate().map_err(CliError::Config)?;
    let noise = NoisyOracleEvaluator {
        fp_rate: cfg.fp_rate,
        fn_rate: cfg.fn_rate,
    };
    noise.validate().map_err(CliError::Config)?;
    if cfg.episodes == 0 {
        return Err(CliError::Config("episodes must be at least 1".into()));
    }
    let suite = load_suite(cfg.suite.as_ref().map(|p| dir.join(p)).as_deref())?;

    common.check_out_dir()?;
    let mut inputs = BTreeMap::new();
    if let Some(h) = cfg_hash {
        inputs.insert("config".to_string(), h);
    }
    let params = BTreeMap::from([
        ("suite".to_string(), suite.name.clone()),
        ("skill".to_string(), cfg.skill.to_string()),
        ("episodes".to_string(), cfg.episodes.to_string()),
        ("fp_rate".to_string(), cfg.fp_rate.to_string()),
        ("fn_rate".to_string(), cfg.fn_rate.to_string()),
        ("include_captions".to_string(), cfg.include_captions.to_string()),
    ]);
    let manifest = RunManifest::new(Command::SandboxGen, None, Vec::new(), common.seed, inputs, params);
    let writer = RunWriter::create(&common.out, manifest)?;

    let blobs = BlobStore::new(common.out.join(BLOB_DIR));
    let mut table = Table {
        backend: ScriptedBackend::new(),
        params: GenerationParams::default(),
        conflicts: Vec::new(),
    };
    let mut trajectories = Vec::new();
    let mut oracle = Vec::new();

    for task in &suite.tasks {
        let graph = suite.graph_of(task);
        for e in 0..cfg.episodes {
            let base_id = task.instruction.task_id.as_str();
            let seed = derive_seed(common.seed, &["rollout".into(), base_id.into(), e.into()]);
            let mut actor = ScriptedActor::new(graph, &task.goal, actor_cfg);
            let (mut t, ok) = rollout(&mut actor, graph, task, seed, task.max_steps);
            if cfg.episodes > 1 {
                t.instruction.task_id = format!("{base_id}#{e}");
            }
            let id = t.task_id().to_string();

            for sim in replay(graph, &t.actions) {
                blobs
                    .put(&screenshot_bytes(graph, &sim))
                    .map_err(|e| CliError::Config(format!("blob store: {e}")))?;
            }

            let bare = strip_captions(&t);
            for (state, captioned) in bare.states.iter().zip(&t.states) {
                let request = build_caption_request(state, DEFAULT_MIN_CONFIDENCE).to_messages();
                let caption = captioned.caption.clone().expect("rollout states carry captions");
                table.add(&format!("{id} caption"), &request, caption);
            }

            let judged = judge_with_noise(
                ok,
                &noise,
                derive_seed(common.seed, &["judge".into(), id.as_str().into()]),
            );
            let verdict = Verdict::new(judged.status, verdict_thoughts(judged.status.is_success()));
            let e2e = build_e2e_trajectory_prompt(&bare).expect("trajectory has states");
            table.add(&format!("{id} end-to-end"), &e2e, verdict.to_text());
            let modular = build_modular_trajectory_prompt(&t).expect("captioned trajectory");
            table.add(&format!("{id} modular"), &modular, verdict.to_text());

            let labels = synth_per_step_labels(graph, task, &t.actions);
            for (i, (action, label)) in t.actions.iter().zip(labels).enumerate() {
                let request = build_step_prompt(&t.instruction, action, &t.states[i], &t.states[i + 1])
                    .expect("captioned trajectory");
                let answer = StepCategory::new(label, step_thoughts(label)).to_text();
                table.add(&format!("{id} step {i}"), &request, answer);
            }

            oracle.push(SuccessLabel {
                task_id: id,
                success: ok,
            });
            trajectories.push(if cfg.include_captions { t } else { bare });
        }
    }

    let path = common.out.join(TRAJECTORIES_FILE);
    write_trajectories(&path, &trajectories).map_err(CliError::io(&path))?;
    write_jsonl(&common.out.join(ORACLE_FILE), &oracle)?;
    let path = common.out.join(TABLE_FILE);
    table.backend.save_jsonl(&path).map_err(CliError::io(&path))?;
    for (name, text) in [
        (EVAL_E2E, eval_config("end_to_end", "trajectory_level")),
        (EVAL_MODULAR, eval_config("modular", "trajectory_level")),
        (EVAL_PER_STEP, eval_config("modular", "per_step")),
        (REFLEXION_CONFIG, REFLEXION_TEMPLATE.to_string()),
    ] {
        let p = common.out.join(name);
        fs::write(&p, text).map_err(CliError::io(&p))?;
    }
    drop(writer);

    let mut report = Report {
        task_errors: table.conflicts.len(),
        lines: table.conflicts,
    };
    let successes = oracle.iter().filter(|l| l.success).count();
    report.lines.push(format!(
        "{} trajectories ({successes} successful), {} scripted responses",
        trajectories.len(),
        table.backend.len()
    ));
    Ok(report)
}

fn eval_config(architecture: &str, granularity: &str) -> String {
    let endpoints = match architecture {
        "modular" => "vision_endpoint = \"vision\"\ntext_endpoint = \"text\"\n",
        _ => "vision_endpoint = \"vision\"\n",
    };
    format!(
        "trajectories = \"{TRAJECTORIES_FILE}\"\nblobs = \"{BLOB_DIR}\"\n\n[scripted]\ntable = \"{TABLE_FILE}\"\n\n\
         [evaluator]\narchitecture = \"{architecture}\"\ngranularity = \"{granularity}\"\ndomain_tag = \"sandbox\"\n{endpoints}"
    )
}

const REFLEXION_TEMPLATE: &str = "max_rounds = 3
episodes = 1

[actor]
skill = 0.5
reflection_boost = 0.2

[judge]
kind = \"oracle\"
";
