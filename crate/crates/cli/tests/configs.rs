use std::path::{Path, PathBuf};

use agent_judge::judges::Architecture;
use agent_judge::Granularity;
use agent_judge_cli::commands::evaluate::EvaluateConfig;
use agent_judge_cli::commands::reflexion::{JudgeConfig, ReflexionFileConfig};
use agent_judge_cli::commands::sandbox_gen::SandboxGenConfig;
use agent_judge_cli::load_toml;

fn shipped(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

#[test]
fn evaluate_configs_validate() {
    for (name, arch, gran) in [
        (
            "evaluate_web_endpoint.toml",
            Architecture::EndToEnd,
            Granularity::TrajectoryLevel,
        ),
        (
            "evaluate_android_per_step.toml",
            Architecture::Modular,
            Granularity::PerStep,
        ),
    ] {
        let cfg = load_toml::<EvaluateConfig>(&shipped(name)).unwrap().value;
        cfg.evaluator.validate().unwrap();
        assert_eq!(
            (cfg.evaluator.architecture, cfg.evaluator.granularity),
            (arch, gran),
            "{name}"
        );
        for (endpoint, ec) in &cfg.endpoints {
            ec.validate().unwrap_or_else(|e| panic!("{name} [{endpoint}]: {e}"));
        }
        let judge = cfg.evaluator.judge_endpoint().unwrap();
        assert!(cfg.endpoints.contains_key(judge), "{name} defines its judge endpoint");
    }
}

#[test]
fn reflexion_config_parses() {
    let cfg = load_toml::<ReflexionFileConfig>(&shipped("reflexion_noisy.toml"))
        .unwrap()
        .value;
    cfg.actor.validate().unwrap();
    assert_eq!(
        cfg.judge,
        JudgeConfig::Noisy {
            fp_rate: 0.0,
            fn_rate: 0.2
        }
    );
}

#[test]
fn sandbox_gen_config_parses() {
    let cfg = load_toml::<SandboxGenConfig>(&shipped("sandbox_gen.toml"))
        .unwrap()
        .value;
    assert_eq!(cfg.episodes, 2);
    assert!(!cfg.include_captions);
}
