use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use agent_judge::metrics::{agreement, kendall_tau, JudgmentPair, PolicyRanking};
use agent_judge::store::{read_jsonl, Command, Payload, Run, RunManifest, RunWriter};

use super::SuccessLabel;
use crate::{hash_input, CliError, CommonArgs, Report};

#[derive(Debug, Clone, clap::Args)]
pub struct MetricsArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// An `evaluate` run whose judgments are scored.
    #[arg(long, conflicts_with = "predictions")]
    pub run: Option<PathBuf>,
    /// Predicted labels as `{task_id, success}` JSONL, instead of a run.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// Ground-truth labels as `{task_id, success}` JSONL.
    #[arg(long)]
    pub oracle: Option<PathBuf>,
    /// Two JSON files of `[{policy_id, score}]`; their Kendall tau is printed.
    #[arg(long, num_args = 2, value_names = ["A", "B"])]
    pub rankings: Option<Vec<PathBuf>>,
}

pub const AGREEMENT_JSON: &str = "agreement.json";
pub const AGREEMENT_TXT: &str = "agreement.txt";
pub const CONFUSION_CSV: &str = "confusion.csv";
pub const KENDALL_TAU_JSON: &str = "kendall_tau.json";

fn read_ranking(path: &Path) -> Result<PolicyRanking, CliError> {
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn read_labels(path: &Path) -> Result<Vec<SuccessLabel>, CliError> {
    Ok(read_jsonl(path)?)
}

pub fn run(args: &MetricsArgs) -> Result<Report, CliError> {
    let common = &args.common;
    let mut report = Report::default();
    let mut inputs = BTreeMap::new();

    let tau = match &args.rankings {
        Some(files) => {
            let (a, b) = (read_ranking(&files[0])?, read_ranking(&files[1])?);
            inputs.insert("ranking_a".to_string(), hash_input(&files[0])?);
            inputs.insert("ranking_b".to_string(), hash_input(&files[1])?);
            Some(kendall_tau(&a, &b).map_err(|e| CliError::Config(format!("rankings: {e}")))?)
        }
        None => None,
    };

    // (task_id, predicted) in input order.
    let mut predicted: Vec<(String, bool)> = Vec::new();
    let mut spec = None;
    if let Some(dir) = &args.run {
        let run = Run::open(dir)?;
        if run.manifest.command != Command::Evaluate {
            return Err(CliError::Config(format!("{} is not an evaluate run", dir.display())));
        }
        inputs.insert("evaluate_run".to_string(), run.manifest.run_id.clone());
        spec = run.manifest.evaluator_spec.clone();
        for r in &run.records {
            if let Payload::Evaluation(e) = &r.payload {
                predicted.push((r.task_id.clone(), e.judged_success()));
            }
        }
    } else if let Some(path) = &args.predictions {
        inputs.insert("predictions".to_string(), hash_input(path)?);
        predicted.extend(read_labels(path)?.into_iter().map(|l| (l.task_id, l.success)));
    }

    let oracle: Option<HashMap<String, bool>> = match &args.oracle {
        Some(path) => {
            inputs.insert("oracle".to_string(), hash_input(path)?);
            Some(read_labels(path)?.into_iter().map(|l| (l.task_id, l.success)).collect())
        }
        None => None,
    };
    if tau.is_none() && (oracle.is_none() || (args.run.is_none() && args.predictions.is_none())) {
        return Err(CliError::Config(
            "nothing to compute: give --oracle with --run or --predictions, or --rankings".into(),
        ));
    }

    common.check_out_dir()?;
    let manifest = RunManifest::new(Command::Metrics, spec, Vec::new(), common.seed, inputs, BTreeMap::new());
    let mut writer = RunWriter::create(&common.out, manifest)?;

    if let Some(oracle) = oracle {
        let mut pairs = Vec::with_capacity(predicted.len());
        for (task_id, p) in predicted {
            match oracle.get(&task_id) {
                Some(o) => pairs.push(JudgmentPair::new(task_id, p, *o)),
                None => {
                    report.task_errors += 1;
                    report.lines.push(format!("{task_id}: no oracle label"));
                    writer.append(
                        &task_id,
                        Payload::Error {
                            line: None,
                            message: "no oracle label".into(),
                        },
                    )?;
                }
            }
        }
        let agreement = agreement(&pairs).map_err(|e| CliError::Config(format!("agreement: {e}")))?;
        let out = |name: &str, text: String| {
            let p = common.out.join(name);
            fs::write(&p, text).map_err(CliError::io(&p))
        };
        out(
            AGREEMENT_JSON,
            serde_json::to_string_pretty(&agreement).expect("report serializes") + "\n",
        )?;
        out(AGREEMENT_TXT, agreement.to_text())?;
        out(CONFUSION_CSV, agreement.confusion_csv())?;
        report
            .lines
            .push(format!("accuracy {:.4} over {} tasks", agreement.accuracy, agreement.n));
        writer.append("all", Payload::Agreement(agreement))?;
    }
    if let Some(t) = tau {
        let p = common.out.join(KENDALL_TAU_JSON);
        let text = serde_json::to_string_pretty(&serde_json::json!({ "kendall_tau": t })).expect("serializes") + "\n";
        fs::write(&p, text).map_err(CliError::io(&p))?;
        report.lines.push(format!("kendall_tau {t:.3}"));
    }
    Ok(report)
}
