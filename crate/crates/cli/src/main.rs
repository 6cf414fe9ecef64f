use std::process::ExitCode;

use agent_judge_cli::commands::{evaluate, filter_bc, metrics, reflexion, sandbox_gen};
use agent_judge_cli::{exit_code, CliError, Report};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "agent-judge",
    version,
    about = "Evaluate, refine and filter GUI agent trajectories"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Score trajectories with a model evaluator.
    Evaluate(evaluate::EvaluateArgs),
    /// Run Reflexion episodes on the sandbox suite.
    Reflexion(reflexion::ReflexionArgs),
    /// Build a behavior-cloning dataset from a per-step evaluate run.
    FilterBc(filter_bc::FilterBcArgs),
    /// Agreement with oracle labels and rank correlation of policy rankings.
    Metrics(metrics::MetricsArgs),
    /// Generate sandbox trajectories, oracle labels and a scripted response table.
    SandboxGen(sandbox_gen::SandboxGenArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result: Result<Report, CliError> = match &cli.command {
        Cmd::Evaluate(a) => evaluate::run(a),
        Cmd::Reflexion(a) => reflexion::run(a),
        Cmd::FilterBc(a) => filter_bc::run(a),
        Cmd::Metrics(a) => metrics::run(a),
        Cmd::SandboxGen(a) => sandbox_gen::run(a),
    };
    match &result {
        Ok(report) => {
            for line in &report.lines {
                println!("{line}");
            }
        }
        Err(e) => eprintln!("error: {e}"),
    }
    ExitCode::from(exit_code(&result))
}
