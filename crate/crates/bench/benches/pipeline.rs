use std::hint::black_box;

use agent_judge::gateway::ScriptedBackend;
use agent_judge::judges::{evaluate, parse_step_verdict, parse_trajectory_verdict, Architecture};
use agent_judge::metrics::{kendall_tau, RankedPolicy};
use agent_judge::refine::filter_bc;
use agent_judge::sandbox::{rollout, ActorConfig, ScriptedActor, Suite};
use agent_judge::{DomainTag, EvaluatorSpec, Gateway, Granularity, RewardConfig};
use agent_judge_bench::sandbox_corpus;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn parsers(c: &mut Criterion) {
    let verdict =
        "Thoughts: The order history shows the new order,\nand the agent stopped there.\n\nStatus: \"success\"";
    let step = "**Thoughts:** the toggle moved\n**Response:** `towards-the-goal`";
    c.bench_function("parse_trajectory_verdict", |b| {
        b.iter(|| parse_trajectory_verdict(black_box(verdict)))
    });
    c.bench_function("parse_step_verdict", |b| b.iter(|| parse_step_verdict(black_box(step))));
}

fn tau(c: &mut Criterion) {
    let mut group = c.benchmark_group("kendall_tau");
    for n in [8usize, 64, 256] {
        let a: Vec<RankedPolicy> = (0..n)
            .map(|i| RankedPolicy {
                policy_id: format!("p{i}"),
                score: i as f64,
            })
            .collect();
        let b: Vec<RankedPolicy> = (0..n)
            .map(|i| RankedPolicy {
                policy_id: format!("p{i}"),
                score: ((i * 7919) % n) as f64,
            })
            .collect();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |bench, _| {
            bench.iter(|| kendall_tau(black_box(&a), black_box(&b)))
        });
    }
    group.finish();
}

fn sandbox(c: &mut Criterion) {
    let suite = Suite::shipped();
    let task = &suite.tasks[0];
    let graph = suite.graph_of(task);
    let cfg = ActorConfig {
        skill: 0.5,
        reflection_boost: 0.0,
    };
    c.bench_function("sandbox_rollout", |b| {
        let mut seed = 0;
        b.iter(|| {
            seed += 1;
            let mut actor = ScriptedActor::new(graph, &task.goal, cfg);
            rollout(&mut actor, graph, task, seed, task.max_steps)
        })
    });

    let corpus = sandbox_corpus(4, 0.5);
    c.bench_function("filter_bc_96_trajectories", |b| {
        b.iter(|| filter_bc(black_box(&corpus), 0.5))
    });

    let spec = EvaluatorSpec {
        architecture: Architecture::Modular,
        granularity: Granularity::PerStep,
        domain_tag: DomainTag::Sandbox,
        vision_endpoint: None,
        text_endpoint: Some("text".into()),
        reward_config: RewardConfig::default(),
    };
    let backend = ScriptedBackend::new().with_default("Thoughts: ok\nResponse: \"not-sure\"");
    let (t, _) = &corpus[0];
    // A fresh gateway per iteration keeps the in-memory request log small.
    c.bench_function("evaluate_per_step_scripted", |b| {
        b.iter(|| evaluate(black_box(t), &spec, &Gateway::new(backend.clone())))
    });
}

criterion_group!(benches, parsers, tau, sandbox);
criterion_main!(benches);
