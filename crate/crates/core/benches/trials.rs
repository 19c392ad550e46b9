use arld_core::envs::Task;
use arld_core::expert::{evaluate_checkpoints, Checkpoint, ExpertSelectionRule};
use arld_core::harness::{run_trials, run_trials_sequential, train_checkpoints, ExperimentConfig, Method};
use arld_core::nn::OutputKind;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn small(variant: OutputKind) -> ExperimentConfig {
    let mut c = ExperimentConfig::preset(Task::CartPole, Method::Dqn, variant);
    c.training_steps = 1_000;
    c.eval_period = 500;
    c.eval_episodes = 5;
    c.seeds = (0..8).collect();
    c
}

fn seeds(c: &mut Criterion) {
    let mut group = c.benchmark_group("seeds");
    group.sample_size(10);
    for (name, variant) in [("bootstrapped", OutputKind::Bootstrapped { heads: 10 }), ("noisy", OutputKind::Noisy)] {
        let cfg = small(variant);
        group.bench_with_input(BenchmarkId::new("sequential", name), &cfg, |b, cfg| {
            b.iter(|| run_trials_sequential(cfg, None).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("parallel", name), &cfg, |b, cfg| {
            b.iter(|| run_trials(cfg, None).unwrap())
        });
    }
    group.finish();
}

fn checkpoints(c: &mut Criterion) {
    let mut cfg = small(OutputKind::Bootstrapped { heads: 10 });
    cfg.training_steps = 2_000;
    cfg.eval_period = 250;
    let cps: Vec<Checkpoint> = train_checkpoints(&cfg, 0).unwrap();
    let rule = ExpertSelectionRule::for_task(Task::CartPole);
    let mut group = c.benchmark_group("checkpoint_evaluation");
    group.sample_size(10);
    group.bench_function("evaluate_8_checkpoints", |b| {
        b.iter(|| evaluate_checkpoints(&cps, Task::CartPole, &rule, 12345).unwrap())
    });
    group.finish();
}

criterion_group!(benches, seeds, checkpoints);
criterion_main!(benches);
