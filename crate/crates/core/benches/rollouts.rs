use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dqc_core::harness::{evaluate, preset, Policy};
use dqc_core::learn::QNetwork;
use dqc_core::par::ExecMode;

fn eval_modes(c: &mut Criterion) {
    let mut config = preset("desk_small").unwrap();
    config.env.deadline = 200;
    let env = config.build_env().unwrap();
    let net = QNetwork::new(&config.arch(&env), &mut dqc_core::rng::stream(0, dqc_core::rng::Stream::Init)).unwrap();

    let mut group = c.benchmark_group("evaluate");
    group.sample_size(10);
    for (name, mode) in [("sequential", ExecMode::Sequential), ("parallel", ExecMode::Parallel)] {
        for policy in [Policy::Random, Policy::Greedy] {
            group.bench_with_input(BenchmarkId::new(name, format!("{policy:?}")), &policy, |b, &policy| {
                b.iter(|| black_box(evaluate(&net, &config, 32, policy, mode).unwrap().0))
            });
        }
    }
    group.finish();
}

criterion_group!(benches, eval_modes);
criterion_main!(benches);
