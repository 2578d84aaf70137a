use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use nlcg::batching::{averaged_gradient, BatchPlan};
use nlcg::OptimizerKind;
use nlcg_bench::{desk_mlp, optimizer};

fn evaluate(c: &mut Criterion) {
    let problem = desk_mlp();
    let w = problem.init_weights(0);
    let mut group = c.benchmark_group("mlp_evaluate");
    for batch in [64usize, 512, 4096] {
        let idx: Vec<usize> = (0..batch).collect();
        group.bench_with_input(BenchmarkId::from_parameter(batch), &idx, |b, idx| {
            b.iter(|| problem.evaluate(black_box(&w), idx).unwrap())
        });
    }
    group.finish();
}

fn virtual_batches(c: &mut Criterion) {
    let problem = desk_mlp();
    let w = problem.init_weights(0);
    let mut group = c.benchmark_group("averaged_gradient_4096");
    for k in [1usize, 8, 64] {
        let mut plan = BatchPlan::new(8192, 4096 / k, k, 0).unwrap();
        let micro = plan.next_batch();
        group.bench_with_input(BenchmarkId::from_parameter(k), &micro, |b, micro| {
            b.iter(|| averaged_gradient(&problem, black_box(&w), micro).unwrap())
        });
    }
    group.finish();
}

fn optimizer_steps(c: &mut Criterion) {
    let problem = desk_mlp();
    let n = problem.weight_count();
    let mut group = c.benchmark_group("step_batch_512");
    for kind in OptimizerKind::ALL {
        group.bench_function(kind.name(), |b| {
            let mut opt = optimizer(kind, n);
            let mut plan = BatchPlan::new(8192, 512, 1, 0).unwrap();
            let mut w = problem.init_weights(0);
            b.iter(|| {
                let (next, _) = opt
                    .step(&w, 0.01, |v| averaged_gradient(&problem, v, &plan.next_batch()))
                    .unwrap();
                w = next;
            })
        });
    }
    group.finish();
}

criterion_group!(benches, evaluate, virtual_batches, optimizer_steps);
criterion_main!(benches);
