use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use exitwait::harness::{check_programs, enumerate_programs, gen_program, Execution, GenConfig};

fn bench_random(c: &mut Criterion) {
    let mut group = c.benchmark_group("random_campaign");
    group.sample_size(10);
    for count in [100usize, 500] {
        let programs = gen_program(&GenConfig {
            count,
            ..GenConfig::default()
        });
        for (name, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
            group.bench_with_input(BenchmarkId::new(name, count), &programs, |b, ps| {
                b.iter(|| std::hint::black_box(check_programs(ps, 42, exec)));
            });
        }
    }
    group.finish();
}

fn bench_exhaustive(c: &mut Criterion) {
    let mut group = c.benchmark_group("exhaustive_campaign");
    group.sample_size(10);
    let programs = enumerate_programs(6);
    for (name, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
        group.bench_function(name, |b| {
            b.iter(|| std::hint::black_box(check_programs(&programs, 0, exec)));
        });
    }
    group.finish();
}

criterion_group!(benches, bench_random, bench_exhaustive);
criterion_main!(benches);
