use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ostd_bench::{random_walk, DISCOUNT, NOISE_VAR};
use ostd_core::{ExactGptd, KernelSpec, OracleConfig};

fn exact_fit(c: &mut Criterion) {
    let mut group = c.benchmark_group("exact_gptd_fit");
    group.sample_size(20);
    let spec = KernelSpec::gaussian(0.1).unwrap();
    for t in [50, 100, 200, 400] {
        let batch = random_walk(t, 7).to_batch(DISCOUNT).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(t), &t, |b, _| {
            b.iter(|| {
                let gp = ExactGptd::fit(spec, &batch, NOISE_VAR, OracleConfig::default()).unwrap();
                black_box(gp.predict(&batch.states()[0]).unwrap())
            })
        });
    }
    group.finish();
}

criterion_group!(benches, exact_fit);
criterion_main!(benches);
