use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ostd_bench::{dictionary, random_walk, Transitions, DISCOUNT, NOISE_VAR};
use ostd_core::{init_ensemble, sample_frequencies, KernelSpec, OnlineGptd};

fn single(c: &mut Criterion) {
    let mut group = c.benchmark_group("os_gptd_slot");
    for d in [25, 50, 100, 200] {
        let rf = sample_frequencies(KernelSpec::gaussian(0.1).unwrap(), d, 10, 1).unwrap();
        let mut model = OnlineGptd::new(rf, NOISE_VAR).unwrap();
        let mut data = Transitions::new(random_walk(1000, 2));
        group.bench_with_input(BenchmarkId::from_parameter(d), &d, |b, _| {
            b.iter(|| {
                let (s, r, s_next) = data.step();
                black_box(model.predict(s).unwrap());
                black_box(model.observe(s, r, s_next, DISCOUNT).unwrap());
            })
        });
    }
    group.finish();
}

fn ensemble(c: &mut Criterion) {
    let mut group = c.benchmark_group("os_egptd_slot");
    for m in [1, 3, 6] {
        let mut ens = init_ensemble(&dictionary(m), 100, 10, NOISE_VAR, 3).unwrap();
        let mut data = Transitions::new(random_walk(1000, 4));
        group.bench_with_input(BenchmarkId::from_parameter(m), &m, |b, _| {
            b.iter(|| {
                let (s, r, s_next) = data.step();
                black_box(ens.predict(s).unwrap());
                black_box(ens.step(s, r, s_next, DISCOUNT).unwrap());
            })
        });
    }
    group.finish();
}

fn features(c: &mut Criterion) {
    let rf = sample_frequencies(KernelSpec::gaussian(1.0).unwrap(), 100, 10, 5).unwrap();
    let traj = random_walk(10, 6);
    let mut out = nalgebra::DVector::zeros(rf.feature_dim());
    c.bench_function("feature_map_d100", |b| {
        b.iter(|| {
            rf.feature_map_into(black_box(&traj.states[0]), &mut out)
                .unwrap()
        })
    });
}

criterion_group!(benches, single, ensemble, features);
criterion_main!(benches);
