use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use nobacktrack::examples::{line_walk, random_reversible, rectangle};
use nobacktrack::lift::{build_nobacktrack, lift_function, liu_kernel, sample_update_with};
use nobacktrack::rng::derive_rng;
use nobacktrack::variance::{exact_asymptotic_variance, simulate, InitialState};

fn bench_exact_variance(c: &mut Criterion) {
    let mut group = c.benchmark_group("exact_asymptotic_variance");
    for n in [8usize, 32, 64] {
        let spec = line_walk(n);
        group.bench_with_input(BenchmarkId::new("line_walk", n), &spec, |b, spec| {
            b.iter(|| exact_asymptotic_variance(black_box(&spec.chain), &spec.f).unwrap())
        });
    }
    group.finish();
}

fn bench_lift_construction(c: &mut Criterion) {
    let mut group = c.benchmark_group("build_nobacktrack");
    for (label, spec) in [
        ("rectangle_8x6", rectangle(8, 6)),
        ("random_24", random_reversible(24, 0.4, 7)),
    ] {
        group.bench_function(label, |b| {
            b.iter(|| {
                let kernel = liu_kernel(black_box(&spec.chain));
                build_nobacktrack(&spec.chain, &kernel).unwrap()
            })
        });
    }
    group.finish();
}

fn bench_simulation(c: &mut Criterion) {
    let spec = rectangle(8, 6);
    let lifted = build_nobacktrack(&spec.chain, &liu_kernel(&spec.chain)).unwrap();
    let lf = lift_function(&spec.f, &lifted);
    c.bench_function("simulate_lifted_100k", |b| {
        b.iter(|| {
            let traj = simulate(
                black_box(lifted.chain()),
                100_000,
                3,
                &InitialState::State(0),
            )
            .unwrap();
            nobacktrack::variance::empirical_estimate(&traj, &lf)
        })
    });
    c.bench_function("sample_update_100k", |b| {
        b.iter(|| {
            let mut rng = derive_rng(5, 0);
            let mut acc = 0usize;
            let (x, y) = (black_box(20usize), 21usize);
            for _ in 0..100_000 {
                acc += sample_update_with(&spec.chain, x, y, &mut rng);
            }
            acc
        })
    });
}

criterion_group!(
    benches,
    bench_exact_variance,
    bench_lift_construction,
    bench_simulation
);
criterion_main!(benches);
