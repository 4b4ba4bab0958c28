use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use oprg::feshbach::{feshbach_map, validate_pair};
use oprg::kernels::reconstruct;
use oprg::linalg::re;
use oprg::oracle::ed_ground_ops;
use oprg::perturb::rs_coefficients;
use oprg::rg::{iterate, RGConfig};
use oprg::{testkit, C64};
use oprg_bench::{models, series_model, stage};

fn feshbach(c: &mut Criterion) {
    let mut group = c.benchmark_group("feshbach_map");
    for dim in [8, 16, 32] {
        let mut rng = testkit::rng(dim as u64);
        let (h, t, chi, chibar) = testkit::random_pair(&mut rng, dim, false);
        let pair = validate_pair(&h, &t, &chi, &chibar).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(dim), &pair, |b, p| b.iter(|| feshbach_map(black_box(p)).unwrap()));
    }
    group.finish();
}

fn round_trip(c: &mut Criterion) {
    let mut group = c.benchmark_group("reconstruct");
    for modes in [1, 2, 3] {
        let mut rng = testkit::rng(modes as u64);
        let frame = testkit::random_frame(&mut rng, modes, 3);
        let w = testkit::random_sequence(&mut rng, &frame, 4);
        let h = w.assemble().unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(modes), &h, |b, h| {
            b.iter(|| reconstruct(black_box(h), frame.clone(), w.z, w.xi).unwrap())
        });
    }
    group.finish();
}

fn initial_kernel(c: &mut Criterion) {
    let mut group = c.benchmark_group("initial_kernel");
    for (name, model) in models() {
        let s = stage(&model);
        group.bench_function(name, |b| b.iter(|| s.kernel(re(0.01), black_box(C64::new(0.1, 0.05))).unwrap()));
    }
    group.finish();
}

fn ground_energy(c: &mut Criterion) {
    let mut group = c.benchmark_group("ground_energy");
    group.sample_size(10);
    let config = RGConfig::default();
    for (name, model) in models() {
        let s = stage(&model);
        group.bench_function(BenchmarkId::new("rg", name), |b| b.iter(|| iterate(&s, re(black_box(0.01)), &config).unwrap()));
        group.bench_function(BenchmarkId::new("ed", name), |b| b.iter(|| ed_ground_ops(&s.ops, black_box(0.01)).unwrap()));
    }
    group.finish();
}

fn series(c: &mut Criterion) {
    let mut group = c.benchmark_group("rs_coefficients");
    group.sample_size(10);
    for (name, model) in models() {
        let m = series_model(&model);
        group.bench_function(name, |b| b.iter(|| rs_coefficients(black_box(&m), 0.3, 8).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, feshbach, round_trip, initial_kernel, ground_energy, series);
criterion_main!(benches);
