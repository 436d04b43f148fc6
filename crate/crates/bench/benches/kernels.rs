//! Micro-benchmarks of the hot kernels: one series expansion at several
//! orders, the error-radius evaluation, and full adaptive runs of the
//! bundled nine-bus case.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use dtsim_core::{
    dt_step, step::error_radius, vs_integrate, vsoo_integrate, ClassicalSystem, DynamicModel,
    NetworkCase, OrderControllerConfig, SimOptions, StepControllerConfig,
};

fn nine_bus() -> ClassicalSystem {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../cases/ieee9.json");
    let case = NetworkCase::load(&path).unwrap();
    ClassicalSystem::from_case(&case).unwrap()
}

fn bench_dt_step(c: &mut Criterion) {
    let sys = nine_bus();
    let x0 = sys.initial_state();
    let mut group = c.benchmark_group("dt_step_nine_bus");
    for order in [4usize, 15, 45] {
        group.bench_with_input(BenchmarkId::from_parameter(order), &order, |b, &order| {
            b.iter(|| dt_step(sys.spec(), black_box(&x0), order, 0.01).unwrap())
        });
    }
    group.finish();
}

fn bench_error_radius(c: &mut Criterion) {
    let sys = nine_bus();
    let x0 = sys.initial_state();
    let (block, _) = dt_step(sys.spec(), &x0, 15, 0.01).unwrap();
    let eta = StepControllerConfig::default().eta;
    c.bench_function("error_radius_order_15", |b| {
        b.iter(|| error_radius(black_box(&block), &x0, 15, 0.01, &eta))
    });
}

fn bench_full_runs(c: &mut Criterion) {
    let step_cfg = StepControllerConfig::default();
    let order_cfg = OrderControllerConfig::default();
    let opts = SimOptions::new(20.0);
    let mut group = c.benchmark_group("nine_bus_20s");
    group.sample_size(20);
    group.bench_function("vsoo_dt", |b| {
        b.iter(|| {
            let mut sys = nine_bus();
            let x0 = sys.initial_state();
            vsoo_integrate(&mut sys, &x0, 1e-3, &step_cfg, &order_cfg, &opts).unwrap()
        })
    });
    group.bench_function("vs_dt_order_8", |b| {
        b.iter(|| {
            let mut sys = nine_bus();
            let x0 = sys.initial_state();
            vs_integrate(&mut sys, &x0, 8, 1e-3, &step_cfg, &opts).unwrap()
        })
    });
    group.finish();
}

criterion_group!(benches, bench_dt_step, bench_error_radius, bench_full_runs);
criterion_main!(benches);
