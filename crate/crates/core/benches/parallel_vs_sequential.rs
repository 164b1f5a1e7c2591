use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hgt_core::crosscheck::eps_sweep;
use hgt_core::grid::{softmax_measure, Domain, Field1D, LatticeKernel};
use hgt_core::kernels::TransferKernel;
use hgt_core::model::ModelConfig;
use hgt_core::oracle::{hopf_lax_dp, DpOptions, FnFitness};
use hgt_core::parallel::Parallelism;

fn policies() -> Vec<(&'static str, Parallelism)> {
    let mut p = vec![("sequential", Parallelism::Sequential)];
    #[cfg(feature = "parallel")]
    p.push(("rayon", Parallelism::Rayon));
    p
}

fn transfer(c: &mut Criterion) {
    let n = 4096;
    let dom = Domain::symmetric(8.0, n).unwrap();
    let lattice = LatticeKernel::new(&dom, &TransferKernel::tanh());
    let u = Field1D::from_fn(dom, |z| -(z - 0.3) * (z - 0.3)).unwrap();
    let weights = softmax_measure(&u, 0.05).weights;
    let mut g = c.benchmark_group("transfer_field_4096");
    for (name, par) in policies() {
        g.bench_with_input(BenchmarkId::from_parameter(name), &par, |b, &par| {
            b.iter(|| lattice.apply(black_box(&weights), 1.0, par))
        });
    }
    g.finish();
}

fn dp_full_scan(c: &mut Criterion) {
    let dom = Domain::symmetric(5.5, 1025).unwrap();
    let u0 = Field1D::from_fn(dom, |z| -z * z).unwrap();
    let fit = FnFitness(|_: f64, z: f64| -z * z + (z - 0.2).tanh());
    let mut g = c.benchmark_group("hopf_lax_dp_full_scan_1025");
    g.sample_size(10);
    for (name, par) in policies() {
        let opts = DpOptions {
            full_scan: true,
            parallelism: par,
            ..DpOptions::default()
        };
        g.bench_with_input(BenchmarkId::from_parameter(name), &opts, |b, opts| {
            b.iter(|| hopf_lax_dp(black_box(&u0), &fit, 0.01, 0.05, opts).unwrap())
        });
    }
    g.finish();
}

fn sweep(c: &mut Criterion) {
    let mut cfg = ModelConfig::new(1.0, 1.0);
    cfg.n = 513;
    cfg.half_width = 5.5;
    cfg.dt = 5e-4;
    cfg.t_end = 0.25;
    let mut g = c.benchmark_group("eps_sweep_three_values");
    g.sample_size(10);
    for (name, par) in policies() {
        g.bench_with_input(BenchmarkId::from_parameter(name), &par, |b, &par| {
            b.iter(|| eps_sweep(black_box(&cfg), &[4e-3, 2e-3, 1e-3], None, par).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, transfer, dp_full_scan, sweep);
criterion_main!(benches);
