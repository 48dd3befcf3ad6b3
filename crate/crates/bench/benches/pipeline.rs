use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mdpjls_bench::{counterexample, transport, vehicle};
use mdpjls_core::lyapunov::{certify, DEFAULT_BISECT_TOL};
use mdpjls_core::msstab::{self, CdOptions};
use mdpjls_core::simulate::{simulate, SimConfig};
use mdpjls_core::synth::{self, P1Options};
use mdpjls_core::{check_ms, induce_chain, Policy};

fn radius(c: &mut Criterion) {
    let mut group = c.benchmark_group("ms_radius");
    for n in [4usize, 8, 12] {
        let jls = transport(n, 8);
        let chain = induce_chain(&jls.mdp, &Policy::uniform(&jls.mdp)).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| check_ms(&jls.system, &chain).unwrap())
        });
    }
    group.finish();
}

fn synthesis(c: &mut Criterion) {
    let ce = counterexample();
    c.bench_function("ms_cd_counterexample", |b| {
        b.iter(|| msstab::synthesize_ms_cd(&ce, &CdOptions::default()).unwrap())
    });

    let v = vehicle();
    c.bench_function("certify_vehicle", |b| b.iter(|| certify(&v.system, DEFAULT_BISECT_TOL).unwrap()));

    let cert = certify(&v.system, DEFAULT_BISECT_TOL).unwrap();
    c.bench_function("p1_dep_vehicle", |b| {
        b.iter(|| synth::synthesize_p1_dependent(&v, &cert, &P1Options::default()).unwrap())
    });
}

fn simulation(c: &mut Criterion) {
    let v = vehicle();
    let policy = Policy::uniform(&v.mdp);
    let cfg = SimConfig { steps: 2000, runs: 10, seed: 1, ..SimConfig::default() };
    c.bench_function("simulate_vehicle_10x2000", |b| b.iter(|| simulate(&v, &policy, &cfg).unwrap()));
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = radius, synthesis, simulation
}
criterion_main!(benches);
