use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::rngs::StdRng;
use rand::SeedableRng;

use rcp_fluid::bifurcation::{default_grid, sweep_and_fit, HopfSetup, SweepOptions};
use rcp_fluid::random::{random_network, RandomNetworkOptions};
use rcp_fluid::sim::{run, RunawayPolicy};
use rcp_fluid::{solve, Exec, Network, QueueFunction, SimConfig};

fn networks(n: usize, opts: &RandomNetworkOptions) -> Vec<(Network, Vec<QueueFunction>)> {
    let mut rng = StdRng::seed_from_u64(42);
    (0..n).map(|_| random_network(&mut rng, opts)).collect()
}

fn eta_sweep(c: &mut Criterion) {
    let setup = HopfSetup { horizon_taus: 400.0, ..HopfSetup::new(1.0, 1.0) };
    let grid = default_grid(setup.predicted_eta_c());
    let mut group = c.benchmark_group("eta_sweep");
    group.sample_size(10);
    for exec in [Exec::Sequential, Exec::Parallel] {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            let options = SweepOptions { exec, hysteresis: None, ..Default::default() };
            b.iter(|| sweep_and_fit(&setup, black_box(&grid), options).unwrap())
        });
    }
    group.finish();
}

fn network_batch(c: &mut Criterion) {
    let batch = networks(64, &RandomNetworkOptions::default());
    let delay_free = networks(16, &RandomNetworkOptions::delay_free());

    let mut group = c.benchmark_group("random_equilibria");
    for exec in [Exec::Sequential, Exec::Parallel] {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| exec.map(&batch, |(net, q)| solve(net, q).unwrap()))
        });
    }
    group.finish();

    let mut group = c.benchmark_group("random_delay_free_runs");
    group.sample_size(10);
    for exec in [Exec::Sequential, Exec::Parallel] {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| {
                exec.map(&delay_free, |(net, q)| {
                    let init = solve(net, q).unwrap().link_rates.iter().map(|r| 2.0 * r).collect();
                    let cfg = SimConfig::new(0.01, 100.0, init).stride(100).runaway(RunawayPolicy::Hold);
                    run(net, q, &cfg).unwrap()
                })
            })
        });
    }
    group.finish();
}

criterion_group!(benches, eta_sweep, network_batch);
criterion_main!(benches);
