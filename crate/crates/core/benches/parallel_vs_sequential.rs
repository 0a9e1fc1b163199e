use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use latent_lob::bvp::{stationary_profile, BvpConfig};
use latent_lob::exec::Execution;
use latent_lob::grid::log_space;
use latent_lob::sim::{run_ensemble, SimConfig};
use latent_lob::stability::sweep;
use latent_lob::ModelParams;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn stability_sweep(c: &mut Criterion) {
    let k_ll = log_space(0.05, 3.0, 8);
    let k_lr = log_space(0.01, 1.0, 8);
    let cfg = BvpConfig::with_points(801);
    let mut g = c.benchmark_group("stability_sweep_8x8");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| sweep(&k_ll, &k_lr, &cfg, exec)));
    }
    g.finish();
}

fn ensemble(c: &mut Criterion) {
    let p = ModelParams::new(0.5, 0.05, 0.5 / 49.0, 0.05, 10.0).unwrap();
    let mut cfg = SimConfig::for_params(&p, 400, 1.0, 1.0, 2000).unwrap();
    cfg.burn_in_steps = Some(500);
    let init = stationary_profile(&p, &BvpConfig::default()).unwrap();
    let mut g = c.benchmark_group("ensemble_4x2000_steps");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| run_ensemble(&cfg, &init, 4, exec).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, stability_sweep, ensemble);
criterion_main!(benches);
