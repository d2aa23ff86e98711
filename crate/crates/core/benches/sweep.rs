use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pyragas_mps::sweep::{parse_config, run_sweep, Overrides};

const CONFIG: &str = "\
tau = 0.02
pulse_area = 2*pi
t_end = 0.4
sweep_axis1 = phi
sweep_axis1_values = 0, pi/2, pi, 3*pi/2
";

fn sweep_workers(c: &mut Criterion) {
    let spec = parse_config(CONFIG, &Overrides::default()).unwrap().sweep.unwrap();
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    let mut group = c.benchmark_group("phi_sweep");
    group.sample_size(10);
    for workers in [1, threads.max(2)] {
        let label = if workers == 1 { "sequential" } else { "parallel" };
        group.bench_with_input(BenchmarkId::new(label, workers), &workers, |b, &w| {
            b.iter(|| black_box(run_sweep(&spec, w).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, sweep_workers);
criterion_main!(benches);
