use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dmdgen::datagen::{collapse_dataset, CollapseSpec, GridSpec};
use dmdgen::exec::Execution;
use dmdgen::grassmann::{DistanceKind, OrthonormalBasis};
use dmdgen::metric::{dmd_gen, MetricConfig, PreparedModes};
use dmdgen::transport::pairwise_costs;
use std::hint::black_box;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn data(lambda: f64, seed: u64) -> dmdgen::datagen::Dataset {
    let spec = CollapseSpec {
        grid: GridSpec {
            t_points: 65,
            x_points: 33,
        },
        ..CollapseSpec::new(128, lambda, seed)
    };
    collapse_dataset(&spec, Execution::Parallel).expect("collapse data")
}

fn bench_costs(c: &mut Criterion) {
    let cfg = MetricConfig::default();
    let real = PreparedModes::full(&data(0.5, 1), &cfg).expect("modes");
    let gen = PreparedModes::full(&data(0.2, 2), &cfg).expect("modes");
    let pick =
        |p: &PreparedModes| -> Vec<OrthonormalBasis> { (0..64).map(|i| p.basis(i).expect("basis").clone()).collect() };
    let (rb, gb) = (pick(&real), pick(&gen));
    let rr: Vec<&OrthonormalBasis> = rb.iter().collect();
    let gr: Vec<&OrthonormalBasis> = gb.iter().collect();
    let mut group = c.benchmark_group("cost_matrix_64x64");
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| pairwise_costs(black_box(&rr), black_box(&gr), DistanceKind::Projection, exec).expect("costs"))
        });
    }
    group.finish();
}

fn bench_metric(c: &mut Criterion) {
    let (real, gen) = (data(0.5, 3), data(0.3, 4));
    let mut group = c.benchmark_group("dmd_gen_b4_l32");
    group.sample_size(10);
    for (name, exec) in MODES {
        let cfg = MetricConfig {
            num_batches: 4,
            batch_size: 32,
            execution: exec,
            ..MetricConfig::default()
        };
        group.bench_with_input(BenchmarkId::from_parameter(name), &cfg, |b, cfg| {
            b.iter(|| dmd_gen(black_box(&real), black_box(&gen), cfg).expect("metric").value)
        });
    }
    group.finish();
}

criterion_group!(benches, bench_costs, bench_metric);
criterion_main!(benches);
