//! Training-cost comparison: the clustered Grassmannian surrogate against
//! one GP per output component on the flattened solutions. Uses a
//! shortened Kraichnan-Orszag horizon so a bench iteration stays small.

use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use grassgp::clustering::ClusterConfig;
use grassgp::gp::gp_fit;
use grassgp::ko::{sample_ko_dataset, KoConfig};
use grassgp::pipeline::{train_surrogate, ParameterPoint, SolutionSnapshot, SurrogateConfig};

fn ko_data(n: usize) -> (Vec<ParameterPoint>, Vec<SolutionSnapshot>) {
    let config = KoConfig {
        t_final: 3.0,
        ..KoConfig::default()
    };
    sample_ko_dataset(n, 7, &config, None).unwrap()
}

fn bench_clustered_train(c: &mut Criterion) {
    let (params, snapshots) = ko_data(64);
    let config = SurrogateConfig {
        cluster: ClusterConfig {
            n_min_points: 8,
            n_max_clusters: Some(6),
            error_threshold: 1e-3,
            pass_fraction: 0.95,
            n_start: 4,
        },
        seed: 7,
        ..SurrogateConfig::default()
    };
    let mut group = c.benchmark_group("train");
    group.sample_size(10);
    group.bench_function("clustered_surrogate_64", |b| {
        b.iter(|| train_surrogate(black_box(&params), black_box(&snapshots), &config).unwrap())
    });
    group.finish();
}

fn bench_monolithic_gp(c: &mut Criterion) {
    let (params, snapshots) = ko_data(64);
    let inputs: Vec<Vec<f64>> = params.iter().map(|p| p.values.clone()).collect();
    let flat: Vec<Vec<f64>> = snapshots
        .iter()
        .map(|s| s.matrix.as_slice().to_vec())
        .collect();
    let n_out = flat[0].len();
    let mut group = c.benchmark_group("train");
    group.sample_size(10);
    // One GP per output component over a slice of the output space; the
    // full flattened fit is proportionally slower.
    group.bench_function("monolithic_gp_64_x100components", |b| {
        b.iter(|| {
            for d in 0..100.min(n_out) {
                let w: Vec<f64> = flat.iter().map(|f| f[d]).collect();
                let _ = gp_fit(black_box(&inputs), black_box(&w), 1.0, 1e-10).unwrap();
            }
        })
    });
    group.finish();
}

criterion_group!(benches, bench_clustered_train, bench_monolithic_gp);
criterion_main!(benches);
