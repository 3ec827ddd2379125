//! Per-tick costs of the navigation stack, plus a batch of scans fanned out
//! over poses.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion};

use overcanopy::control::mpc::solve;
use overcanopy::control::MpcConfig;
use overcanopy::detection::{Detector, DetectorConfig};
use overcanopy::field::{generate_field, FieldSpec};
use overcanopy::geometry::{Pose2, Vec2};
use overcanopy::sim::{LidarConfig, LidarSim};
use overcanopy::Exec;

fn detection(c: &mut Criterion) {
    let field = generate_field(&FieldSpec::default()).unwrap();
    let sim = LidarSim::new(&field, LidarConfig::default());
    // warm the centroid map over a few frames so the fit runs on full tracks
    let mut det = Detector::new(DetectorConfig::default(), 1);
    for i in 0..40 {
        let pose = Pose2::new(5.0 + 0.025 * i as f64, 0.0, 0.0);
        det.process(&sim.scan(&pose), &pose);
    }
    let pose = Pose2::new(6.0, 0.0, 0.0);
    let cloud = sim.scan(&pose);
    c.bench_function("detection_frame", |b| {
        b.iter_batched(
            || det.clone(),
            |mut d| d.process(black_box(&cloud), &pose),
            BatchSize::SmallInput,
        )
    });
}

fn mpc(c: &mut Criterion) {
    let cfg = MpcConfig::default();
    let wps: Vec<Vec2> = (0..13)
        .map(|i| Vec2::new(0.25 * i as f64, 0.08 + 0.01 * i as f64))
        .collect();
    c.bench_function("mpc_solve", |b| {
        b.iter(|| solve(black_box(&Pose2::new(0.0, 0.0, 0.05)), &wps, &cfg, None))
    });
}

fn scan_batch(c: &mut Criterion) {
    let field = generate_field(&FieldSpec::default()).unwrap();
    let sim = LidarSim::new(&field, LidarConfig::default());
    let poses: Vec<Pose2> = (0..32).map(|i| Pose2::new(2.0 + 1.5 * i as f64, 0.0, 0.0)).collect();
    let mut group = c.benchmark_group("scan_batch");
    for exec in [Exec::Sequential, Exec::Parallel] {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            // outer fan-out over poses, each scan on its own thread
            b.iter(|| exec.map(&poses, |p| sim.scan_with(p, Exec::Sequential).len()))
        });
    }
    group.finish();
}

criterion_group!(benches, detection, mpc, scan_batch);
criterion_main!(benches);
