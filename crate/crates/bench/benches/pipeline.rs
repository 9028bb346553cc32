use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use std::hint::black_box;

use datadiet_bench::{blob_mask, noise_mask, prob_from_mask, smooth_scalar};
use datadiet_core::components::{connected_components, Connectivity};
use datadiet_core::distcompare::{log_percentile_qq, DistributionSummary};
use datadiet_core::metrics::{evaluate_sample, false_positive_volume, EvalParams};
use datadiet_core::nifti;
use datadiet_core::preprocess::{resample, Interpolation};

fn bench_connected_components(c: &mut Criterion) {
    let mut group = c.benchmark_group("connected_components");
    for side in [64usize, 128] {
        let voxels = (side * side * side) as u64;
        group.throughput(Throughput::Elements(voxels));
        let blobs = blob_mask(side, 1);
        group.bench_with_input(BenchmarkId::new("blobs_26", side), &blobs, |b, mask| {
            b.iter(|| connected_components(black_box(mask), Connectivity::TwentySix))
        });
        let noise = noise_mask(side, 0.4, 2);
        group.bench_with_input(BenchmarkId::new("noise_26", side), &noise, |b, mask| {
            b.iter(|| connected_components(black_box(mask), Connectivity::TwentySix))
        });
        group.bench_with_input(BenchmarkId::new("noise_6", side), &noise, |b, mask| {
            b.iter(|| connected_components(black_box(mask), Connectivity::Six))
        });
    }
    group.finish();
}

fn bench_resample(c: &mut Criterion) {
    let mut group = c.benchmark_group("resample");
    group.sample_size(20);
    let grid = smooth_scalar(96);
    group.bench_function("trilinear_96_to_half_spacing", |b| {
        b.iter(|| resample(black_box(&grid), [2.0, 2.0, 2.0], Interpolation::Trilinear).unwrap())
    });
    group.bench_function("trilinear_96_upsample", |b| {
        b.iter(|| resample(black_box(&grid), [0.8, 0.8, 0.8], Interpolation::Trilinear).unwrap())
    });
    let labels = blob_mask(96, 3);
    group.bench_function("nearest_96_labels", |b| {
        b.iter(|| {
            resample(
                black_box(labels.grid()),
                [1.7, 1.7, 1.7],
                Interpolation::NearestNeighbor,
            )
            .unwrap()
        })
    });
    group.finish();
}

fn bench_evaluate(c: &mut Criterion) {
    let mut group = c.benchmark_group("evaluate_sample");
    group.sample_size(10);
    for side in [96usize, 160] {
        let gt = blob_mask(side, 7);
        let prob = prob_from_mask(&gt, 8);
        let spacing = [2.036, 2.036, 3.0];
        group.throughput(Throughput::Elements((side * side * side) as u64));
        group.bench_with_input(BenchmarkId::from_parameter(side), &side, |b, _| {
            b.iter(|| {
                evaluate_sample(
                    "bench",
                    black_box(&prob),
                    black_box(&gt),
                    spacing,
                    &EvalParams::default(),
                )
                .unwrap()
            })
        });
    }
    group.finish();
}

fn bench_fpv(c: &mut Criterion) {
    let gt = blob_mask(128, 11);
    let pred = blob_mask(128, 12);
    c.bench_function("false_positive_volume_128", |b| {
        b.iter(|| {
            false_positive_volume(black_box(&pred), black_box(&gt), [2.036, 2.036, 3.0]).unwrap()
        })
    });
}

fn bench_quantiles(c: &mut Criterion) {
    let values: Vec<f64> = (0..100_000).map(|i| ((i * 2654435761u64 as usize) % 99991) as f64).collect();
    let dist = DistributionSummary::new(values.clone(), "mL").unwrap();
    c.bench_function("qq_99_of_100k", |b| {
        b.iter(|| log_percentile_qq(black_box(&dist), black_box(&dist), 99, 1e-4).unwrap())
    });
    c.bench_function("distribution_build_100k", |b| {
        b.iter(|| DistributionSummary::new(black_box(values.clone()), "mL").unwrap())
    });
}

fn bench_nifti(c: &mut Criterion) {
    let grid = smooth_scalar(96);
    let bytes = nifti::nifti_bytes(&grid);
    let mut group = c.benchmark_group("nifti");
    group.throughput(Throughput::Bytes(bytes.len() as u64));
    group.bench_function("serialize_96", |b| {
        b.iter(|| nifti::nifti_bytes(black_box(&grid)))
    });
    group.bench_function("parse_96", |b| {
        b.iter(|| nifti::load_nifti_bytes(black_box(&bytes)).unwrap())
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_connected_components,
    bench_resample,
    bench_evaluate,
    bench_fpv,
    bench_quantiles,
    bench_nifti
);
criterion_main!(benches);
