//! Sequential vs data-parallel timings of the hot paths.
//!
//! `sequential` pins the pool to one thread; `parallel` uses every core.
//! Building with `--no-default-features` swaps rayon out entirely and both
//! variants then measure the plain sequential fallback.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use echoview_core::correspondence::{establish_correspondence, prepare_corresponded, CorrespondenceOptions};
use echoview_core::dataset::{generate_samples, GenerationConfig, SplitPlan};
use echoview_core::mesh::generate_phantom;
use echoview_core::neural::{build_spirals, Architecture, GcnModel, PreparedSample, TrainConfig, Trainer};
use echoview_core::parallel::with_workers;
use echoview_core::verify::slicing_suite;

const MODES: [(&str, usize); 2] = [("sequential", 1), ("parallel", 0)];

fn sample_generation(c: &mut Criterion) {
    let phantoms = [generate_phantom(0, 3), generate_phantom(1, 3)];
    let (_, meshes) = prepare_corresponded(&phantoms, Some(500), CorrespondenceOptions::default()).unwrap();
    let cfg = GenerationConfig {
        per_view_count: 2,
        image_size: 128,
        split: SplitPlan::all_train(),
        ..GenerationConfig::default()
    };
    let mut g = c.benchmark_group("generate_16_samples_128px");
    for (name, workers) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| with_workers(workers, || black_box(generate_samples(&meshes, &cfg).unwrap())))
        });
    }
    g.finish();
}

fn slicing_oracle(c: &mut Criterion) {
    let mut g = c.benchmark_group("slicing_oracle_8_poses_128px");
    g.sample_size(10);
    for (name, workers) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| with_workers(workers, || black_box(slicing_suite(1, 8, 128))))
        });
    }
    g.finish();
}

fn batch_gradient(c: &mut Criterion) {
    let phantoms = [generate_phantom(0, 3)];
    let (template, meshes) = prepare_corresponded(&phantoms, Some(500), CorrespondenceOptions::default()).unwrap();
    let cfg = GenerationConfig {
        per_view_count: 2,
        image_size: 64,
        split: SplitPlan::all_train(),
        ..GenerationConfig::default()
    };
    let data: Vec<PreparedSample<f32>> = generate_samples(&meshes, &cfg)
        .unwrap()
        .iter()
        .map(|(s, _)| PreparedSample::from_sample(s))
        .collect();
    let batch: Vec<&PreparedSample<f32>> = data.iter().collect();
    let spirals = build_spirals(&template.adjacency(), &template.faces, 9).unwrap();
    let model = GcnModel::new(Architecture::new(64, template.vertex_count()), spirals, 0).unwrap();
    let trainer = Trainer::new(model, TrainConfig::default()).unwrap();
    let mut g = c.benchmark_group("batch_gradient_8x64px_500v");
    g.sample_size(10);
    for (name, workers) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| with_workers(workers, || black_box(trainer.batch_gradient(&batch).unwrap())))
        });
    }
    g.finish();
}

fn correspondence(c: &mut Criterion) {
    let template = generate_phantom(0, 3);
    let subject = generate_phantom(1, 4);
    let mut g = c.benchmark_group("correspondence_1608_to_6408");
    g.sample_size(10);
    for (name, workers) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                with_workers(workers, || {
                    black_box(establish_correspondence(&template, &subject, CorrespondenceOptions::default()).unwrap())
                })
            })
        });
    }
    g.finish();
}

criterion_group!(benches, sample_generation, slicing_oracle, batch_gradient, correspondence);
criterion_main!(benches);
