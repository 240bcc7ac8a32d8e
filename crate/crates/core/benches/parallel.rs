//! Data-parallel core against the sequential build.
//!
//! `cargo bench -p somnoflow` measures the rayon build, both on the global
//! pool and pinned to one thread; `cargo bench -p somnoflow
//! --no-default-features` measures the sequential fallback. Criterion keeps
//! the ids apart, so the reports line up side by side.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use somnoflow::flow::{activity_from_frames, ActivityParams};
use somnoflow::forest::{fit, FeatureMatrix, ForestConfig};
use somnoflow::synth::{gen_hypnogram, gen_video, SynthConfig};

fn modes() -> Vec<(&'static str, Option<usize>)> {
    if cfg!(feature = "parallel") {
        vec![("rayon", None), ("rayon-1", Some(1))]
    } else {
        vec![("sequential", None)]
    }
}

#[cfg(feature = "parallel")]
fn in_mode<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap().install(f),
        None => f(),
    }
}

#[cfg(not(feature = "parallel"))]
fn in_mode<R: Send>(_threads: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    f()
}

fn activity(c: &mut Criterion) {
    let cfg = SynthConfig { seed: 1, n_epochs: 1, ..SynthConfig::default() };
    let video = gen_video(&gen_hypnogram(&cfg), &cfg).unwrap();
    let geom = video.geometry().clone();
    let h = geom.homography().unwrap();
    let params = ActivityParams::default();
    let mut g = c.benchmark_group("activity_one_epoch");
    g.sample_size(10);
    for (name, threads) in modes() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| in_mode(threads, || activity_from_frames(&video, &geom, &h, &params).unwrap()))
        });
    }
    g.finish();
}

fn forest(c: &mut Criterion) {
    let mut r = ChaCha8Rng::seed_from_u64(3);
    let rows: Vec<Vec<f64>> = (0..2000).map(|_| (0..24).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
    let y: Vec<usize> = rows.iter().map(|x| usize::from(x[0] * x[1] > 0.0) + usize::from(x[2] > 0.5)).collect();
    let names = (0..24).map(|i| format!("f{i}")).collect();
    let x = FeatureMatrix::from_rows(names, &rows).unwrap();
    let cfg = ForestConfig { n_trees: 50, ..ForestConfig::default() };
    let mut g = c.benchmark_group("forest_fit_2000x24");
    g.sample_size(10);
    for (name, threads) in modes() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| in_mode(threads, || fit(&x, &y, 3, &cfg).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, activity, forest);
criterion_main!(benches);
