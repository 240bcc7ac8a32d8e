//! Oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use somnoflow::config::PipelineConfig;
use somnoflow::deepnet::NetConfig;
use somnoflow::flow::{FlowField, GrayImage};

/// Smooth random texture: a sum of plane waves with wavelengths 6-24 px,
/// spanning roughly 20..235.
pub fn texture(seed: u64) -> impl Fn(f64, f64) -> f64 {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let waves: Vec<(f64, f64, f64)> = (0..12)
        .map(|_| {
            let angle = r.random_range(0.0..std::f64::consts::PI);
            let k = std::f64::consts::TAU / r.random_range(6.0..24.0);
            (k * angle.cos(), k * angle.sin(), r.random_range(0.0..std::f64::consts::TAU))
        })
        .collect();
    move |x, y| 127.5 + 9.0 * waves.iter().map(|(kx, ky, p)| (kx * x + ky * y + p).sin()).sum::<f64>()
}

/// `(prev, next)` where `next` is `prev` moved by `d` pixels, rendered from the
/// continuous texture so the translation is exact everywhere.
pub fn translated_pair(seed: u64, w: usize, h: usize, d: [f64; 2]) -> (GrayImage, GrayImage) {
    let f = texture(seed);
    let prev = GrayImage::from_fn(w, h, |x, y| f(x as f64, y as f64) as f32);
    let next = GrayImage::from_fn(w, h, |x, y| f(x as f64 - d[0], y as f64 - d[1]) as f32);
    (prev, next)
}

pub fn mean_epe(flow: &FlowField, d: [f64; 2]) -> f64 {
    let n = flow.dx.len() as f64;
    flow.dx
        .iter()
        .zip(&flow.dy)
        .map(|(&u, &v)| ((u as f64 - d[0]).powi(2) + (v as f64 - d[1]).powi(2)).sqrt())
        .sum::<f64>()
        / n
}

pub fn max_magnitude(flow: &FlowField) -> f64 {
    flow.dx.iter().zip(&flow.dy).map(|(&u, &v)| ((u * u + v * v) as f64).sqrt()).fold(0.0, f64::max)
}

/// Cohen's kappa and accuracy by expanding the matrix into individual
/// (reference, prediction) pairs and counting.
pub fn kappa_brute(counts: &[Vec<u64>]) -> (f64, f64) {
    let k = counts.len();
    let mut pairs = Vec::new();
    for (i, row) in counts.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            for _ in 0..c {
                pairs.push((i, j));
            }
        }
    }
    let n = pairs.len() as f64;
    let agree = pairs.iter().filter(|(a, b)| a == b).count() as f64 / n;
    let mut chance = 0.0;
    for c in 0..k {
        let p_ref = pairs.iter().filter(|(a, _)| *a == c).count() as f64 / n;
        let p_pred = pairs.iter().filter(|(_, b)| *b == c).count() as f64 / n;
        chance += p_ref * p_pred;
    }
    ((agree - chance) / (1.0 - chance), agree)
}

/// ECG-like waveform: a narrow R spike with Q and S dips every `60 / bpm` s.
pub fn ecg_train(bpm: f64, fs: f64, secs: f64, phase_s: f64) -> Vec<f32> {
    let period = 60.0 / bpm;
    let n = (secs * fs) as usize;
    (0..n)
        .map(|i| {
            let t = i as f64 / fs;
            let beat = ((t - phase_s) / period).round();
            let dt = t - phase_s - beat * period;
            let g = |mu: f64, s: f64| (-(dt - mu).powi(2) / (2.0 * s * s)).exp();
            (g(0.0, 0.010) - 0.15 * g(-0.030, 0.008) - 0.2 * g(0.030, 0.008)) as f32
        })
        .collect()
}

pub fn rip_sine(brpm: f64, fs: f64, secs: f64, phase: f64) -> Vec<f32> {
    let f = brpm / 60.0;
    (0..(secs * fs) as usize)
        .map(|i| (std::f64::consts::TAU * f * i as f64 / fs + phase).sin() as f32)
        .collect()
}

/// Minutes-scale study config for wiring and determinism checks.
pub fn small_config(n_recordings: usize, n_epochs: usize, k: usize) -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.synth.n_recordings = n_recordings;
    cfg.synth.recording.n_epochs = n_epochs;
    cfg.deepnet.corpus.n_recordings = 4;
    cfg.deepnet.corpus.n_epochs = n_epochs;
    cfg.deepnet.train.net = NetConfig {
        stem_channels: 4,
        stage_channels: vec![8, 16],
        flat_dim: 128,
        hidden_dim: 16,
        feature_dim: 8,
        ..NetConfig::compact()
    };
    cfg.deepnet.train.max_epochs = 2;
    cfg.deepnet.train.samples_per_epoch = 128;
    cfg.forest.n_trees = 20;
    cfg.eval.k = k;
    cfg
}
