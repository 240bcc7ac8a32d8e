//! Contact-sensor waveforms: a pulse-train ECG and sinusoidal RIP bands.

use rand_distr::{Distribution, Normal};

use crate::rng;

/// ECG samples plus the exact beat times they were built from.
#[derive(Debug, Clone)]
pub struct EcgSignal {
    pub fs: f64,
    pub samples: Vec<f32>,
    pub beat_times: Vec<f64>,
}

/// Linear interpolation of a 1 Hz series at time `t` (sample `i` sits at `t = i`).
fn rate_at(rates: &[f64], t: f64) -> f64 {
    let i = t.floor() as usize;
    if i + 1 >= rates.len() {
        return rates[rates.len() - 1];
    }
    let f = t - i as f64;
    rates[i] * (1.0 - f) + rates[i + 1] * f
}

/// Times at which the integrated phase `phase0 + int rate/60 dt` crosses an integer.
fn crossing_times(rates: &[f64], fs: f64, phase0: f64) -> Vec<f64> {
    let n = (rates.len() as f64 * fs) as usize;
    let mut phase = phase0;
    let mut times = Vec::new();
    for k in 0..n {
        let t = k as f64 / fs;
        let step = rate_at(rates, t) / 60.0 / fs;
        let next = phase + step;
        if next.floor() > phase.floor() {
            let frac = (next.floor() - phase) / step;
            times.push(t + frac / fs);
        }
        phase = next;
    }
    times
}

fn gauss(t: f64, mu: f64, sigma: f64) -> f64 {
    (-0.5 * ((t - mu) / sigma).powi(2)).exp()
}

/// P, Q, R, S and T waves relative to the R peak at 0.
fn beat_shape(t: f64) -> f64 {
    0.12 * gauss(t, -0.16, 0.025) - 0.15 * gauss(t, -0.025, 0.008) + gauss(t, 0.0, 0.010)
        - 0.25 * gauss(t, 0.025, 0.008)
        + 0.3 * gauss(t, 0.25, 0.04)
}

/// ECG whose beat rate follows `hr` (bpm at 1 Hz); white noise of `noise_std`.
pub fn gen_ecg(hr: &[f64], fs: f64, noise_std: f64, seed: u64) -> EcgSignal {
    if hr.is_empty() {
        return EcgSignal { fs, samples: Vec::new(), beat_times: Vec::new() };
    }
    let beat_times = crossing_times(hr, fs, 0.5);
    let n = (hr.len() as f64 * fs) as usize;
    let mut samples = vec![0.0f64; n];
    let half = (0.45 * fs).ceil() as i64;
    for &tb in &beat_times {
        let c = (tb * fs).round() as i64;
        for k in (c - half).max(0)..(c + half).min(n as i64) {
            samples[k as usize] += beat_shape(k as f64 / fs - tb);
        }
    }
    if noise_std > 0.0 {
        let mut r = rng::stream(seed, "synth/ecg/noise");
        let normal = Normal::new(0.0, noise_std).expect("valid std");
        for s in &mut samples {
            *s += normal.sample(&mut r);
        }
    }
    EcgSignal {
        fs,
        samples: samples.into_iter().map(|v| v as f32).collect(),
        beat_times,
    }
}

fn sinusoid(rates: &[f64], fs: f64, offset: &dyn Fn(f64) -> f64) -> Vec<f32> {
    let n = (rates.len() as f64 * fs) as usize;
    let mut phase = 0.0f64;
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let t = k as f64 / fs;
        out.push((2.0 * std::f64::consts::PI * phase).sin() as f32);
        phase += (rate_at(rates, t) + offset(t)) / 60.0 / fs;
    }
    out
}

/// Abdomen and thorax RIP bands at the rate `br`; the thorax runs
/// `disagreement` breaths/min faster.
pub fn gen_rip(br: &[f64], fs: f64, disagreement: f64) -> (Vec<f32>, Vec<f32>) {
    if br.is_empty() {
        return (Vec::new(), Vec::new());
    }
    (sinusoid(br, fs, &|_| 0.0), sinusoid(br, fs, &|_| disagreement))
}

/// As [`gen_rip`] with a per-second disagreement series.
pub fn gen_rip_varying(br: &[f64], fs: f64, disagreement: &[f64]) -> (Vec<f32>, Vec<f32>) {
    if br.is_empty() {
        return (Vec::new(), Vec::new());
    }
    let d = |t: f64| disagreement[(t as usize).min(disagreement.len() - 1)];
    (sinusoid(br, fs, &|_| 0.0), sinusoid(br, fs, &d))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Local maxima above 0.5: the R peaks.
    fn pulse_times(sig: &EcgSignal) -> Vec<f64> {
        let s = &sig.samples;
        (1..s.len() - 1)
            .filter(|&i| s[i] > 0.5 && s[i] > s[i - 1] && s[i] >= s[i + 1])
            .map(|i| i as f64 / sig.fs)
            .collect()
    }

    #[test]
    fn constant_rate_pulse_spacing() {
        for (bpm, spacing) in [(60.0, 1.0), (120.0, 0.5)] {
            let sig = gen_ecg(&[bpm; 9], 128.0, 0.0, 1);
            let p = pulse_times(&sig);
            assert!(p.len() >= 8);
            for w in p.windows(2) {
                assert!(((w[1] - w[0]) - spacing).abs() <= 1.0 / 128.0 + 1e-12, "{bpm}: {w:?}");
            }
        }
    }

    #[test]
    fn empty_hr_gives_empty_ecg() {
        assert!(gen_ecg(&[], 128.0, 0.0, 0).samples.is_empty());
    }

    #[test]
    fn rip_period() {
        let (abd, thor) = gen_rip(&[15.0; 60], 32.0, 0.0);
        assert_eq!(abd, thor);
        // sin(2*pi*t/4): zero-crossings upward every 4 s = 128 samples.
        let ups: Vec<usize> = (1..abd.len()).filter(|&i| abd[i - 1] < 0.0 && abd[i] >= 0.0).collect();
        assert!(ups.len() >= 10);
        for w in ups.windows(2) {
            assert!((w[1] - w[0]).abs_diff(128) <= 1, "{w:?}");
        }
        let mean = (ups[ups.len() - 1] - ups[0]) as f64 / (ups.len() - 1) as f64;
        assert!((mean - 128.0).abs() < 0.2);
    }

    #[test]
    fn deterministic_noise() {
        let a = gen_ecg(&[70.0; 20], 128.0, 0.05, 3);
        let b = gen_ecg(&[70.0; 20], 128.0, 0.05, 3);
        assert_eq!(a.samples, b.samples);
    }
}
