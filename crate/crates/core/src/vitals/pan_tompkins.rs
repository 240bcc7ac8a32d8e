//! QRS detection on single-lead ECG.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Detected QRS complexes.
#[derive(Debug, Clone, PartialEq)]
pub struct QrsSeries {
    /// Detection times in seconds, strictly increasing.
    pub times: Vec<f64>,
    pub fs: f64,
    /// Length of the source waveform in seconds.
    pub duration_s: f64,
}

impl QrsSeries {
    pub fn new(times: Vec<f64>, fs: f64, duration_s: f64) -> Result<Self> {
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::DegenerateSeries("QRS times must be strictly increasing".into()));
        }
        if times.first().is_some_and(|t| *t < 0.0) || times.last().is_some_and(|t| *t > duration_s) {
            return Err(Error::DegenerateSeries("QRS times outside the waveform".into()));
        }
        Ok(QrsSeries { times, fs, duration_s })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

const REFRACTORY_S: f64 = 0.2;
const INTEGRATION_S: f64 = 0.15;

#[derive(Clone, Copy)]
struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
}

impl Biquad {
    fn lowpass(fc: f64, fs: f64) -> Self {
        let w = 2.0 * PI * fc / fs;
        let alpha = w.sin() / (2.0 * std::f64::consts::FRAC_1_SQRT_2);
        let c = w.cos();
        let a0 = 1.0 + alpha;
        Biquad {
            b: [(1.0 - c) / 2.0 / a0, (1.0 - c) / a0, (1.0 - c) / 2.0 / a0],
            a: [-2.0 * c / a0, (1.0 - alpha) / a0],
        }
    }

    fn highpass(fc: f64, fs: f64) -> Self {
        let w = 2.0 * PI * fc / fs;
        let alpha = w.sin() / (2.0 * std::f64::consts::FRAC_1_SQRT_2);
        let c = w.cos();
        let a0 = 1.0 + alpha;
        Biquad {
            b: [(1.0 + c) / 2.0 / a0, -(1.0 + c) / a0, (1.0 + c) / 2.0 / a0],
            a: [-2.0 * c / a0, (1.0 - alpha) / a0],
        }
    }

    fn run(&self, x: &mut [f64]) {
        let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
        for v in x.iter_mut() {
            let y = self.b[0] * *v + self.b[1] * x1 + self.b[2] * x2 - self.a[0] * y1 - self.a[1] * y2;
            x2 = x1;
            x1 = *v;
            y2 = y1;
            y1 = y;
            *v = y;
        }
    }
}

/// Zero-phase 5-15 Hz band-pass (each biquad run forward then backward).
fn bandpass(x: &[f64], fs: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    for f in [Biquad::highpass(5.0, fs), Biquad::lowpass(15.0_f64.min(0.45 * fs), fs)] {
        f.run(&mut y);
        y.reverse();
        f.run(&mut y);
        y.reverse();
    }
    y
}

/// Pan-Tompkins QRS detector: band-pass, derivative, squaring, 150 ms moving
/// integration and adaptive signal/noise thresholds with a 200 ms refractory
/// period. Each detection is placed on the band-passed maximum of its complex.
pub fn pan_tompkins(ecg: &[f32], fs: f64) -> Result<QrsSeries> {
    let duration_s = ecg.len() as f64 / fs;
    if duration_s < 2.0 {
        return Err(Error::TooShort { got_s: duration_s, need_s: 2.0 });
    }
    if !(fs >= 100.0) {
        return Err(Error::Config(format!("ECG sample rate must be at least 100 Hz, got {fs}")));
    }
    let x: Vec<f64> = ecg.iter().map(|&v| v as f64).collect();
    let bp = bandpass(&x, fs);
    let n = bp.len();

    let mut sq = vec![0.0; n];
    for i in 4..n {
        let d = (2.0 * bp[i] + bp[i - 1] - bp[i - 3] - 2.0 * bp[i - 4]) * fs / 8.0;
        sq[i] = d * d;
    }
    let win = ((INTEGRATION_S * fs).round() as usize).max(1);
    let mut mwi = vec![0.0; n];
    let mut acc = 0.0;
    for i in 0..n {
        acc += sq[i];
        if i >= win {
            acc -= sq[i - win];
        }
        mwi[i] = acc.max(0.0) / win as f64;
    }

    let peak_max = mwi.iter().cloned().fold(0.0, f64::max);
    if peak_max <= 1e-12 {
        return QrsSeries::new(Vec::new(), fs, duration_s);
    }

    let learn = ((2.0 * fs) as usize).min(n);
    let mut spki = 0.25 * mwi[..learn].iter().cloned().fold(0.0, f64::max);
    let mut npki = 0.5 * mwi[..learn].iter().sum::<f64>() / learn as f64;
    let refractory = (REFRACTORY_S * fs).round() as usize;

    // Accepted MWI peaks (index, height).
    let mut accepted: Vec<(usize, f64)> = Vec::new();
    for i in 1..n.saturating_sub(1) {
        let pk = mwi[i];
        if !(pk > mwi[i - 1] && pk >= mwi[i + 1]) {
            continue;
        }
        let thr = npki + 0.25 * (spki - npki);
        if pk > thr && pk > 0.0 {
            match accepted.last_mut() {
                Some(last) if i - last.0 < refractory => {
                    if pk > last.1 {
                        *last = (i, pk);
                    }
                }
                _ => accepted.push((i, pk)),
            }
            spki = 0.125 * pk + 0.875 * spki;
        } else {
            npki = 0.125 * pk + 0.875 * npki;
        }
    }

    let mut times: Vec<f64> = Vec::with_capacity(accepted.len());
    for (i, _) in accepted {
        // The integrator lags the complex; search back over its window.
        let lo = i.saturating_sub(win + 4);
        let mut best = i;
        for j in lo..=i {
            if bp[j].abs() > bp[best].abs() {
                best = j;
            }
        }
        let t = best as f64 / fs;
        if times.last().is_none_or(|&p| t - p >= REFRACTORY_S - 0.5 / fs) {
            times.push(t);
        }
    }
    QrsSeries::new(times, fs, duration_s)
}
