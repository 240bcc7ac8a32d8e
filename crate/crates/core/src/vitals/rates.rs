//! 1 Hz heart-rate and breathing-rate estimation and agreement flags.

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::series::{VitalKind, VitalSeries};

use super::pan_tompkins::QrsSeries;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HrParams {
    pub window_s: f64,
    /// Sampling rate of the binary detection indicator.
    pub indicator_hz: f64,
    pub fft_len: usize,
    pub min_bpm: f64,
    pub max_bpm: f64,
    pub min_detections: usize,
}

impl Default for HrParams {
    fn default() -> Self {
        HrParams {
            window_s: 9.0,
            indicator_hz: 4.0,
            fft_len: 512,
            min_bpm: 40.0,
            max_bpm: 130.0,
            min_detections: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BrParams {
    pub window_s: f64,
    /// Minimum peak prominence as a fraction of the window's peak-to-peak range.
    pub prominence_frac: f64,
    /// Fastest plausible rate; sets the minimum peak separation.
    pub max_brpm: f64,
}

impl Default for BrParams {
    fn default() -> Self {
        BrParams {
            window_s: 30.0,
            prominence_frac: 0.2,
            max_brpm: 39.0,
        }
    }
}

/// Agreement rule between two estimates of the same rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SqiRule {
    pub threshold: f64,
}

impl Default for SqiRule {
    fn default() -> Self {
        SqiRule { threshold: 3.0 }
    }
}

impl SqiRule {
    pub fn new(threshold: f64) -> Result<Self> {
        if !(threshold > 0.0) {
            return Err(Error::Config(format!("SQI threshold must be positive, got {threshold}")));
        }
        Ok(SqiRule { threshold })
    }

    pub fn agrees(&self, a: f64, b: f64) -> bool {
        (a - b).abs() <= self.threshold
    }
}

/// Heart-rate quality: 1 iff the ECG and PPG rates differ by at most 3 bpm.
pub fn sqi_hr(hr_ecg: f64, hr_ppg: f64) -> bool {
    SqiRule::default().agrees(hr_ecg, hr_ppg)
}

/// Breathing-rate quality: 1 iff abdomen and thorax rates differ by at most 3 brpm.
pub fn sqi_br(br_abd: f64, br_thor: f64) -> bool {
    SqiRule::default().agrees(br_abd, br_thor)
}

/// Start of the window for sample `k`: centred on `t = k`, shifted inward so
/// it stays within `[0, duration]`.
fn window_start(k: usize, window: f64, duration: f64) -> f64 {
    (k as f64 - window / 2.0).clamp(0.0, (duration - window).max(0.0))
}

pub fn hr_from_qrs(qrs: &QrsSeries, duration_s: f64) -> Result<VitalSeries> {
    hr_from_qrs_with(qrs, duration_s, &HrParams::default())
}

/// 1 Hz heart rate from the dominant frequency of the detection indicator
/// over a rolling window. Windows with too few detections yield value 0 and
/// quality 0.
pub fn hr_from_qrs_with(qrs: &QrsSeries, duration_s: f64, p: &HrParams) -> Result<VitalSeries> {
    if duration_s < p.window_s {
        return Err(Error::TooShort { got_s: duration_s, need_s: p.window_s });
    }
    let n_out = duration_s.floor() as usize;
    let n_ind = (p.window_s * p.indicator_hz).round() as usize;
    let fft_len = p.fft_len.max(n_ind.next_power_of_two());
    let fft = FftPlanner::<f64>::new().plan_fft_forward(fft_len);
    let bin_hz = p.indicator_hz / fft_len as f64;
    let nyquist_bin = fft_len / 2;
    let lo_bin = (p.min_bpm / 60.0 / bin_hz).ceil() as usize;
    let hi_bin = ((p.max_bpm / 60.0 / bin_hz).floor() as usize).min(nyquist_bin);

    let est = par::map_range(n_out, |k| {
        let start = window_start(k, p.window_s, duration_s);
        let end = start + p.window_s;
        let lo = qrs.times.partition_point(|&t| t < start);
        let hi = qrs.times.partition_point(|&t| t < end);
        if hi - lo < p.min_detections {
            return (0.0, false);
        }
        // Each detection's unit mass is split linearly between the two
        // nearest indicator samples; rounding to the grid instead jitters
        // beats by up to half a sample and lets harmonics win.
        let mut ind = vec![0.0f64; n_ind];
        for &t in &qrs.times[lo..hi] {
            let x = (t - start) * p.indicator_hz;
            let i = x.floor() as usize;
            let frac = x - i as f64;
            ind[i.min(n_ind - 1)] += 1.0 - frac;
            if i + 1 < n_ind {
                ind[i + 1] += frac;
            }
        }
        let mean = ind.iter().sum::<f64>() / n_ind as f64;
        let mut buf: Vec<Complex<f64>> = (0..fft_len)
            .map(|i| Complex::new(if i < n_ind { ind[i] - mean } else { 0.0 }, 0.0))
            .collect();
        fft.process(&mut buf);
        let mut best = lo_bin;
        for b in lo_bin..=hi_bin {
            if buf[b].norm_sqr() > buf[best].norm_sqr() * (1.0 + 1e-12) {
                best = b;
            }
        }
        (best as f64 * bin_hz * 60.0, true)
    });
    let (values, sqi) = est.into_iter().unzip();
    VitalSeries::new(VitalKind::HeartRate, values, sqi)
}

/// Peaks of `x`: local maxima with at least `min_prom` prominence, at least
/// `min_sep` samples apart (taller peaks win), in index order.
fn find_peaks(x: &[f64], min_prom: f64, min_sep: usize) -> Vec<usize> {
    let n = x.len();
    let mut cand = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if x[i] > x[i - 1] {
            // Plateaus count once, at their first sample.
            let mut j = i;
            while j + 1 < n && x[j + 1] == x[i] {
                j += 1;
            }
            if j + 1 < n && x[j + 1] < x[i] {
                cand.push(i);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    let prominent: Vec<usize> = cand
        .into_iter()
        .filter(|&p| {
            let h = x[p];
            let mut left_min = h;
            let mut k = p;
            while k > 0 {
                k -= 1;
                if x[k] > h {
                    break;
                }
                left_min = left_min.min(x[k]);
            }
            let mut right_min = h;
            let mut k = p;
            while k + 1 < n {
                k += 1;
                if x[k] > h {
                    break;
                }
                right_min = right_min.min(x[k]);
            }
            h - left_min.max(right_min) >= min_prom
        })
        .collect();
    let mut by_height = prominent.clone();
    by_height.sort_by(|&a, &b| x[b].total_cmp(&x[a]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for p in by_height {
        if kept.iter().all(|&q| p.abs_diff(q) >= min_sep) {
            kept.push(p);
        }
    }
    kept.sort_unstable();
    kept
}

/// Sub-sample peak position from a parabola through the peak and its neighbours.
fn refine(x: &[f64], p: usize) -> f64 {
    if p == 0 || p + 1 >= x.len() {
        return p as f64;
    }
    let (a, b, c) = (x[p - 1], x[p], x[p + 1]);
    let den = a - 2.0 * b + c;
    if den.abs() < 1e-15 {
        p as f64
    } else {
        p as f64 + (0.5 * (a - c) / den).clamp(-0.5, 0.5)
    }
}

pub fn br_from_rip(rip: &[f32], fs: f64) -> Result<VitalSeries> {
    br_from_rip_with(rip, fs, &BrParams::default())
}

/// 1 Hz breathing rate from the mean interval between peaks in a rolling
/// window. Fewer than two peaks yields value 0 and quality 0.
pub fn br_from_rip_with(rip: &[f32], fs: f64, p: &BrParams) -> Result<VitalSeries> {
    if !(fs >= 8.0) {
        return Err(Error::Config(format!("RIP sample rate must be at least 8 Hz, got {fs}")));
    }
    let duration_s = rip.len() as f64 / fs;
    if duration_s < p.window_s {
        return Err(Error::TooShort { got_s: duration_s, need_s: p.window_s });
    }
    let x: Vec<f64> = rip.iter().map(|&v| v as f64).collect();
    let n_out = duration_s.floor() as usize;
    let win = (p.window_s * fs).round() as usize;
    let min_sep = ((60.0 / p.max_brpm) * fs).floor() as usize;

    let est = par::map_range(n_out, |k| {
        let s = ((window_start(k, p.window_s, duration_s) * fs).round() as usize).min(x.len() - win);
        let w = &x[s..s + win];
        let (lo, hi) = w.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let p2p = hi - lo;
        if !(p2p > 0.0) {
            return (0.0, false);
        }
        let peaks = find_peaks(w, p.prominence_frac * p2p, min_sep.max(1));
        if peaks.len() < 2 {
            return (0.0, false);
        }
        let first = refine(w, peaks[0]);
        let last = refine(w, peaks[peaks.len() - 1]);
        let mean_interval = (last - first) / (peaks.len() - 1) as f64 / fs;
        (60.0 / mean_interval, true)
    });
    let (values, sqi) = est.into_iter().unzip();
    VitalSeries::new(VitalKind::BreathingRate, values, sqi)
}

/// Heart rate from ECG with its agreement flag against the PPG rate.
pub fn hr_with_sqi(hr_ecg: &VitalSeries, hr_ppg: &[f64], rule: SqiRule) -> Result<VitalSeries> {
    if hr_ppg.len() != hr_ecg.len() {
        return Err(Error::LengthMismatch(format!(
            "ECG heart rate has {} samples, PPG {}",
            hr_ecg.len(),
            hr_ppg.len()
        )));
    }
    let sqi = hr_ecg
        .values()
        .iter()
        .zip(hr_ecg.sqi())
        .zip(hr_ppg)
        .map(|((&v, &ok), &ppg)| ok && rule.agrees(v, ppg))
        .collect();
    VitalSeries::new(VitalKind::HeartRate, hr_ecg.values().to_vec(), sqi)
}

/// Thorax breathing rate with its agreement flag against the abdomen rate.
pub fn br_with_sqi(abd: &VitalSeries, thor: &VitalSeries, rule: SqiRule) -> Result<VitalSeries> {
    if abd.len() != thor.len() {
        return Err(Error::LengthMismatch(format!(
            "abdomen rate has {} samples, thorax {}",
            abd.len(),
            thor.len()
        )));
    }
    let sqi = (0..abd.len())
        .map(|i| abd.sqi()[i] && thor.sqi()[i] && rule.agrees(abd.values()[i], thor.values()[i]))
        .collect();
    VitalSeries::new(VitalKind::BreathingRate, thor.values().to_vec(), sqi)
}
