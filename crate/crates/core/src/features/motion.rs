use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::ActivitySeries;
use crate::EPOCH_SECONDS;

pub const N_MOTION: usize = 20;

pub const MOTION_FEATURE_NAMES: [&str; N_MOTION] = [
    "upper_g30_m30",
    "upper_g30_0",
    "upper_g30_p30",
    "upper_g180_m180",
    "upper_g180_0",
    "upper_g180_p180",
    "upper_g1200_0",
    "upper_cnt_0.1",
    "upper_cnt_1.0",
    "upper_cnt_sustained_1.0_3s",
    "lower_g30_m30",
    "lower_g30_0",
    "lower_g30_p30",
    "lower_g180_m180",
    "lower_g180_0",
    "lower_g180_p180",
    "lower_g1200_0",
    "lower_cnt_0.1",
    "lower_cnt_1.0",
    "lower_cnt_sustained_1.0_3s",
];

/// Gaussian sums (window, shift) in the order they appear per signal.
const INTEGRALS: [(f64, f64); 7] = [
    (30.0, -30.0),
    (30.0, 0.0),
    (30.0, 30.0),
    (180.0, -180.0),
    (180.0, 0.0),
    (180.0, 180.0),
    (1200.0, 0.0),
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotionParams {
    /// Kernel sigma as a fraction of the window length.
    pub sigma_frac: f64,
    /// Kernel support in sigmas on each side.
    pub truncate_sigmas: f64,
    pub counter_cap_s: f64,
    pub low_threshold: f64,
    pub high_threshold: f64,
    /// Minimum duration of a sustained exceedance of the high threshold.
    pub sustained_s: f64,
}

impl Default for MotionParams {
    fn default() -> Self {
        MotionParams {
            sigma_frac: 0.5,
            truncate_sigmas: 3.0,
            counter_cap_s: 1800.0,
            low_threshold: 0.1,
            high_threshold: 1.0,
            sustained_s: 3.0,
        }
    }
}

/// The 20 per-epoch motion features, named by [`MOTION_FEATURE_NAMES`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionFeatureVector(pub [f64; N_MOTION]);

impl MotionFeatureVector {
    pub fn get(&self, name: &str) -> Option<f64> {
        MOTION_FEATURE_NAMES.iter().position(|n| *n == name).map(|i| self.0[i])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

fn epoch_centre(epoch_index: usize) -> f64 {
    (epoch_index * EPOCH_SECONDS) as f64 + EPOCH_SECONDS as f64 / 2.0
}

fn gaussian_sum(a: &[f64], rate: f64, centre: f64, sigma: f64, truncate: f64) -> f64 {
    let lo = ((centre - truncate * sigma) * rate).ceil().max(0.0) as usize;
    let hi = ((centre + truncate * sigma) * rate).floor();
    if hi < 0.0 {
        return 0.0;
    }
    let hi = (hi as usize).min(a.len().saturating_sub(1));
    let mut s = 0.0;
    for (i, &v) in a.iter().enumerate().take(hi + 1).skip(lo) {
        let d = i as f64 / rate - centre;
        s += v * (-d * d / (2.0 * sigma * sigma)).exp();
    }
    s
}

/// Seconds from the last sample above `thr` at or before `centre`, capped.
fn since_above(a: &[f64], rate: f64, centre: f64, thr: f64, cap: f64) -> f64 {
    let last = (centre * rate).floor();
    if last < 0.0 {
        return cap;
    }
    let last = (last as usize).min(a.len().saturating_sub(1));
    let earliest = ((centre - cap) * rate).ceil().max(0.0) as usize;
    (earliest..=last)
        .rev()
        .find(|&i| a[i] > thr)
        .map_or(cap, |i| (centre - i as f64 / rate).min(cap))
}

/// Seconds from the end of the last run of at least `min_len` samples above
/// `thr`, considering only samples at or before `centre`.
fn since_sustained(a: &[f64], rate: f64, centre: f64, thr: f64, min_len: usize, cap: f64) -> f64 {
    let last = (centre * rate).floor();
    if last < 0.0 || a.is_empty() {
        return cap;
    }
    let last = (last as usize).min(a.len() - 1);
    let earliest = ((centre - cap) * rate).ceil().max(0.0) as usize;
    let mut i = last as isize;
    while i >= 0 {
        if a[i as usize] > thr {
            let end = i as usize;
            let mut start = end;
            while start > 0 && a[start - 1] > thr {
                start -= 1;
            }
            if end + 1 - start >= min_len {
                if end < earliest {
                    return cap;
                }
                return (centre - end as f64 / rate).min(cap);
            }
            i = start as isize - 1;
        } else {
            if (i as usize) < earliest {
                return cap;
            }
            i -= 1;
        }
    }
    cap
}

fn signal_features(a: &[f64], rate: f64, centre: f64, p: &MotionParams, out: &mut [f64]) {
    for (k, &(w, shift)) in INTEGRALS.iter().enumerate() {
        out[k] = gaussian_sum(a, rate, centre + shift, p.sigma_frac * w, p.truncate_sigmas);
    }
    out[7] = since_above(a, rate, centre, p.low_threshold, p.counter_cap_s);
    out[8] = since_above(a, rate, centre, p.high_threshold, p.counter_cap_s);
    let min_len = (p.sustained_s * rate).round() as usize;
    out[9] = since_sustained(a, rate, centre, p.high_threshold, min_len.max(1), p.counter_cap_s);
}

/// Motion features around an arbitrary centre time (seconds).
pub fn motion_features_at(a: &ActivitySeries, centre_s: f64, p: &MotionParams) -> MotionFeatureVector {
    let mut v = [0.0; N_MOTION];
    signal_features(&a.upper, ActivitySeries::RATE_HZ, centre_s, p, &mut v[..10]);
    signal_features(&a.lower, ActivitySeries::RATE_HZ, centre_s, p, &mut v[10..]);
    MotionFeatureVector(v)
}

/// Number of whole or partial epochs covered by an activity series.
pub fn n_epochs_covered(a: &ActivitySeries) -> usize {
    let per_epoch = EPOCH_SECONDS * ActivitySeries::RATE_HZ as usize;
    a.len().div_ceil(per_epoch)
}

/// Motion features for epoch `epoch_index`, centred on the epoch midpoint.
pub fn motion_features(a: &ActivitySeries, epoch_index: usize) -> Result<MotionFeatureVector> {
    motion_features_with(a, epoch_index, &MotionParams::default())
}

pub fn motion_features_with(a: &ActivitySeries, epoch_index: usize, p: &MotionParams) -> Result<MotionFeatureVector> {
    let len = n_epochs_covered(a);
    if epoch_index >= len {
        return Err(Error::IndexOutOfRange { index: epoch_index, len });
    }
    Ok(motion_features_at(a, epoch_centre(epoch_index), p))
}
