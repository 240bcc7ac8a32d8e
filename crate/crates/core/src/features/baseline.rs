use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::VitalSeries;
use crate::EPOCH_SECONDS;

pub const N_BASELINE: usize = 6;

pub const BASELINE_FEATURE_NAMES: [&str; N_BASELINE] =
    ["hr_mean_3m", "hr_std_3m", "hr_std_10m", "br_mean_3m", "br_std_3m", "br_std_10m"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineParams {
    pub percentile: f64,
    pub dog_sigma_narrow_s: f64,
    pub dog_sigma_wide_s: f64,
    pub mean_window_s: usize,
    pub std_window_short_s: usize,
    pub std_window_long_s: usize,
}

impl Default for BaselineParams {
    fn default() -> Self {
        BaselineParams {
            percentile: 90.0,
            dog_sigma_narrow_s: 10.0,
            dog_sigma_wide_s: 100.0,
            mean_window_s: 180,
            std_window_short_s: 180,
            std_window_long_s: 600,
        }
    }
}

/// Vital-sign baseline features, named by [`BASELINE_FEATURE_NAMES`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineFeatureVector(pub [f64; N_BASELINE]);

impl BaselineFeatureVector {
    pub fn get(&self, name: &str) -> Option<f64> {
        BASELINE_FEATURE_NAMES.iter().position(|n| *n == name).map(|i| self.0[i])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Percentile with linear interpolation between order statistics.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q / 100.0 * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

fn gaussian_kernel(sigma: f64, half: usize) -> Vec<f64> {
    let k: Vec<f64> = (0..=2 * half)
        .map(|i| {
            let d = i as f64 - half as f64;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Zero-phase difference of Gaussians (narrow minus wide), both kernels
/// normalised to unit area on the wide kernel's support; edges replicate.
fn dog_filter(x: &[f64], narrow: f64, wide: f64) -> Vec<f64> {
    let half = (3.0 * wide).ceil() as usize;
    let a = gaussian_kernel(narrow, half);
    let b = gaussian_kernel(wide, half);
    let k: Vec<f64> = a.iter().zip(&b).map(|(p, q)| p - q).collect();
    let n = x.len();
    (0..n)
        .map(|i| {
            let mut s = 0.0;
            for (j, kv) in k.iter().enumerate() {
                let idx = (i as isize + j as isize - half as isize).clamp(0, n as isize - 1) as usize;
                s += kv * x[idx];
            }
            s
        })
        .collect()
}

fn window_bounds(centre: f64, width: usize, n: usize) -> (usize, usize) {
    let half = width as f64 / 2.0;
    let lo = (centre - half).ceil().max(0.0) as usize;
    let hi = ((centre + half).ceil().max(0.0) as usize).min(n);
    (lo.min(hi), hi)
}

fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        0.0
    } else {
        x.iter().sum::<f64>() / x.len() as f64
    }
}

fn pop_std(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let m = mean(x);
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64).sqrt()
}

/// Normalised, band-passed version of one vital series.
fn prepare(s: &VitalSeries, name: &str, p: &BaselineParams) -> Result<Vec<f64>> {
    let q = percentile(s.values(), p.percentile);
    if !(q > 0.0) {
        return Err(Error::DegenerateSeries(format!(
            "{name} {}th percentile is {q}",
            p.percentile
        )));
    }
    let x: Vec<f64> = s.values().iter().map(|v| v / q).collect();
    Ok(dog_filter(&x, p.dog_sigma_narrow_s, p.dog_sigma_wide_s))
}

fn window_stats(f: &[f64], centre: f64, p: &BaselineParams) -> [f64; 3] {
    let n = f.len();
    let (a, b) = window_bounds(centre, p.mean_window_s, n);
    let (c, d) = window_bounds(centre, p.std_window_short_s, n);
    let (e, g) = window_bounds(centre, p.std_window_long_s, n);
    [mean(&f[a..b]), pop_std(&f[c..d]), pop_std(&f[e..g])]
}

/// Baseline features for every epoch of a recording; the per-recording
/// filtering is done once.
pub fn baseline_features_all(
    hr: &VitalSeries,
    br: &VitalSeries,
    n_epochs: usize,
    p: &BaselineParams,
) -> Result<Vec<BaselineFeatureVector>> {
    let fh = prepare(hr, "heart rate", p)?;
    let fb = prepare(br, "breathing rate", p)?;
    Ok((0..n_epochs)
        .map(|e| {
            let c = (e * EPOCH_SECONDS) as f64 + EPOCH_SECONDS as f64 / 2.0;
            let h = window_stats(&fh, c, p);
            let b = window_stats(&fb, c, p);
            BaselineFeatureVector([h[0], h[1], h[2], b[0], b[1], b[2]])
        })
        .collect())
}

/// Baseline features for a single epoch.
pub fn baseline_features(hr: &VitalSeries, br: &VitalSeries, epoch_index: usize) -> Result<BaselineFeatureVector> {
    let n = hr.len().min(br.len()).div_ceil(EPOCH_SECONDS);
    if epoch_index >= n {
        return Err(Error::IndexOutOfRange { index: epoch_index, len: n });
    }
    let all = baseline_features_all(hr, br, epoch_index + 1, &BaselineParams::default())?;
    Ok(all[epoch_index])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::VitalKind;

    fn vs(kind: VitalKind, v: Vec<f64>) -> VitalSeries {
        let n = v.len();
        VitalSeries::new(kind, v, vec![true; n]).unwrap()
    }

    #[test]
    fn percentile_interpolates() {
        assert_eq!(percentile(&[1.0, 2.0, 3.0, 4.0, 5.0], 90.0), 4.6);
        assert_eq!(percentile(&[7.0], 90.0), 7.0);
    }

    #[test]
    fn constants_give_zero() {
        let hr = vs(VitalKind::HeartRate, vec![60.0; 3600]);
        let br = vs(VitalKind::BreathingRate, vec![15.0; 3600]);
        for e in [0, 50, 119] {
            let f = baseline_features(&hr, &br, e).unwrap();
            assert!(f.0.iter().all(|v| v.abs() < 1e-12), "{f:?}");
        }
    }

    #[test]
    fn zero_percentile_is_degenerate() {
        let hr = vs(VitalKind::HeartRate, vec![0.0; 600]);
        let br = vs(VitalKind::BreathingRate, vec![15.0; 600]);
        assert!(matches!(baseline_features(&hr, &br, 0), Err(Error::DegenerateSeries(_))));
    }

    #[test]
    fn fast_oscillation_has_larger_short_std() {
        let n = 7200;
        let wave = |period: f64| -> Vec<f64> {
            (0..n)
                .map(|t| 60.0 + 5.0 * (2.0 * std::f64::consts::PI * t as f64 / period).sin())
                .collect()
        };
        let br = vs(VitalKind::BreathingRate, vec![15.0; n]);
        let slow = baseline_features(&vs(VitalKind::HeartRate, wave(1200.0)), &br, 120).unwrap();
        let fast = baseline_features(&vs(VitalKind::HeartRate, wave(60.0)), &br, 120).unwrap();
        assert!(fast.get("hr_std_3m").unwrap() > slow.get("hr_std_3m").unwrap());
    }

    #[test]
    fn window_truncated_at_edges() {
        assert_eq!(window_bounds(15.0, 180, 1000), (0, 105));
        assert_eq!(window_bounds(500.0, 180, 1000), (410, 590));
        assert_eq!(window_bounds(985.0, 180, 1000), (895, 1000));
    }
}
