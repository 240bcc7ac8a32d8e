use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::VitalSeries;
use crate::EPOCH_SECONDS;

pub const SHORT_LEN: usize = 300;
pub const LONG_SPAN: usize = 3000;
pub const LONG_DECIMATION: usize = 10;

/// Network input for one epoch. Each window is channel-major: `len` heart-rate
/// samples followed by `len` breathing-rate samples.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowPair {
    pub short: Vec<f64>,
    pub long: Vec<f64>,
}

/// Per-channel mean and standard deviation used to z-score network inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub hr_mean: f64,
    pub hr_std: f64,
    pub br_mean: f64,
    pub br_std: f64,
}

impl NormStats {
    pub const IDENTITY: NormStats = NormStats { hr_mean: 0.0, hr_std: 1.0, br_mean: 0.0, br_std: 1.0 };

    /// Statistics over every sample of the given series; when `quality_only`,
    /// only samples with SQI 1 count.
    pub fn fit<'a>(pairs: impl IntoIterator<Item = (&'a VitalSeries, &'a VitalSeries)>, quality_only: bool) -> Result<Self> {
        let mut acc = [(0usize, 0.0f64, 0.0f64); 2];
        for (hr, br) in pairs {
            for (slot, s) in acc.iter_mut().zip([hr, br]) {
                for (&v, &q) in s.values().iter().zip(s.sqi()) {
                    if q || !quality_only {
                        slot.0 += 1;
                        slot.1 += v;
                        slot.2 += v * v;
                    }
                }
            }
        }
        let mut out = [(0.0, 0.0); 2];
        for (o, (n, s, ss)) in out.iter_mut().zip(acc) {
            if n < 2 {
                return Err(Error::InsufficientData("too few usable vital-sign samples for normalisation".into()));
            }
            let mean = s / n as f64;
            let std = (ss / n as f64 - mean * mean).max(0.0).sqrt();
            if !(std > 0.0) {
                return Err(Error::DegenerateSeries("vital-sign series has zero variance".into()));
            }
            *o = (mean, std);
        }
        Ok(NormStats { hr_mean: out[0].0, hr_std: out[0].1, br_mean: out[1].0, br_std: out[1].1 })
    }
}

/// Values with low-quality samples replaced by exactly 0.
pub fn sqi_zero_fill(v: &VitalSeries) -> Vec<f64> {
    v.values().iter().zip(v.sqi()).map(|(&x, &q)| if q { x } else { 0.0 }).collect()
}

/// Network-ready channels: z-scored, then zero-filled where SQI is 0 when
/// `zero_fill` is set.
pub fn prepare_channels(hr: &VitalSeries, br: &VitalSeries, stats: &NormStats, zero_fill: bool) -> (Vec<f64>, Vec<f64>) {
    let norm = |s: &VitalSeries, mean: f64, std: f64| -> Vec<f64> {
        s.values()
            .iter()
            .zip(s.sqi())
            .map(|(&x, &q)| if zero_fill && !q { 0.0 } else { (x - mean) / std })
            .collect()
    };
    (norm(hr, stats.hr_mean, stats.hr_std), norm(br, stats.br_mean, stats.br_std))
}

fn sample(x: &[f64], i: isize) -> f64 {
    if i >= 0 && (i as usize) < x.len() {
        x[i as usize]
    } else {
        0.0
    }
}

/// Short (300 s at 1 Hz) and long (3000 s block-averaged to 0.1 Hz) windows
/// centred on epoch `epoch_index`; samples outside the recording are 0.
pub fn make_windows(hr: &[f64], br: &[f64], epoch_index: usize) -> WindowPair {
    make_windows_sized(hr, br, epoch_index, SHORT_LEN, LONG_DECIMATION)
}

/// As [`make_windows`] with `len` samples per window; the long window spans
/// `len * decimation` seconds.
pub fn make_windows_sized(hr: &[f64], br: &[f64], epoch_index: usize, len: usize, decimation: usize) -> WindowPair {
    let centre = (epoch_index * EPOCH_SECONDS + EPOCH_SECONDS / 2) as isize;
    let mut short = Vec::with_capacity(2 * len);
    let mut long = Vec::with_capacity(2 * len);
    for ch in [hr, br] {
        let s0 = centre - (len / 2) as isize;
        short.extend((0..len).map(|i| sample(ch, s0 + i as isize)));
        let l0 = centre - (len * decimation / 2) as isize;
        long.extend((0..len).map(|b| {
            let start = l0 + (b * decimation) as isize;
            (0..decimation).map(|j| sample(ch, start + j as isize)).sum::<f64>() / decimation as f64
        }));
    }
    WindowPair { short, long }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::VitalKind;

    #[test]
    fn zero_fill_examples() {
        let v = VitalSeries::new(VitalKind::HeartRate, vec![60.0, 62.0, 64.0], vec![true, false, true]).unwrap();
        assert_eq!(sqi_zero_fill(&v), vec![60.0, 0.0, 64.0]);
        let all = VitalSeries::new(VitalKind::HeartRate, vec![60.0, 62.0], vec![true, true]).unwrap();
        assert_eq!(sqi_zero_fill(&all), vec![60.0, 62.0]);
        let none = VitalSeries::new(VitalKind::HeartRate, vec![60.0, 62.0], vec![false, false]).unwrap();
        assert_eq!(sqi_zero_fill(&none), vec![0.0, 0.0]);
    }

    #[test]
    fn masked_samples_are_zero_after_normalisation() {
        let hr = VitalSeries::new(VitalKind::HeartRate, vec![60.0, 500.0, 64.0], vec![true, false, true]).unwrap();
        let br = VitalSeries::new(VitalKind::BreathingRate, vec![15.0; 3], vec![true; 3]).unwrap();
        let stats = NormStats { hr_mean: 62.0, hr_std: 2.0, br_mean: 10.0, br_std: 5.0 };
        let (h, b) = prepare_channels(&hr, &br, &stats, true);
        assert_eq!(h, vec![-1.0, 0.0, 1.0]);
        assert_eq!(b, vec![1.0; 3]);
        let (h, _) = prepare_channels(&hr, &br, &stats, false);
        assert_eq!(h[1], 219.0);
    }

    #[test]
    fn ramp_centre() {
        let ramp: Vec<f64> = (0..7200).map(|t| t as f64).collect();
        let w = make_windows(&ramp, &ramp, 100);
        assert_eq!(w.short[150], 3015.0);
        assert_eq!(w.short.len(), 600);
        assert_eq!(w.long.len(), 600);
        // Block 150 averages seconds 3015..3025.
        assert_eq!(w.long[150], 3019.5);
    }

    #[test]
    fn first_epoch_is_padded() {
        let x = vec![1.0; 7200];
        let w = make_windows(&x, &x, 0);
        assert_eq!(w.short[0], 0.0);
        assert_eq!(w.short[299], 1.0);
        assert_eq!(w.long[0], 0.0);
        assert_eq!(w.long[299], 1.0);
    }

    #[test]
    fn constant_in_middle() {
        let x = vec![2.0; 7200];
        let w = make_windows(&x, &x, 120);
        assert!(w.short.iter().chain(&w.long).all(|v| *v == 2.0));
    }

    #[test]
    fn norm_stats_quality_only() {
        let hr = VitalSeries::new(VitalKind::HeartRate, vec![1.0, 3.0, 100.0], vec![true, true, false]).unwrap();
        let br = VitalSeries::new(VitalKind::BreathingRate, vec![2.0, 4.0, 6.0], vec![true; 3]).unwrap();
        let s = NormStats::fit([(&hr, &br)], true).unwrap();
        assert_eq!((s.hr_mean, s.hr_std), (2.0, 1.0));
        let s = NormStats::fit([(&hr, &br)], false).unwrap();
        assert!(s.hr_mean > 30.0);
    }
}
