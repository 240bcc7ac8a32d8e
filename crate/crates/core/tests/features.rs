use proptest::prelude::*;

use somnoflow::features::{
    baseline_features_all, motion_features, BaselineParams, BASELINE_FEATURE_NAMES, MOTION_FEATURE_NAMES, N_BASELINE,
};
use somnoflow::flow::ActivitySeries;
use somnoflow::{VitalKind, VitalSeries};

fn vitals(hr: Vec<f64>, br: Vec<f64>) -> (VitalSeries, VitalSeries) {
    let n = hr.len();
    (
        VitalSeries::new(VitalKind::HeartRate, hr, vec![true; n]).unwrap(),
        VitalSeries::new(VitalKind::BreathingRate, br, vec![true; n]).unwrap(),
    )
}

#[test]
fn names_are_unique() {
    let mut all: Vec<&str> = MOTION_FEATURE_NAMES.iter().chain(&BASELINE_FEATURE_NAMES).copied().collect();
    all.sort();
    all.dedup();
    assert_eq!(all.len(), 20 + N_BASELINE);
}

#[test]
fn impulse_in_lower_region_mirrors_upper() {
    let mut lower = vec![0.0; 4 * 600];
    lower[(4 * 30 + 15) * 4] = 1.0;
    let a = ActivitySeries::new(vec![0.0; 4 * 600], lower).unwrap();
    let f = motion_features(&a, 4).unwrap();
    assert!((f.get("lower_g30_0").unwrap() - 1.0).abs() < 1e-12);
    assert!((f.get("lower_g30_p30").unwrap() - (-2.0f64).exp()).abs() < 1e-9);
    assert_eq!(f.get("upper_g30_0"), Some(0.0));
}

#[test]
fn baseline_rows_cover_every_epoch() {
    let n = 40 * 30;
    let hr: Vec<f64> = (0..n).map(|t| 60.0 + 5.0 * (t as f64 / 97.0).sin()).collect();
    let br: Vec<f64> = (0..n).map(|t| 15.0 + (t as f64 / 41.0).cos()).collect();
    let (hr, br) = vitals(hr, br);
    let rows = baseline_features_all(&hr, &br, 40, &BaselineParams::default()).unwrap();
    assert_eq!(rows.len(), 40);
    for r in &rows {
        assert!(r.as_slice().iter().all(|v| v.is_finite()));
        // Standard deviations are non-negative.
        for i in [1, 2, 4, 5] {
            assert!(r.as_slice()[i] >= 0.0);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn integral_features_scale_linearly(
        vals in prop::collection::vec(0.0f64..3.0, 4 * 300),
        scale in 0.1f64..10.0,
        epoch in 0usize..10,
    ) {
        let a = ActivitySeries::new(vals.clone(), vals.iter().rev().copied().collect()).unwrap();
        let b = ActivitySeries::new(a.upper.iter().map(|v| v * scale).collect(), a.lower.iter().map(|v| v * scale).collect()).unwrap();
        let fa = motion_features(&a, epoch).unwrap();
        let fb = motion_features(&b, epoch).unwrap();
        for name in MOTION_FEATURE_NAMES.iter().filter(|n| n.contains("_g")) {
            let (x, y) = (fa.get(name).unwrap(), fb.get(name).unwrap());
            prop_assert!((x * scale - y).abs() <= 1e-9 * (1.0 + y.abs()), "{}: {} vs {}", name, x * scale, y);
        }
    }

    #[test]
    fn motion_features_non_negative(vals in prop::collection::vec(0.0f64..2.0, 4 * 300), epoch in 0usize..10) {
        let a = ActivitySeries::new(vals.clone(), vals).unwrap();
        let f = motion_features(&a, epoch).unwrap();
        prop_assert!(f.as_slice().iter().all(|v| *v >= 0.0 && v.is_finite()));
    }

    #[test]
    fn baseline_is_scale_free(k in 0.5f64..4.0) {
        // Values are divided by their 90th percentile, so a global scale cancels.
        let n = 20 * 30;
        let hr: Vec<f64> = (0..n).map(|t| 60.0 + 8.0 * (t as f64 / 53.0).sin()).collect();
        let br: Vec<f64> = (0..n).map(|t| 14.0 + 2.0 * (t as f64 / 31.0).cos()).collect();
        let (h1, b1) = vitals(hr.clone(), br.clone());
        let (h2, b2) = vitals(hr.iter().map(|v| v * k).collect(), br.iter().map(|v| v * k).collect());
        let p = BaselineParams::default();
        let r1 = baseline_features_all(&h1, &b1, 20, &p).unwrap();
        let r2 = baseline_features_all(&h2, &b2, 20, &p).unwrap();
        for (a, b) in r1.iter().zip(&r2) {
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                prop_assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs()));
            }
        }
    }
}
