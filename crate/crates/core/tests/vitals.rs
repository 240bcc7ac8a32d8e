mod common;

use proptest::prelude::*;

use somnoflow::vitals::{br_from_rip, br_with_sqi, hr_from_qrs, hr_with_sqi, pan_tompkins, sqi_br, sqi_hr, QrsSeries, SqiRule};
use somnoflow::{VitalKind, VitalSeries};

#[test]
fn pulse_train_detections() {
    let ecg = common::ecg_train(60.0, 128.0, 60.0, 0.3);
    let qrs = pan_tompkins(&ecg, 128.0).unwrap();
    assert!((qrs.times.len() as i64 - 60).abs() <= 1, "{}", qrs.times.len());

    let ecg = common::ecg_train(120.0, 128.0, 30.0, 0.1);
    let qrs = pan_tompkins(&ecg, 128.0).unwrap();
    for w in qrs.times.windows(2) {
        assert!((w[1] - w[0] - 0.5).abs() <= 1.0 / 128.0 + 1e-12, "gap {}", w[1] - w[0]);
    }
}

#[test]
fn detections_sit_on_r_peaks() {
    let ecg = common::ecg_train(72.0, 250.0, 40.0, 0.2);
    let qrs = pan_tompkins(&ecg, 250.0).unwrap();
    let period = 60.0 / 72.0;
    for t in &qrs.times {
        let off = (t - 0.2) / period;
        assert!((off - off.round()).abs() * period < 0.03, "{t}");
    }
}

#[test]
fn sqi_series_follow_agreement() {
    let ecg = VitalSeries::new(VitalKind::HeartRate, vec![60.0, 60.0, 0.0], vec![true, true, false]).unwrap();
    let hr = hr_with_sqi(&ecg, &[63.0, 63.5, 0.0], SqiRule::default()).unwrap();
    assert_eq!(hr.sqi(), &[true, false, false]);
    let abd = VitalSeries::new(VitalKind::BreathingRate, vec![15.0, 15.0], vec![true, true]).unwrap();
    let thor = VitalSeries::new(VitalKind::BreathingRate, vec![18.0, 19.0], vec![true, true]).unwrap();
    let br = br_with_sqi(&abd, &thor, SqiRule::default()).unwrap();
    assert_eq!(br.sqi(), &[true, false]);
    assert_eq!(br.values(), thor.values());
}

#[test]
fn low_rate_does_not_lock_onto_harmonics() {
    for bpm in [40.0, 42.5, 47.5, 50.0] {
        let times: Vec<f64> = (0..200).map(|i| 0.37 + i as f64 * 60.0 / bpm).filter(|&t| t < 90.0).collect();
        let hr = hr_from_qrs(&QrsSeries::new(times, 128.0, 90.0).unwrap(), 90.0).unwrap();
        assert!(hr.values().iter().all(|v| (v - bpm).abs() <= 1.0), "{bpm}");
    }
}

proptest! {
    #[test]
    fn sqi_symmetric(a in 30.0f64..150.0, b in 30.0f64..150.0) {
        prop_assert_eq!(sqi_hr(a, b), sqi_hr(b, a));
        prop_assert_eq!(sqi_br(a / 4.0, b / 4.0), sqi_br(b / 4.0, a / 4.0));
        prop_assert_eq!(sqi_hr(a, b), (a - b).abs() <= 3.0);
    }

    #[test]
    fn hr_invariant_to_whole_second_shift(bpm in 45.0f64..110.0, phase in 0.0f64..1.0, shift in 1usize..5) {
        let dur = 60.0;
        let times: Vec<f64> = (0..200).map(|i| phase + i as f64 * 60.0 / bpm).filter(|&t| t < dur).collect();
        let shifted: Vec<f64> = times.iter().map(|t| t + shift as f64).collect();
        let a = hr_from_qrs(&QrsSeries::new(times, 128.0, dur + shift as f64).unwrap(), dur + shift as f64).unwrap();
        let b = hr_from_qrs(&QrsSeries::new(shifted, 128.0, dur + shift as f64).unwrap(), dur + shift as f64).unwrap();
        // Away from the edges, sample k of the shifted series matches sample k - shift.
        for k in 10..(dur as usize - 10) {
            prop_assert_eq!(a.values()[k], b.values()[k + shift]);
        }
    }

    #[test]
    fn br_within_tolerance(brpm in 8.0f64..39.0, phase in 0.0f64..std::f64::consts::TAU) {
        let rip = common::rip_sine(brpm, 32.0, 90.0, phase);
        let br = br_from_rip(&rip, 32.0).unwrap();
        prop_assert!(br.values().iter().all(|v| (v - brpm).abs() <= 0.2));
    }
}
