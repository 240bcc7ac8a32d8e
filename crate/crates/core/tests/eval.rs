mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use somnoflow::eval::{
    accuracy, confusion, kappa, kfold_split, run_study, sw_rates, Arm, ConfusionMatrix, EvalConfig, ForestLearner,
    SqiMode, StudyRecording,
};
use somnoflow::forest::{FeatureMatrix, ForestConfig};
use somnoflow::pipeline::{baseline_names, motion_names};
use somnoflow::stage::map_hypnogram;
use somnoflow::{Error, Hypnogram, SleepStage, StageScheme};

proptest! {
    #[test]
    fn kappa_matches_brute_force(k in 2usize..6, seed in any::<u64>()) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let counts: Vec<Vec<u64>> = (0..k).map(|_| (0..k).map(|_| r.random_range(0..30)).collect()).collect();
        prop_assume!(counts.iter().flatten().sum::<u64>() > 0);
        let m = ConfusionMatrix::from_counts(counts.clone()).unwrap();
        let (kb, ab) = common::kappa_brute(&counts);
        let kk = kappa(&m).unwrap();
        if kb.is_finite() {
            prop_assert!((kk - kb).abs() <= 1e-12);
        }
        prop_assert!((accuracy(&m).unwrap() - ab).abs() <= 1e-12);
        prop_assert!(kk <= 1.0);
    }

    #[test]
    fn kappa_symmetric_under_transpose(seed in any::<u64>()) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let counts: Vec<Vec<u64>> = (0..4).map(|_| (0..4).map(|_| r.random_range(1..30)).collect()).collect();
        let t: Vec<Vec<u64>> = (0..4).map(|i| (0..4).map(|j| counts[j][i]).collect()).collect();
        let a = kappa(&ConfusionMatrix::from_counts(counts).unwrap()).unwrap();
        let b = kappa(&ConfusionMatrix::from_counts(t).unwrap()).unwrap();
        prop_assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn folds_partition_ids(n in 1usize..80, k in 1usize..12, seed in any::<u64>()) {
        prop_assume!(k <= n);
        let ids: Vec<String> = (0..n).map(|i| format!("id{i}")).collect();
        let plan = kfold_split(&ids, k, seed).unwrap();
        prop_assert_eq!(plan.k(), k);
        let mut all: Vec<&String> = plan.folds.iter().flatten().collect();
        all.sort();
        all.dedup();
        prop_assert_eq!(all.len(), n);
        let sizes: Vec<usize> = plan.folds.iter().map(|f| f.len()).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        prop_assert_eq!(kfold_split(&ids, k, seed).unwrap(), plan);
    }
}

#[test]
fn kfold_errors() {
    let ids: Vec<String> = (0..3).map(|i| i.to_string()).collect();
    assert!(matches!(kfold_split(&ids, 4, 0), Err(Error::KTooLarge { k: 4, n: 3 })));
    assert!(kfold_split(&ids, 0, 0).is_err());
    let dup = vec!["a".to_string(), "a".to_string()];
    assert!(kfold_split(&dup, 2, 0).is_err());
}

#[test]
fn sleep_wake_rates() {
    let m = ConfusionMatrix::from_counts(vec![vec![30, 10], vec![5, 55]]).unwrap();
    let (tpr, tnr) = sw_rates(&m).unwrap();
    assert_eq!(tpr, Some(55.0 / 60.0));
    assert_eq!(tnr, Some(30.0 / 40.0));
}

#[test]
fn confusion_needs_matching_schemes() {
    let h = Hypnogram::new(vec![SleepStage::Wake, SleepStage::N2]).unwrap();
    let a = map_hypnogram(&h, StageScheme::FourClass);
    let b = map_hypnogram(&h, StageScheme::SleepWake);
    assert!(confusion(&a, &b).is_err());
    assert_eq!(kappa(&confusion(&a, &a).unwrap()).unwrap(), 1.0);
}

/// Recordings whose features carry the stage plus noise, so a forest can
/// stage them almost perfectly.
fn separable(n: usize, epochs: usize, seed: u64) -> Vec<StudyRecording> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let stages: Vec<SleepStage> = (0..epochs).map(|e| SleepStage::from_index((e / 7 + i) % 5).unwrap()).collect();
            let base: Vec<Vec<f64>> = stages
                .iter()
                .map(|s| (0..6).map(|j| if j == 0 { s.index() as f64 + r.random_range(-0.2..0.2) } else { r.random() }).collect())
                .collect();
            let motion: Vec<Vec<f64>> = (0..epochs).map(|_| (0..20).map(|_| r.random()).collect()).collect();
            StudyRecording {
                id: format!("p{i:02}"),
                hypnogram: Hypnogram::new(stages).unwrap(),
                baseline: FeatureMatrix::from_rows(baseline_names(), &base).unwrap(),
                motion: FeatureMatrix::from_rows(motion_names(), &motion).unwrap(),
                deep: None,
                deep_raw: None,
                coverage: Some((0.9, 0.95)),
            }
        })
        .collect()
}

#[test]
fn study_on_separable_data() {
    let recs = separable(8, 35, 1);
    let cfg = EvalConfig {
        k: 4,
        arms: vec![Arm::Baseline, Arm::BaselineMotion],
        strategies: vec![StageScheme::SleepWake, StageScheme::FourClass],
        primary_arm: Arm::Baseline,
        sqi_ablation: false,
    };
    let learner = ForestLearner(ForestConfig { n_trees: 30, ..ForestConfig::default() });
    let out = run_study(&recs, &cfg, &learner, 9).unwrap();
    let b = out.report.blocks.iter().find(|b| b.arm == Arm::Baseline && b.scheme == StageScheme::FourClass).unwrap();
    assert!(b.kappa.mean > 0.9, "{}", b.kappa.mean);
    assert_eq!(b.sqi, SqiMode::Filtered);
    let sw = out.report.blocks.iter().find(|b| b.scheme == StageScheme::SleepWake).unwrap();
    assert!(sw.tpr.is_some() && sw.tnr.is_some());
    assert_eq!(out.predictions.len(), 8);
    assert_eq!(out.report.folds.len(), 4);
    // Same seed, same bytes.
    assert_eq!(run_study(&recs, &cfg, &learner, 9).unwrap().report.to_json(), out.report.to_json());
}

#[test]
fn deep_arm_without_deep_features_fails() {
    let recs = separable(4, 10, 2);
    let cfg = EvalConfig { k: 2, arms: vec![Arm::Deep], strategies: vec![], primary_arm: Arm::Deep, sqi_ablation: false };
    assert!(run_study(&recs, &cfg, &ForestLearner(ForestConfig::default()), 0).is_err());
}
