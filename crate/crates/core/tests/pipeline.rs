mod common;

use somnoflow::config::PipelineConfig;
use somnoflow::eval::Arm;
use somnoflow::pipeline::{self, end_to_end, load_recordings, load_study, simulate, SimulationManifest};
use somnoflow::{io, Error};

#[test]
fn small_study_round_trips_through_disk() {
    let cfg = common::small_config(4, 20, 2);
    let dir = tempfile::tempdir().unwrap();
    let run = end_to_end(&cfg, Some(dir.path())).unwrap();
    let report = std::fs::read(dir.path().join("report.json")).unwrap();
    assert!(dir.path().join("model/weights.bin").exists());
    assert!(run.model.is_some());
    for arm in &cfg.eval.arms {
        assert!(run.outcome.report.blocks.iter().any(|b| b.arm == *arm), "{arm:?}");
    }

    // Re-evaluating the saved study gives the same bytes.
    let recs = load_study(&dir.path().join("study")).unwrap();
    assert_eq!(recs.len(), 4);
    let again = pipeline::evaluate(&recs, &cfg).unwrap();
    let p = dir.path().join("again.json");
    pipeline::write_evaluation(&p, &again, &recs).unwrap();
    assert_eq!(std::fs::read(p).unwrap(), report);
}

#[test]
fn motion_only_config_skips_the_extractor() {
    let mut cfg = common::small_config(4, 15, 2);
    cfg.eval.arms = vec![Arm::Baseline, Arm::BaselineMotion];
    cfg.eval.primary_arm = Arm::BaselineMotion;
    cfg.eval.sqi_ablation = false;
    assert!(!pipeline::needs_extractor(&cfg));
    let run = end_to_end(&cfg, None).unwrap();
    assert!(run.model.is_none() && run.raw_model.is_none());
}

#[test]
fn simulate_writes_a_loadable_recording() {
    let cfg = common::small_config(2, 4, 2);
    let dir = tempfile::tempdir().unwrap();
    let rec_dir = dir.path().join("rec");
    let m = simulate(&cfg, 1, &rec_dir, false).unwrap();
    assert_eq!(m.n_frames, 0);
    let back: SimulationManifest = io::read_json(&rec_dir.join(pipeline::MANIFEST_FILE)).unwrap();
    assert_eq!(back, m);
    let recs = load_recordings(dir.path()).unwrap();
    assert_eq!(recs.len(), 1);
    assert_eq!(recs[0].hypnogram.len(), 4);
    assert_eq!(recs[0].hr.len(), 120);
    let (ecg, fs) = io::read_f32(&rec_dir.join("ecg.f32")).unwrap();
    assert_eq!(fs, m.ecg_fs);
    assert_eq!(ecg.len() as f64, 120.0 * fs);
}

#[test]
fn config_errors_are_reported() {
    let e = PipelineConfig::from_json("{\"nope\": 1}").unwrap_err();
    assert!(matches!(e, Error::Config(_)) && e.to_string().contains("nope"), "{e}");
    let mut cfg = PipelineConfig::default();
    cfg.eval.k = 0;
    assert!(cfg.validate().is_err());
    let text = PipelineConfig::default().to_json();
    assert_eq!(PipelineConfig::from_json(&text).unwrap(), PipelineConfig::default());
    let dir = tempfile::tempdir().unwrap();
    assert!(PipelineConfig::load(&dir.path().join("missing.json")).unwrap_err().is_io());
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\n  \"seed\": 1,\n  \"seed\" 2\n}").unwrap();
    assert!(matches!(PipelineConfig::load(&bad), Err(Error::Parse { line: 3, .. })));
    assert!(matches!(load_recordings(dir.path()), Err(Error::EmptyInput(_))));
}
