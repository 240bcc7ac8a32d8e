//! The synthetic study end to end: contact corpus → extractor training →
//! video recordings → activity and features → cross-validated evaluation.

use std::path::Path;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::{ContactCorpusConfig, PipelineConfig};
use crate::deepnet::{self, deep_feature_names, SavedModel};
use crate::error::{Error, Result};
use crate::eval::{self, report_csv, ForestLearner, StudyOutcome, StudyRecording};
use crate::features::{self, BASELINE_FEATURE_NAMES, MOTION_FEATURE_NAMES};
use crate::flow::{activity_from_frames, ActivitySeries, BedGeometry, FrameSource};
use crate::forest::FeatureMatrix;
use crate::series::{Recording, VitalKind, VitalSeries};
use crate::stage::map_hypnogram;
use crate::synth::{self, CameraPose, EcgSignal, SynthConfig};
use crate::vitals::{self, SqiRule};
use crate::{io, par, rng};

/// One contact-sensor night: waveforms plus the reference heart rate.
#[derive(Debug, Clone)]
pub struct ContactNight {
    pub id: String,
    pub hypnogram: crate::stage::Hypnogram,
    pub ecg: EcgSignal,
    pub rip_abd: Vec<f32>,
    pub rip_thor: Vec<f32>,
    pub rip_fs: f64,
    pub hr_ppg: Vec<f64>,
    pub occupancy: Vec<bool>,
}

/// Renders a synthetic night to contact waveforms. The ECG and thorax band
/// follow the observed (artifact-bearing) rates; the PPG reference and the
/// abdomen band follow the clean rates, so disagreement marks low quality.
pub fn contact_night(id: &str, cfg: &SynthConfig, corpus: &ContactCorpusConfig) -> Result<ContactNight> {
    cfg.validate()?;
    let seed = cfg.seed;
    let h = synth::gen_hypnogram(cfg);
    let v = synth::gen_vitals_detailed(&h, cfg);
    let ecg = synth::gen_ecg(v.hr.values(), corpus.ecg_fs, corpus.ecg_noise_std, rng::derive(seed, "contact/ecg"));
    let disagreement: Vec<f64> = v.br.values().iter().zip(&v.br_clean).map(|(o, c)| o - c).collect();
    let (rip_abd, rip_thor) = synth::gen_rip_varying(&v.br_clean, corpus.rip_fs, &disagreement);
    let mut r = rng::stream(seed, "contact/ppg");
    let noise = Normal::new(0.0, corpus.ppg_noise_std.max(f64::MIN_POSITIVE)).expect("finite std");
    let hr_ppg = v
        .hr_clean
        .iter()
        .map(|&x| if corpus.ppg_noise_std > 0.0 { x + noise.sample(&mut r) } else { x })
        .collect();
    Ok(ContactNight {
        id: id.to_string(),
        hypnogram: h,
        ecg,
        rip_abd,
        rip_thor,
        rip_fs: corpus.rip_fs,
        hr_ppg,
        occupancy: v.occupancy,
    })
}

/// Heart and breathing rate with quality flags from contact waveforms.
pub fn contact_vitals(
    ecg: &[f32],
    ecg_fs: f64,
    rip_abd: &[f32],
    rip_thor: &[f32],
    rip_fs: f64,
    hr_ppg: &[f64],
    corpus: &ContactCorpusConfig,
) -> Result<(VitalSeries, VitalSeries)> {
    let duration = ecg.len() as f64 / ecg_fs;
    let qrs = vitals::pan_tompkins(ecg, ecg_fs)?;
    let hr_ecg = vitals::hr_from_qrs_with(&qrs, duration, &corpus.hr)?;
    let hr = vitals::hr_with_sqi(&hr_ecg, hr_ppg, SqiRule::new(corpus.hr_sqi_threshold)?)?;
    let abd = vitals::br_from_rip_with(rip_abd, rip_fs, &corpus.br)?;
    let thor = vitals::br_from_rip_with(rip_thor, rip_fs, &corpus.br)?;
    let br = vitals::br_with_sqi(&abd, &thor, SqiRule::new(corpus.br_sqi_threshold)?)?;
    Ok((hr, br))
}

fn contact_recording(i: usize, cfg: &PipelineConfig) -> Result<Recording> {
    let id = format!("contact{i:03}");
    let seed = rng::derive_index(rng::derive(cfg.seed, "pipeline/contact"), i as u64);
    let corpus = &cfg.deepnet.corpus;
    let s = SynthConfig { seed, n_epochs: corpus.n_epochs, ..cfg.synth.recording.clone() };
    let night = contact_night(&id, &s, corpus)?;
    let (hr, br) = contact_vitals(
        &night.ecg.samples,
        night.ecg.fs,
        &night.rip_abd,
        &night.rip_thor,
        night.rip_fs,
        &night.hr_ppg,
        corpus,
    )
    .map_err(|e| e.in_recording(&id))?;
    Ok(Recording {
        id,
        activity: ActivitySeries::zeros(0),
        hypnogram: night.hypnogram,
        hr,
        br,
        occupancy: night.occupancy,
    })
}

/// Synthesis parameters of study recording `i`; camera poses alternate.
pub fn study_synth_config(cfg: &PipelineConfig, i: usize) -> SynthConfig {
    let mut s = cfg.synth.recording.clone();
    s.seed = rng::derive_index(rng::derive(cfg.seed, "pipeline/study"), i as u64);
    s.video.camera = if i.is_multiple_of(2) { CameraPose::RoomA } else { CameraPose::RoomB };
    s
}

pub fn study_id(i: usize) -> String {
    format!("rec{i:03}")
}

/// A study night with vitals from the generator and activity measured from
/// its rendered video.
pub fn study_recording(id: &str, s: &SynthConfig, flow: &crate::flow::ActivityParams) -> Result<Recording> {
    let h = synth::gen_hypnogram(s);
    let v = synth::gen_vitals_detailed(&h, s);
    let video = synth::gen_video(&h, s)?;
    let geom = video.geometry().clone();
    let activity = activity_from_frames(&video, &geom, &geom.homography()?, flow)?;
    Ok(Recording { id: id.to_string(), hypnogram: h, hr: v.hr, br: v.br, activity, occupancy: v.occupancy })
}

pub fn motion_names() -> Vec<String> {
    MOTION_FEATURE_NAMES.iter().map(|s| s.to_string()).collect()
}

pub fn baseline_names() -> Vec<String> {
    BASELINE_FEATURE_NAMES.iter().map(|s| s.to_string()).collect()
}

/// Motion and baseline matrices of a recording.
pub fn feature_matrices(rec: &Recording, p: &features::FeatureParams) -> Result<(FeatureMatrix, FeatureMatrix)> {
    let (motion, base) = features::recording_features(rec, p)?;
    let m = FeatureMatrix::from_rows(motion_names(), &motion.iter().map(|v| v.as_slice().to_vec()).collect::<Vec<_>>())?;
    let b = FeatureMatrix::from_rows(baseline_names(), &base.iter().map(|v| v.as_slice().to_vec()).collect::<Vec<_>>())?;
    Ok((m, b))
}

/// Motion and baseline columns for `n_epochs` epochs of loose series (no
/// hypnogram needed).
pub fn epoch_features(
    activity: &ActivitySeries,
    hr: &VitalSeries,
    br: &VitalSeries,
    n_epochs: usize,
    p: &features::FeatureParams,
) -> Result<FeatureMatrix> {
    let motion = par::try_map_range(n_epochs, |e| features::motion_features_with(activity, e, &p.motion))?;
    let base = features::baseline_features_all(hr, br, n_epochs, &p.baseline)?;
    let rows: Vec<Vec<f64>> = motion
        .iter()
        .zip(&base)
        .map(|(m, b)| m.as_slice().iter().chain(b.as_slice()).copied().collect())
        .collect();
    FeatureMatrix::from_rows(motion_names().into_iter().chain(baseline_names()).collect(), &rows)
}

pub fn deep_matrix(model: &SavedModel, rec: &Recording) -> Result<FeatureMatrix> {
    let rows = deepnet::extract_deep_features(
        &model.model,
        &model.stats,
        &rec.hr,
        &rec.br,
        rec.hypnogram.len(),
        model.zero_fill,
    )?;
    FeatureMatrix::from_rows(deep_feature_names(model.model.config().feature_dim), &rows)
}

fn coverage_pair(rec: &Recording) -> Result<Option<(f64, f64)>> {
    match (eval::coverage(&rec.hr, &rec.occupancy), eval::coverage(&rec.br, &rec.occupancy)) {
        (Ok(h), Ok(b)) => Ok(Some((h, b))),
        (Err(Error::NeverInBed), _) | (_, Err(Error::NeverInBed)) => Ok(None),
        (Err(e), _) | (_, Err(e)) => Err(e),
    }
}

pub fn study_entry(
    rec: &Recording,
    p: &features::FeatureParams,
    model: Option<&SavedModel>,
    raw_model: Option<&SavedModel>,
) -> Result<StudyRecording> {
    let (motion, baseline) = feature_matrices(rec, p)?;
    Ok(StudyRecording {
        id: rec.id.clone(),
        hypnogram: rec.hypnogram.clone(),
        baseline,
        motion,
        deep: model.map(|m| deep_matrix(m, rec)).transpose()?,
        deep_raw: raw_model.map(|m| deep_matrix(m, rec)).transpose()?,
        coverage: coverage_pair(rec)?,
    })
}

pub const FEATURES_FILE: &str = "features.csv";
pub const DEEP_FILE: &str = "deep.csv";
pub const DEEP_RAW_FILE: &str = "deep_raw.csv";

/// Writes one recording's study files into `dir`.
pub fn save_study_recording(dir: &Path, rec: &Recording, entry: &StudyRecording) -> Result<()> {
    io::write_hypnogram(&dir.join("hypnogram.csv"), &rec.hypnogram)?;
    io::write_vitals(&dir.join("hr.csv"), &rec.hr)?;
    io::write_vitals(&dir.join("br.csv"), &rec.br)?;
    io::write_occupancy(&dir.join("occupancy.csv"), &rec.occupancy)?;
    if !rec.activity.is_empty() {
        io::write_activity(&dir.join("activity.csv"), &rec.activity)?;
    }
    io::write_features(&dir.join(FEATURES_FILE), &FeatureMatrix::hstack(&[&entry.motion, &entry.baseline])?)?;
    if let Some(d) = &entry.deep {
        io::write_features(&dir.join(DEEP_FILE), d)?;
    }
    if let Some(d) = &entry.deep_raw {
        io::write_features(&dir.join(DEEP_RAW_FILE), d)?;
    }
    Ok(())
}

fn split_columns(m: &FeatureMatrix, names: &[String]) -> Result<FeatureMatrix> {
    let idx = names
        .iter()
        .map(|n| {
            m.names()
                .iter()
                .position(|c| c == n)
                .ok_or_else(|| Error::ShapeMismatch(format!("missing feature column {n:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<Vec<f64>> = (0..m.n_rows()).map(|i| idx.iter().map(|&j| m.get(i, j)).collect()).collect();
    FeatureMatrix::from_rows(names.to_vec(), &rows)
}

/// Reads a study directory: one subdirectory per recording.
pub fn load_study(dir: &Path) -> Result<Vec<StudyRecording>> {
    let mut out = Vec::new();
    let expected: Vec<String> = motion_names().into_iter().chain(baseline_names()).collect();
    for sub in io::list_subdirs(dir)? {
        let id = sub.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let load = || -> Result<StudyRecording> {
            let hypnogram = io::read_hypnogram(&sub.join("hypnogram.csv"))?;
            let feats = io::read_features(&sub.join(FEATURES_FILE), Some(&expected))?;
            let optional = |name: &str| -> Result<Option<FeatureMatrix>> {
                let p = sub.join(name);
                if p.exists() {
                    io::read_features(&p, None).map(Some)
                } else {
                    Ok(None)
                }
            };
            let coverage = if sub.join("occupancy.csv").exists() {
                let occ = io::read_occupancy(&sub.join("occupancy.csv"))?;
                let hr = io::read_vitals(&sub.join("hr.csv"), VitalKind::HeartRate)?;
                let br = io::read_vitals(&sub.join("br.csv"), VitalKind::BreathingRate)?;
                match (eval::coverage(&hr, &occ), eval::coverage(&br, &occ)) {
                    (Ok(h), Ok(b)) => Some((h, b)),
                    _ => None,
                }
            } else {
                None
            };
            Ok(StudyRecording {
                id: id.clone(),
                hypnogram,
                motion: split_columns(&feats, &motion_names())?,
                baseline: split_columns(&feats, &baseline_names())?,
                deep: optional(DEEP_FILE)?,
                deep_raw: optional(DEEP_RAW_FILE)?,
                coverage,
            })
        };
        out.push(load().map_err(|e| e.in_recording(&id))?);
    }
    if out.is_empty() {
        return Err(Error::EmptyInput(format!("no recordings under {}", dir.display())));
    }
    Ok(out)
}

/// `report.json` at `report_path`, with `report.csv` and one
/// `hypnogram_<id>.csv` per recording beside it.
pub fn write_evaluation(report_path: &Path, outcome: &StudyOutcome, recs: &[StudyRecording]) -> Result<()> {
    io::write_text(report_path, &outcome.report.to_json())?;
    let dir = report_path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    io::write_text(&dir.join("report.csv"), &report_csv(&outcome.report))?;
    for ((id, pred), rec) in outcome.predictions.iter().zip(recs) {
        let reference = map_hypnogram(&rec.hypnogram, pred.scheme);
        io::write_label_comparison(&dir.join(format!("hypnogram_{id}.csv")), &reference, pred)?;
    }
    Ok(())
}

pub fn evaluate(recs: &[StudyRecording], cfg: &PipelineConfig) -> Result<StudyOutcome> {
    eval::run_study(recs, &cfg.eval, &ForestLearner(cfg.forest.clone()), rng::derive(cfg.seed, "pipeline/eval"))
}

/// Whether the configured blocks need the extractor trained without zero-filling.
pub fn needs_raw_extractor(cfg: &PipelineConfig) -> bool {
    cfg.eval.blocks().iter().any(|b| b.arm.uses_deep() && b.sqi == eval::SqiMode::Raw)
}

pub fn needs_extractor(cfg: &PipelineConfig) -> bool {
    cfg.eval.blocks().iter().any(|b| b.arm.uses_deep())
}

pub fn train_extractor(corpus: &[Recording], cfg: &PipelineConfig, zero_fill: bool) -> Result<SavedModel> {
    let label = if zero_fill { "pipeline/deepnet" } else { "pipeline/deepnet-raw" };
    let tc = deepnet::TrainConfig { zero_fill, seed: rng::derive(cfg.seed, label), ..cfg.deepnet.train.clone() };
    let out = deepnet::train(corpus, &tc)?;
    Ok(SavedModel { model: out.model, stats: out.stats, zero_fill, best_epoch: out.best_epoch, history: out.history })
}

pub fn contact_corpus(cfg: &PipelineConfig) -> Result<Vec<Recording>> {
    par::try_map_range(cfg.deepnet.corpus.n_recordings, |i| contact_recording(i, cfg))
}

#[derive(Debug)]
pub struct EndToEnd {
    pub outcome: StudyOutcome,
    pub model: Option<SavedModel>,
    pub raw_model: Option<SavedModel>,
}

fn stage<T>(name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    log::info!("stage {name}");
    f().map_err(|e| e.in_stage(name))
}

/// Runs the whole study. With `out_dir`, intermediate artefacts are written:
/// `config.json`, `model/`, `model_raw/`, `study/<id>/…`, `report.json`,
/// `report.csv` and `hypnogram_<id>.csv`.
pub fn end_to_end(cfg: &PipelineConfig, out_dir: Option<&Path>) -> Result<EndToEnd> {
    cfg.validate()?;
    if let Some(dir) = out_dir {
        io::write_text(&dir.join("config.json"), &cfg.to_json())?;
    }
    let (model, raw_model) = if needs_extractor(cfg) {
        let corpus = stage("contact-corpus", || contact_corpus(cfg))?;
        let model = stage("train-extractor", || train_extractor(&corpus, cfg, true))?;
        let raw = if needs_raw_extractor(cfg) {
            Some(stage("train-extractor-raw", || train_extractor(&corpus, cfg, false))?)
        } else {
            None
        };
        if let Some(dir) = out_dir {
            model.save(&dir.join("model"))?;
            if let Some(r) = &raw {
                r.save(&dir.join("model_raw"))?;
            }
        }
        (Some(model), raw)
    } else {
        (None, None)
    };

    let recs = stage("video-study", || {
        (0..cfg.synth.n_recordings)
            .map(|i| {
                let id = study_id(i);
                study_recording(&id, &study_synth_config(cfg, i), &cfg.flow).map_err(|e| e.in_recording(&id))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let entries = stage("featurize", || {
        recs.iter()
            .map(|r| study_entry(r, &cfg.features, model.as_ref(), raw_model.as_ref()).map_err(|e| e.in_recording(&r.id)))
            .collect::<Result<Vec<_>>>()
    })?;
    if let Some(dir) = out_dir {
        for (r, e) in recs.iter().zip(&entries) {
            save_study_recording(&dir.join("study").join(&r.id), r, e)?;
        }
    }
    let outcome = stage("evaluate", || evaluate(&entries, cfg))?;
    if let Some(dir) = out_dir {
        write_evaluation(&dir.join("report.json"), &outcome, &entries)?;
    }
    Ok(EndToEnd { outcome, model, raw_model })
}

/// Written by [`simulate`] next to the recording files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationManifest {
    pub format_version: String,
    pub id: String,
    pub seed: u64,
    pub fps: usize,
    pub n_frames: usize,
    pub width: usize,
    pub height: usize,
    /// Frame file pattern relative to the manifest.
    pub frames: String,
    pub bed: BedGeometry,
    pub ecg_fs: f64,
    pub rip_fs: f64,
    pub config: SynthConfig,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Writes one synthetic recording (labels, vitals, contact waveforms, video
/// frames when `frames` is set, manifest) into `out`.
pub fn simulate(cfg: &PipelineConfig, index: usize, out: &Path, frames: bool) -> Result<SimulationManifest> {
    let s = study_synth_config(cfg, index);
    let id = study_id(index);
    let night = contact_night(&id, &s, &cfg.deepnet.corpus)?;
    let v = synth::gen_vitals_detailed(&night.hypnogram, &s);
    io::write_hypnogram(&out.join("hypnogram.csv"), &night.hypnogram)?;
    io::write_vitals(&out.join("hr.csv"), &v.hr)?;
    io::write_vitals(&out.join("br.csv"), &v.br)?;
    io::write_occupancy(&out.join("occupancy.csv"), &v.occupancy)?;
    let ppg = VitalSeries::new(VitalKind::HeartRate, night.hr_ppg.clone(), vec![true; night.hr_ppg.len()])?;
    io::write_vitals(&out.join("hr_ppg.csv"), &ppg)?;
    io::write_f32(&out.join("ecg.f32"), &night.ecg.samples, night.ecg.fs)?;
    io::write_f32(&out.join("rip_abd.f32"), &night.rip_abd, night.rip_fs)?;
    io::write_f32(&out.join("rip_thor.f32"), &night.rip_thor, night.rip_fs)?;
    let video = synth::gen_video(&night.hypnogram, &s)?;
    if frames {
        let dir = out.join("frames");
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for i in 0..video.len() {
            io::write_pgm(&dir.join(io::frame_file_name(i)), &video.frame(i)?)?;
        }
    }
    let manifest = SimulationManifest {
        format_version: crate::FORMAT_VERSION.into(),
        id,
        seed: s.seed,
        fps: synth::FPS,
        n_frames: if frames { video.len() } else { 0 },
        width: s.video.width,
        height: s.video.height,
        frames: "frames/%06d.pgm".into(),
        bed: video.geometry().clone(),
        ecg_fs: night.ecg.fs,
        rip_fs: night.rip_fs,
        config: s,
    };
    io::write_json(&out.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

/// Reads labelled vital-sign recordings (`hypnogram.csv`, `hr.csv`, `br.csv`,
/// optional `occupancy.csv`), one per subdirectory of `dir`.
pub fn load_recordings(dir: &Path) -> Result<Vec<Recording>> {
    let mut out = Vec::new();
    for sub in io::list_subdirs(dir)? {
        let id = sub.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let load = || -> Result<Recording> {
            let hypnogram = io::read_hypnogram(&sub.join("hypnogram.csv"))?;
            let hr = io::read_vitals(&sub.join("hr.csv"), VitalKind::HeartRate)?;
            let br = io::read_vitals(&sub.join("br.csv"), VitalKind::BreathingRate)?;
            let occ_path = sub.join("occupancy.csv");
            let occupancy = if occ_path.exists() { io::read_occupancy(&occ_path)? } else { vec![true; hr.len()] };
            Ok(Recording { id: id.clone(), hypnogram, hr, br, activity: ActivitySeries::zeros(0), occupancy })
        };
        out.push(load().map_err(|e| e.in_recording(&id))?);
    }
    if out.is_empty() {
        return Err(Error::EmptyInput(format!("no recordings under {}", dir.display())));
    }
    Ok(out)
}
