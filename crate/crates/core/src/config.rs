//! The pipeline configuration document.
//!
//! Every section mirrors a module configuration. Seeds inside sections are
//! ignored by the pipeline: all randomness derives from the master `seed`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::deepnet::{NetConfig, TrainConfig};
use crate::error::{Error, Result};
use crate::eval::EvalConfig;
use crate::features::FeatureParams;
use crate::flow::ActivityParams;
use crate::forest::ForestConfig;
use crate::synth::{SynthConfig, VideoConfig};
use crate::vitals::{BrParams, HrParams};
use crate::FORMAT_VERSION;

/// Recordings of the video study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudySynthConfig {
    pub n_recordings: usize,
    pub recording: SynthConfig,
}

impl Default for StudySynthConfig {
    fn default() -> Self {
        StudySynthConfig {
            n_recordings: 20,
            recording: SynthConfig {
                video: VideoConfig {
                    width: 80,
                    height: 80,
                    canonical_width: 32,
                    canonical_height: 48,
                    ..VideoConfig::default()
                },
                ..SynthConfig::default()
            },
        }
    }
}

/// Contact-sensor corpus the extractor is trained on: synthetic nights
/// rendered to ECG and RIP waveforms, then measured back with the contact
/// vital-sign estimators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContactCorpusConfig {
    pub n_recordings: usize,
    pub n_epochs: usize,
    pub ecg_fs: f64,
    pub rip_fs: f64,
    pub ecg_noise_std: f64,
    /// Std of the error of the reference (PPG) heart rate, bpm.
    pub ppg_noise_std: f64,
    pub hr: HrParams,
    pub br: BrParams,
    pub hr_sqi_threshold: f64,
    pub br_sqi_threshold: f64,
}

impl Default for ContactCorpusConfig {
    fn default() -> Self {
        ContactCorpusConfig {
            n_recordings: 24,
            n_epochs: 240,
            ecg_fs: 128.0,
            rip_fs: 32.0,
            ecg_noise_std: 0.05,
            ppg_noise_std: 1.0,
            hr: HrParams::default(),
            br: BrParams::default(),
            hr_sqi_threshold: 3.0,
            br_sqi_threshold: 3.0,
        }
    }
}

impl ContactCorpusConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_recordings < 2 || self.n_epochs == 0 {
            return Err(Error::Config("contact corpus needs at least 2 recordings of at least 1 epoch".into()));
        }
        if self.ecg_fs < 100.0 || self.rip_fs < 8.0 {
            return Err(Error::Config("contact corpus needs ecg_fs >= 100 and rip_fs >= 8".into()));
        }
        if !(self.ecg_noise_std >= 0.0 && self.ppg_noise_std >= 0.0) {
            return Err(Error::Config("noise levels must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeepnetSection {
    pub corpus: ContactCorpusConfig,
    pub train: TrainConfig,
}

impl Default for DeepnetSection {
    fn default() -> Self {
        DeepnetSection {
            corpus: ContactCorpusConfig::default(),
            train: TrainConfig {
                net: NetConfig::compact(),
                max_epochs: 12,
                samples_per_epoch: 1024,
                ..TrainConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub version: String,
    pub seed: u64,
    pub synth: StudySynthConfig,
    pub flow: ActivityParams,
    pub features: FeatureParams,
    pub deepnet: DeepnetSection,
    pub forest: ForestConfig,
    pub eval: EvalConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            version: FORMAT_VERSION.into(),
            seed: 0,
            synth: StudySynthConfig::default(),
            flow: ActivityParams::default(),
            features: FeatureParams::default(),
            deepnet: DeepnetSection::default(),
            forest: ForestConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.version != FORMAT_VERSION {
            return Err(Error::Config(format!(
                "config version {:?} does not match format version {FORMAT_VERSION:?}",
                self.version
            )));
        }
        if self.synth.n_recordings < self.eval.k {
            return Err(Error::KTooLarge { k: self.eval.k, n: self.synth.n_recordings });
        }
        self.synth.recording.validate()?;
        self.deepnet.corpus.validate()?;
        self.deepnet.train.validate()?;
        self.forest.validate()?;
        self.eval.validate()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: PipelineConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("line {}: {e}", e.line())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config file; syntax errors carry path and line.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: PipelineConfig =
            serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises") + "\n"
    }
}
