//! Deterministic synthetic recordings.
//!
//! Every generator is a pure function of its inputs and a seed. Randomness is
//! drawn from labelled ChaCha8 substreams (see [`crate::rng`]), so the same
//! configuration always produces the same bytes.

mod hypnogram;
mod video;
mod vitals;
mod waveforms;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use hypnogram::gen_hypnogram;
pub use video::{gen_video, CameraPose, SynthVideo, VideoConfig, FPS};
pub use vitals::{gen_vitals, gen_vitals_detailed, SynthVitals};
pub use waveforms::{gen_ecg, gen_rip, gen_rip_varying, EcgSignal};

pub const HR_BAND: (f64, f64) = (40.0, 130.0);
pub const BR_BAND: (f64, f64) = (8.0, 39.0);

/// Per-stage parameters are indexed in stage order (W, N1, N2, N3, REM).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_epochs: usize,
    /// Row-stochastic stage transition matrix, applied once per epoch.
    pub transitions: [[f64; 5]; 5],
    pub hr_mean: [f64; 5],
    pub hr_std: [f64; 5],
    pub br_mean: [f64; 5],
    pub br_std: [f64; 5],
    /// Variance multiplier for breathing rate during REM.
    pub rem_br_var_boost: f64,
    /// Time constant of the AR(1) noise on both rates (s).
    pub noise_corr_s: f64,
    /// Time constant with which rates approach a new stage's mean (s).
    pub mean_time_constant_s: f64,
    /// Per-recording baseline offsets (std across recordings).
    pub subject_hr_offset_std: f64,
    pub subject_br_offset_std: f64,
    /// Probability that a quality block is dropped (SQI 0).
    pub dropout_rate_wake: f64,
    pub dropout_rate_sleep: f64,
    pub dropout_block_s: usize,
    /// Std of the error added to low-quality samples.
    pub hr_artifact_std: f64,
    pub br_artifact_std: f64,
    /// Probability that a Wake epoch is spent out of bed.
    pub out_of_bed_rate: f64,
    pub video: VideoConfig,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            n_epochs: 240,
            transitions: [
                [0.90, 0.09, 0.01, 0.00, 0.00],
                [0.05, 0.75, 0.18, 0.00, 0.02],
                [0.02, 0.03, 0.89, 0.04, 0.02],
                [0.01, 0.00, 0.05, 0.94, 0.00],
                [0.03, 0.02, 0.03, 0.00, 0.92],
            ],
            hr_mean: [72.0, 65.0, 61.0, 56.0, 68.0],
            hr_std: [4.0, 2.5, 2.0, 1.5, 4.0],
            br_mean: [16.0, 14.8, 14.2, 13.2, 15.6],
            br_std: [1.5, 0.8, 0.7, 0.5, 0.8],
            rem_br_var_boost: 3.0,
            noise_corr_s: 5.0,
            mean_time_constant_s: 20.0,
            subject_hr_offset_std: 4.0,
            subject_br_offset_std: 1.0,
            dropout_rate_wake: 0.5,
            dropout_rate_sleep: 0.04,
            dropout_block_s: 10,
            hr_artifact_std: 10.0,
            br_artifact_std: 4.0,
            out_of_bed_rate: 0.15,
            video: VideoConfig::default(),
        }
    }
}

fn check_prob(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} = {p} is not a probability")))
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_epochs == 0 {
            return Err(Error::Config("n_epochs must be at least 1".into()));
        }
        for (i, row) in self.transitions.iter().enumerate() {
            let s: f64 = row.iter().sum();
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) || (s - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!("transition row {i} is not a distribution")));
            }
        }
        for (name, means, band) in [("hr_mean", &self.hr_mean, HR_BAND), ("br_mean", &self.br_mean, BR_BAND)] {
            if means.iter().any(|&m| m < band.0 || m > band.1) {
                return Err(Error::Config(format!("{name} outside {}..{}", band.0, band.1)));
            }
        }
        let stds = self.hr_std.iter().chain(&self.br_std).chain([
            &self.subject_hr_offset_std,
            &self.subject_br_offset_std,
            &self.hr_artifact_std,
            &self.br_artifact_std,
        ]);
        if stds.into_iter().any(|&s| !(s >= 0.0 && s.is_finite())) {
            return Err(Error::Config("standard deviations must be finite and >= 0".into()));
        }
        if self.rem_br_var_boost < 1.0 {
            return Err(Error::Config("rem_br_var_boost must be >= 1".into()));
        }
        if self.noise_corr_s <= 0.0 || self.mean_time_constant_s <= 0.0 {
            return Err(Error::Config("time constants must be positive".into()));
        }
        if self.dropout_block_s == 0 {
            return Err(Error::Config("dropout_block_s must be at least 1".into()));
        }
        check_prob("dropout_rate_wake", self.dropout_rate_wake)?;
        check_prob("dropout_rate_sleep", self.dropout_rate_sleep)?;
        check_prob("out_of_bed_rate", self.out_of_bed_rate)?;
        self.video.validate()
    }
}
