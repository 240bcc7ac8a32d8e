//! Sleep staging from near-infrared video.
//!
//! The crate is organised as a pipeline of independent stages:
//!
//! - [`stage`] and [`series`]: shared domain types (sleep stages, merging schemes,
//!   1 Hz vital-sign series, recordings).
//! - [`synth`]: deterministic generators for hypnograms, vital signs, contact
//!   waveforms and NIR video, used in place of restricted clinical data.
//! - [`vitals`]: heart rate from ECG (Pan-Tompkins + rolling FFT) and breathing
//!   rate from RIP (peak intervals) with agreement-based quality flags.
//! - [`flow`]: homography rectification, dense inverse search optical flow and
//!   the two-region 4 Hz activity signals.
//! - [`features`]: the 20 per-epoch motion features and the 6-feature
//!   vital-sign baseline.
//! - [`deepnet`]: the dual-window 1D ResNet + MLP stager used as a 32-d
//!   feature extractor.
//! - [`forest`]: random forest classifier over feature matrices.
//! - [`eval`]: metrics, cross-validation and the study/ablation runner.
//! - [`pipeline`]: the end-to-end synthetic study.
//!
//! Data-parallel loops go through [`par`], which uses rayon when the
//! `parallel` feature is enabled and plain iteration otherwise. Results are
//! identical either way.

// Negated comparisons are how NaN is rejected throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod deepnet;
pub mod error;
pub mod eval;
pub mod features;
pub mod flow;
pub mod forest;
pub mod io;
pub mod par;
pub mod pipeline;
pub mod rng;
pub mod series;
pub mod stage;
pub mod synth;
pub mod vitals;

pub use error::{Error, Result};
pub use series::{Recording, VitalKind, VitalSeries};
pub use stage::{Hypnogram, LabelSeq, SleepStage, StageScheme};

/// Version of every file format written by this crate (weights, forests,
/// reports, manifests, pipeline configs).
pub const FORMAT_VERSION: &str = "1";

/// Scoring epoch length in seconds.
pub const EPOCH_SECONDS: usize = 30;
