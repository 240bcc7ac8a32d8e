//! Per-epoch hand-crafted features: 20 motion features from the two activity
//! signals and 6 baseline features from heart and breathing rate.

mod baseline;
mod motion;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::par;
use crate::series::Recording;

pub use baseline::{
    baseline_features, baseline_features_all, percentile, BaselineFeatureVector, BaselineParams,
    BASELINE_FEATURE_NAMES, N_BASELINE,
};
pub use motion::{
    motion_features, motion_features_at, motion_features_with, n_epochs_covered, MotionFeatureVector, MotionParams,
    MOTION_FEATURE_NAMES, N_MOTION,
};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureParams {
    pub motion: MotionParams,
    pub baseline: BaselineParams,
}

/// Motion and baseline features for every scored epoch of a recording.
pub fn recording_features(
    rec: &Recording,
    p: &FeatureParams,
) -> Result<(Vec<MotionFeatureVector>, Vec<BaselineFeatureVector>)> {
    let n = rec.hypnogram.len();
    let motion = par::try_map_range(n, |e| motion_features_with(&rec.activity, e, &p.motion))
        .map_err(|e| e.in_recording(&rec.id))?;
    let base = baseline_features_all(&rec.hr, &rec.br, n, &p.baseline).map_err(|e| e.in_recording(&rec.id))?;
    Ok((motion, base))
}
