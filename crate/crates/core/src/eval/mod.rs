//! Metrics, cross-validation by recording and the ablation study runner.

mod metrics;
mod study;

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub use metrics::{accuracy, confusion, coverage, kappa, sw_rates, ConfusionMatrix, MeanStd};
pub use study::{
    report_csv, run_study, Arm, BlockReport, BlockSpec, EvalConfig, FeatureBlock, FoldRecord, ForestLearner,
    Learner, RecordingMetrics, SqiMode, StudyOutcome, StudyRecording, StudyReport,
};

/// Recording ids partitioned into `k` folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub folds: Vec<Vec<String>>,
}

impl FoldPlan {
    pub fn k(&self) -> usize {
        self.folds.len()
    }

    pub fn fold_of(&self, id: &str) -> Option<usize> {
        self.folds.iter().position(|f| f.iter().any(|x| x == id))
    }
}

/// Seeded shuffle of `ids`, then dealt round-robin into `k` folds.
pub fn kfold_split(ids: &[String], k: usize, seed: u64) -> Result<FoldPlan> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if k > ids.len() {
        return Err(Error::KTooLarge { k, n: ids.len() });
    }
    if ids.iter().collect::<BTreeSet<_>>().len() != ids.len() {
        return Err(Error::Config("recording ids must be unique".into()));
    }
    let mut shuffled = ids.to_vec();
    shuffled.shuffle(&mut rng::stream(seed, "eval/kfold"));
    let mut folds = vec![Vec::new(); k];
    for (i, id) in shuffled.into_iter().enumerate() {
        folds[i % k].push(id);
    }
    Ok(FoldPlan { folds })
}
