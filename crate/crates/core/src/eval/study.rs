use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::{self, FeatureMatrix, ForestConfig};
use crate::stage::{map_hypnogram, Hypnogram, LabelSeq, StageScheme};
use crate::{par, rng, FORMAT_VERSION};

use super::metrics::{accuracy, kappa, sw_rates, ConfusionMatrix, MeanStd};
use super::{kfold_split, FoldPlan};

/// Feature combination compared in the ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Arm {
    #[serde(rename = "FE")]
    Baseline,
    #[serde(rename = "FE+M")]
    BaselineMotion,
    #[serde(rename = "DF")]
    Deep,
    #[serde(rename = "DF+M")]
    DeepMotion,
}

impl Arm {
    pub const ALL: [Arm; 4] = [Arm::Baseline, Arm::BaselineMotion, Arm::Deep, Arm::DeepMotion];

    pub fn name(self) -> &'static str {
        match self {
            Arm::Baseline => "FE",
            Arm::BaselineMotion => "FE+M",
            Arm::Deep => "DF",
            Arm::DeepMotion => "DF+M",
        }
    }

    pub fn uses_deep(self) -> bool {
        matches!(self, Arm::Deep | Arm::DeepMotion)
    }

    fn blocks(self) -> &'static [FeatureBlock] {
        match self {
            Arm::Baseline => &[FeatureBlock::Baseline],
            Arm::BaselineMotion => &[FeatureBlock::Baseline, FeatureBlock::Motion],
            Arm::Deep => &[FeatureBlock::Deep],
            Arm::DeepMotion => &[FeatureBlock::Deep, FeatureBlock::Motion],
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Whether deep features come from the extractor that saw zero-filled
/// (filtered) or unmodified (raw) vital signs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SqiMode {
    Filtered,
    Raw,
}

impl SqiMode {
    pub fn name(self) -> &'static str {
        match self {
            SqiMode::Filtered => "filtered",
            SqiMode::Raw => "raw",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureBlock {
    Baseline,
    Motion,
    Deep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub arm: Arm,
    pub scheme: StageScheme,
    pub sqi: SqiMode,
}

impl BlockSpec {
    pub fn name(&self) -> String {
        format!("{}/{}/{}", self.arm, self.scheme.cli_name(), self.sqi.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub k: usize,
    /// Arms evaluated on four-class labels.
    pub arms: Vec<Arm>,
    /// Label schemes the primary arm is re-trained and evaluated on.
    pub strategies: Vec<StageScheme>,
    pub primary_arm: Arm,
    /// Also evaluate the primary arm on features from the raw-input extractor.
    pub sqi_ablation: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            k: 10,
            arms: Arm::ALL.to_vec(),
            strategies: vec![StageScheme::SleepWake, StageScheme::ThreeClass, StageScheme::FourClass],
            primary_arm: Arm::DeepMotion,
            sqi_ablation: true,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("eval.k must be at least 1".into()));
        }
        Ok(())
    }

    /// Every evaluated block, in report order.
    pub fn blocks(&self) -> Vec<BlockSpec> {
        let mut out: Vec<BlockSpec> = Vec::new();
        let mut push = |b: BlockSpec| {
            if !out.contains(&b) {
                out.push(b);
            }
        };
        for &arm in &self.arms {
            push(BlockSpec { arm, scheme: StageScheme::FourClass, sqi: SqiMode::Filtered });
        }
        for &scheme in &self.strategies {
            push(BlockSpec { arm: self.primary_arm, scheme, sqi: SqiMode::Filtered });
        }
        if self.sqi_ablation && self.primary_arm.uses_deep() {
            push(BlockSpec { arm: self.primary_arm, scheme: StageScheme::FourClass, sqi: SqiMode::Raw });
        }
        out
    }

    pub fn primary_block(&self) -> BlockSpec {
        BlockSpec { arm: self.primary_arm, scheme: StageScheme::FourClass, sqi: SqiMode::Filtered }
    }
}

/// Per-epoch features of one recording, one row per epoch.
#[derive(Debug, Clone)]
pub struct StudyRecording {
    pub id: String,
    pub hypnogram: Hypnogram,
    pub baseline: FeatureMatrix,
    pub motion: FeatureMatrix,
    pub deep: Option<FeatureMatrix>,
    pub deep_raw: Option<FeatureMatrix>,
    /// Heart and breathing rate coverage in percent.
    pub coverage: Option<(f64, f64)>,
}

impl StudyRecording {
    fn matrix(&self, arm: Arm, sqi: SqiMode) -> Result<FeatureMatrix> {
        let mut parts = Vec::new();
        for b in arm.blocks() {
            parts.push(match b {
                FeatureBlock::Baseline => &self.baseline,
                FeatureBlock::Motion => &self.motion,
                FeatureBlock::Deep => match sqi {
                    SqiMode::Filtered => self.deep.as_ref(),
                    SqiMode::Raw => self.deep_raw.as_ref(),
                }
                .ok_or_else(|| Error::InsufficientData(format!("no {} deep features", sqi.name())))?,
            });
        }
        let m = FeatureMatrix::hstack(&parts)?;
        if m.n_rows() != self.hypnogram.len() {
            return Err(Error::LengthMismatch(format!(
                "{} feature rows for {} epochs",
                m.n_rows(),
                self.hypnogram.len()
            )));
        }
        Ok(m)
    }
}

/// Trains on one fold's training rows and labels the test rows.
pub trait Learner: Sync {
    fn fit_predict(
        &self,
        train: &FeatureMatrix,
        labels: &[usize],
        n_classes: usize,
        test: &FeatureMatrix,
        seed: u64,
    ) -> Result<Vec<usize>>;
}

pub struct ForestLearner(pub ForestConfig);

impl Learner for ForestLearner {
    fn fit_predict(
        &self,
        train: &FeatureMatrix,
        labels: &[usize],
        n_classes: usize,
        test: &FeatureMatrix,
        seed: u64,
    ) -> Result<Vec<usize>> {
        let cfg = ForestConfig { seed, ..self.0.clone() };
        forest::fit(train, labels, n_classes, &cfg)?.predict(test)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingMetrics {
    pub id: String,
    pub fold: usize,
    pub n_epochs: usize,
    pub kappa: f64,
    pub accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tpr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tnr: Option<f64>,
    pub confusion: ConfusionMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockReport {
    pub name: String,
    pub arm: Arm,
    pub scheme: StageScheme,
    pub sqi: SqiMode,
    pub classes: Vec<String>,
    pub features: Vec<String>,
    pub recordings: Vec<RecordingMetrics>,
    pub kappa: MeanStd,
    pub accuracy: MeanStd,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tpr: Option<MeanStd>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tnr: Option<MeanStd>,
    /// Sum of the per-recording matrices.
    pub pooled_confusion: ConfusionMatrix,
    pub pooled_kappa: f64,
    pub pooled_accuracy: f64,
}

/// Recordings whose epochs were used for training and testing in one fold,
/// taken from the row tags of the matrices actually handed to the learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub index: usize,
    pub test_ids: Vec<String>,
    pub train_ids: Vec<String>,
    pub n_train_epochs: usize,
    pub n_test_epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageEntry {
    pub id: String,
    pub hr: f64,
    pub br: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub hr: MeanStd,
    pub br: MeanStd,
    pub recordings: Vec<CoverageEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub format_version: String,
    pub seed: u64,
    pub k: usize,
    pub folds: Vec<FoldRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coverage: Option<CoverageReport>,
    pub blocks: Vec<BlockReport>,
}

impl StudyReport {
    pub fn block(&self, spec: &BlockSpec) -> Option<&BlockReport> {
        self.blocks.iter().find(|b| b.arm == spec.arm && b.scheme == spec.scheme && b.sqi == spec.sqi)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises") + "\n"
    }
}

#[derive(Debug, Clone)]
pub struct StudyOutcome {
    pub report: StudyReport,
    pub plan: FoldPlan,
    /// Model labels of the primary block per recording, in input order.
    pub predictions: Vec<(String, LabelSeq)>,
}

struct FoldResult {
    record: FoldRecord,
    predictions: Vec<(usize, Vec<usize>)>,
}

#[allow(clippy::too_many_arguments)]
fn run_fold(
    fold: usize,
    fold_of: &[usize],
    recs: &[StudyRecording],
    xs: &[FeatureMatrix],
    ys: &[Vec<usize>],
    n_classes: usize,
    learner: &dyn Learner,
    seed: u64,
) -> Result<FoldResult> {
    let test_idx: Vec<usize> = (0..recs.len()).filter(|&r| fold_of[r] == fold).collect();
    let train_idx: Vec<usize> = (0..recs.len()).filter(|&r| fold_of[r] != fold).collect();
    let stack = |idx: &[usize]| -> Result<(FeatureMatrix, Vec<usize>, Vec<usize>)> {
        let parts: Vec<&FeatureMatrix> = idx.iter().map(|&r| &xs[r]).collect();
        let tags = idx.iter().flat_map(|&r| std::iter::repeat_n(r, xs[r].n_rows())).collect();
        let labels = idx.iter().flat_map(|&r| ys[r].iter().copied()).collect();
        Ok((FeatureMatrix::vstack(&parts)?, labels, tags))
    };
    let (train_x, train_y, train_tags) = stack(&train_idx)?;
    let (test_x, _, test_tags) = stack(&test_idx)?;
    if let Some(&leak) = train_tags.iter().find(|&&r| fold_of[r] == fold) {
        return Err(Error::Config(format!(
            "fold {fold}: training rows from test recording {}",
            recs[leak].id
        )));
    }
    let pred = learner.fit_predict(&train_x, &train_y, n_classes, &test_x, seed)?;
    if pred.len() != test_x.n_rows() {
        return Err(Error::LengthMismatch(format!(
            "learner returned {} labels for {} rows",
            pred.len(),
            test_x.n_rows()
        )));
    }
    let mut predictions = Vec::new();
    let mut start = 0;
    for &r in &test_idx {
        let n = xs[r].n_rows();
        predictions.push((r, pred[start..start + n].to_vec()));
        start += n;
    }
    let ids_of = |tags: &[usize]| -> Vec<String> {
        tags.iter().collect::<BTreeSet<_>>().into_iter().map(|&r| recs[r].id.clone()).collect()
    };
    Ok(FoldResult {
        record: FoldRecord {
            index: fold,
            test_ids: ids_of(&test_tags),
            train_ids: ids_of(&train_tags),
            n_train_epochs: train_tags.len(),
            n_test_epochs: test_tags.len(),
        },
        predictions,
    })
}

/// Cross-validates every configured block: folds by recording, the learner
/// re-trained per fold on out-of-fold epochs, metrics per recording and pooled.
pub fn run_study(recs: &[StudyRecording], cfg: &EvalConfig, learner: &dyn Learner, seed: u64) -> Result<StudyOutcome> {
    cfg.validate()?;
    let ids: Vec<String> = recs.iter().map(|r| r.id.clone()).collect();
    let plan = kfold_split(&ids, cfg.k, seed)?;
    let fold_of: Vec<usize> = ids.iter().map(|id| plan.fold_of(id).expect("every id is in a fold")).collect();
    let learner_seed = rng::derive(seed, "eval/learner");
    let primary = cfg.primary_block();

    let mut blocks = Vec::new();
    let mut folds: Option<Vec<FoldRecord>> = None;
    let mut predictions = Vec::new();
    for spec in cfg.blocks() {
        let xs = recs
            .iter()
            .map(|r| r.matrix(spec.arm, spec.sqi).map_err(|e| e.in_recording(&r.id)))
            .collect::<Result<Vec<_>>>()?;
        let ys: Vec<Vec<usize>> = recs.iter().map(|r| map_hypnogram(&r.hypnogram, spec.scheme).labels).collect();
        let n_classes = spec.scheme.n_classes();
        let results = par::try_map_range(cfg.k, |f| {
            run_fold(f, &fold_of, recs, &xs, &ys, n_classes, learner, rng::derive_index(learner_seed, f as u64))
        })?;

        let mut per_rec: Vec<Option<Vec<usize>>> = vec![None; recs.len()];
        for res in &results {
            for (r, p) in &res.predictions {
                per_rec[*r] = Some(p.clone());
            }
        }
        let mut metrics = Vec::with_capacity(recs.len());
        let mut pooled = ConfusionMatrix::zeros(n_classes);
        for (r, rec) in recs.iter().enumerate() {
            let pred = per_rec[r].as_ref().expect("every recording is tested once");
            let m = ConfusionMatrix::from_labels(n_classes, &ys[r], pred)?;
            let (tpr, tnr) = if spec.scheme == StageScheme::SleepWake { sw_rates(&m)? } else { (None, None) };
            pooled.add(&m)?;
            metrics.push(RecordingMetrics {
                id: rec.id.clone(),
                fold: fold_of[r],
                n_epochs: pred.len(),
                kappa: kappa(&m)?,
                accuracy: accuracy(&m)?,
                tpr,
                tnr,
                confusion: m,
            });
        }
        if spec == primary {
            predictions = recs
                .iter()
                .zip(&per_rec)
                .map(|(rec, p)| {
                    (rec.id.clone(), LabelSeq { scheme: spec.scheme, labels: p.clone().expect("predicted") })
                })
                .collect();
        }
        let collect = |f: fn(&RecordingMetrics) -> Option<f64>| metrics.iter().filter_map(f).collect::<Vec<_>>();
        blocks.push(BlockReport {
            name: spec.name(),
            arm: spec.arm,
            scheme: spec.scheme,
            sqi: spec.sqi,
            classes: spec.scheme.labels().iter().map(|s| s.to_string()).collect(),
            features: xs[0].names().to_vec(),
            kappa: MeanStd::of(&collect(|m| Some(m.kappa))).ok_or(Error::EmptyInput("no recordings".into()))?,
            accuracy: MeanStd::of(&collect(|m| Some(m.accuracy))).ok_or(Error::EmptyInput("no recordings".into()))?,
            tpr: MeanStd::of(&collect(|m| m.tpr)),
            tnr: MeanStd::of(&collect(|m| m.tnr)),
            pooled_kappa: kappa(&pooled)?,
            pooled_accuracy: accuracy(&pooled)?,
            pooled_confusion: pooled,
            recordings: metrics,
        });
        folds.get_or_insert_with(|| results.into_iter().map(|r| r.record).collect());
    }

    let coverage = recs
        .iter()
        .map(|r| r.coverage.map(|(hr, br)| CoverageEntry { id: r.id.clone(), hr, br }))
        .collect::<Option<Vec<_>>>()
        .and_then(|entries| {
            let hr = MeanStd::of(&entries.iter().map(|e| e.hr).collect::<Vec<_>>())?;
            let br = MeanStd::of(&entries.iter().map(|e| e.br).collect::<Vec<_>>())?;
            Some(CoverageReport { hr, br, recordings: entries })
        });

    Ok(StudyOutcome {
        report: StudyReport {
            format_version: FORMAT_VERSION.into(),
            seed,
            k: cfg.k,
            folds: folds.unwrap_or_default(),
            coverage,
            blocks,
        },
        plan,
        predictions,
    })
}

/// Per-recording rows of every block as CSV.
pub fn report_csv(report: &StudyReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["block", "id", "fold", "n_epochs", "kappa", "accuracy", "tpr", "tnr"])
        .expect("in-memory write");
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for b in &report.blocks {
        for m in &b.recordings {
            w.write_record([
                b.name.clone(),
                m.id.clone(),
                m.fold.to_string(),
                m.n_epochs.to_string(),
                m.kappa.to_string(),
                m.accuracy.to_string(),
                opt(m.tpr),
                opt(m.tnr),
            ])
            .expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_blocks() {
        let names: Vec<String> = EvalConfig::default().blocks().iter().map(|b| b.name()).collect();
        assert_eq!(
            names,
            [
                "FE/four-class/filtered",
                "FE+M/four-class/filtered",
                "DF/four-class/filtered",
                "DF+M/four-class/filtered",
                "DF+M/sleep-wake/filtered",
                "DF+M/three-class/filtered",
                "DF+M/four-class/raw",
            ]
        );
    }

    #[test]
    fn arm_names_roundtrip() {
        let s = serde_json::to_string(&Arm::ALL).unwrap();
        assert_eq!(s, r#"["FE","FE+M","DF","DF+M"]"#);
        let back: Vec<Arm> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, Arm::ALL);
    }
}
