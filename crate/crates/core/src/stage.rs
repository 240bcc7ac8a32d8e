//! Sleep stages, class-merging schemes and hypnograms.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::EPOCH_SECONDS;

/// AASM sleep stage. Declaration order is the confusion-matrix axis order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SleepStage {
    Wake,
    N1,
    N2,
    N3,
    Rem,
}

impl SleepStage {
    pub const ALL: [SleepStage; 5] = [
        SleepStage::Wake,
        SleepStage::N1,
        SleepStage::N2,
        SleepStage::N3,
        SleepStage::Rem,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<SleepStage> {
        Self::ALL.get(i).copied()
    }

    /// CSV spelling.
    pub fn code(self) -> &'static str {
        match self {
            SleepStage::Wake => "W",
            SleepStage::N1 => "N1",
            SleepStage::N2 => "N2",
            SleepStage::N3 => "N3",
            SleepStage::Rem => "REM",
        }
    }
}

impl fmt::Display for SleepStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for SleepStage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "W" => Ok(SleepStage::Wake),
            "N1" => Ok(SleepStage::N1),
            "N2" => Ok(SleepStage::N2),
            "N3" => Ok(SleepStage::N3),
            "REM" => Ok(SleepStage::Rem),
            other => Err(format!("unknown stage {other:?} (expected W, N1, N2, N3 or REM)")),
        }
    }
}

/// Class-merging scheme applied to AASM labels before training/evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StageScheme {
    /// Wake, N1, N2, N3, REM.
    Aasm5,
    /// Wake, Light (N1+N2), N3, REM.
    FourClass,
    /// Wake, NREM (N1+N2+N3), REM.
    ThreeClass,
    /// Wake, Sleep.
    SleepWake,
}

impl StageScheme {
    pub const ALL: [StageScheme; 4] = [
        StageScheme::Aasm5,
        StageScheme::FourClass,
        StageScheme::ThreeClass,
        StageScheme::SleepWake,
    ];

    /// Class names in fixed axis order.
    pub fn labels(self) -> &'static [&'static str] {
        match self {
            StageScheme::Aasm5 => &["Wake", "N1", "N2", "N3", "REM"],
            StageScheme::FourClass => &["Wake", "Light", "N3", "REM"],
            StageScheme::ThreeClass => &["Wake", "NREM", "REM"],
            StageScheme::SleepWake => &["Wake", "Sleep"],
        }
    }

    pub fn n_classes(self) -> usize {
        self.labels().len()
    }

    /// Class index of `stage` under this scheme.
    pub fn map(self, stage: SleepStage) -> usize {
        use SleepStage::*;
        match (self, stage) {
            (_, Wake) => 0,
            (StageScheme::Aasm5, s) => s.index(),
            (StageScheme::FourClass, N1 | N2) => 1,
            (StageScheme::FourClass, N3) => 2,
            (StageScheme::FourClass, Rem) => 3,
            (StageScheme::ThreeClass, N1 | N2 | N3) => 1,
            (StageScheme::ThreeClass, Rem) => 2,
            (StageScheme::SleepWake, _) => 1,
        }
    }

    pub fn label_name(self, class: usize) -> &'static str {
        self.labels()[class]
    }

    pub fn cli_name(self) -> &'static str {
        match self {
            StageScheme::Aasm5 => "aasm5",
            StageScheme::FourClass => "four-class",
            StageScheme::ThreeClass => "three-class",
            StageScheme::SleepWake => "sleep-wake",
        }
    }
}

impl FromStr for StageScheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StageScheme::ALL
            .into_iter()
            .find(|sc| sc.cli_name() == s)
            .ok_or_else(|| {
                format!("unknown scheme {s:?} (expected aasm5, four-class, three-class or sleep-wake)")
            })
    }
}

/// Merged label for a single stage.
pub fn map_stage(stage: SleepStage, scheme: StageScheme) -> usize {
    scheme.map(stage)
}

/// A 30-s epoch sequence of AASM stages.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hypnogram {
    stages: Vec<SleepStage>,
}

impl Hypnogram {
    pub fn new(stages: Vec<SleepStage>) -> Result<Self> {
        if stages.is_empty() {
            return Err(Error::EmptyInput("hypnogram has no epochs".into()));
        }
        Ok(Hypnogram { stages })
    }

    pub fn epoch_duration_s(&self) -> usize {
        EPOCH_SECONDS
    }

    pub fn stages(&self) -> &[SleepStage] {
        &self.stages
    }

    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }

    pub fn duration_s(&self) -> usize {
        self.len() * EPOCH_SECONDS
    }

    /// Stage covering second `t` (clamped to the last epoch).
    pub fn stage_at_second(&self, t: usize) -> SleepStage {
        self.stages[(t / EPOCH_SECONDS).min(self.len() - 1)]
    }
}

/// A hypnogram expressed in a merged label space.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSeq {
    pub scheme: StageScheme,
    pub labels: Vec<usize>,
}

impl LabelSeq {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

pub fn map_hypnogram(h: &Hypnogram, scheme: StageScheme) -> LabelSeq {
    LabelSeq {
        scheme,
        labels: h.stages().iter().map(|&s| scheme.map(s)).collect(),
    }
}
