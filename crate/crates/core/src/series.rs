//! 1 Hz vital-sign series and recording containers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::ActivitySeries;
use crate::stage::Hypnogram;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VitalKind {
    /// Beats per minute.
    HeartRate,
    /// Breaths per minute.
    BreathingRate,
}

/// 1 Hz rate estimates with a per-sample binary quality flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VitalSeries {
    pub kind: VitalKind,
    values: Vec<f64>,
    sqi: Vec<bool>,
}

impl VitalSeries {
    pub const RATE_HZ: f64 = 1.0;

    pub fn new(kind: VitalKind, values: Vec<f64>, sqi: Vec<bool>) -> Result<Self> {
        if values.len() != sqi.len() {
            return Err(Error::LengthMismatch(format!(
                "{} values vs {} quality flags",
                values.len(),
                sqi.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::DegenerateSeries(format!(
                "sample {i} is negative or non-finite ({})",
                values[i]
            )));
        }
        Ok(VitalSeries { kind, values, sqi })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sqi(&self) -> &[bool] {
        &self.sqi
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// One night: labels, vitals, activity and the in-bed channel.
#[derive(Debug, Clone)]
pub struct Recording {
    pub id: String,
    pub hypnogram: Hypnogram,
    pub hr: VitalSeries,
    pub br: VitalSeries,
    pub activity: ActivitySeries,
    /// Per-second in-bed flag.
    pub occupancy: Vec<bool>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_length_mismatch() {
        assert!(VitalSeries::new(VitalKind::HeartRate, vec![60.0; 3], vec![true; 2]).is_err());
    }

    #[test]
    fn rejects_negative() {
        assert!(VitalSeries::new(VitalKind::HeartRate, vec![-1.0], vec![true]).is_err());
    }
}
