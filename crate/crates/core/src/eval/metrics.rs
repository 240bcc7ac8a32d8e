use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::VitalSeries;
use crate::stage::{LabelSeq, StageScheme};

/// Class-by-class counts; rows are the reference scorer, columns the model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn zeros(n_classes: usize) -> Self {
        ConfusionMatrix { counts: vec![vec![0; n_classes]; n_classes] }
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let c = counts.len();
        if counts.iter().any(|r| r.len() != c) {
            return Err(Error::ShapeMismatch("confusion matrix must be square".into()));
        }
        Ok(ConfusionMatrix { counts })
    }

    /// Tally of paired class indices.
    pub fn from_labels(n_classes: usize, reference: &[usize], predicted: &[usize]) -> Result<Self> {
        if reference.len() != predicted.len() {
            return Err(Error::LengthMismatch(format!(
                "{} reference labels vs {} predictions",
                reference.len(),
                predicted.len()
            )));
        }
        let mut m = Self::zeros(n_classes);
        for (&r, &p) in reference.iter().zip(predicted) {
            if r >= n_classes || p >= n_classes {
                return Err(Error::ShapeMismatch(format!("label {} outside {n_classes} classes", r.max(p))));
            }
            m.counts[r][p] += 1;
        }
        Ok(m)
    }

    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n_classes()).map(|i| self.counts[i][i]).sum()
    }

    pub fn add(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.n_classes() != self.n_classes() {
            return Err(Error::ShapeMismatch("cannot add confusion matrices of different size".into()));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(())
    }
}

pub fn confusion(reference: &LabelSeq, predicted: &LabelSeq) -> Result<ConfusionMatrix> {
    if reference.scheme != predicted.scheme {
        return Err(Error::ShapeMismatch(format!(
            "reference is {} but prediction is {}",
            reference.scheme.cli_name(),
            predicted.scheme.cli_name()
        )));
    }
    ConfusionMatrix::from_labels(reference.scheme.n_classes(), &reference.labels, &predicted.labels)
}

/// Cohen's kappa. Returns 1 when chance agreement is already perfect.
///
/// Evaluated as `(n * trace - chance) / (n^2 - chance)` in integers, so the
/// only rounding is the final division.
pub fn kappa(m: &ConfusionMatrix) -> Result<f64> {
    let n = m.total() as i128;
    if n == 0 {
        return Err(Error::EmptyMatrix);
    }
    let c = m.n_classes();
    let mut chance = 0i128;
    for i in 0..c {
        let row: u64 = m.counts[i].iter().sum();
        let col: u64 = m.counts.iter().map(|r| r[i]).sum();
        chance += row as i128 * col as i128;
    }
    if chance == n * n {
        return Ok(1.0);
    }
    Ok((n * m.trace() as i128 - chance) as f64 / (n * n - chance) as f64)
}

pub fn accuracy(m: &ConfusionMatrix) -> Result<f64> {
    let n = m.total();
    if n == 0 {
        return Err(Error::EmptyMatrix);
    }
    Ok(m.trace() as f64 / n as f64)
}

/// (sensitivity, specificity) of a sleep/wake matrix with Sleep as the
/// positive class; `None` where the corresponding reference row is empty.
pub fn sw_rates(m: &ConfusionMatrix) -> Result<(Option<f64>, Option<f64>)> {
    if m.n_classes() != StageScheme::SleepWake.n_classes() {
        return Err(Error::ShapeMismatch(format!("sleep/wake rates need a 2x2 matrix, got {0}x{0}", m.n_classes())));
    }
    let rate = |row: &[u64], hit: usize| {
        let t = row[0] + row[1];
        (t > 0).then(|| row[hit] as f64 / t as f64)
    };
    Ok((rate(&m.counts[1], 1), rate(&m.counts[0], 0)))
}

/// Percentage of in-bed seconds with a good quality flag.
pub fn coverage(v: &VitalSeries, occupancy: &[bool]) -> Result<f64> {
    if v.len() != occupancy.len() {
        return Err(Error::LengthMismatch(format!("{} vital samples vs {} occupancy samples", v.len(), occupancy.len())));
    }
    let in_bed = occupancy.iter().filter(|b| **b).count();
    if in_bed == 0 {
        return Err(Error::NeverInBed);
    }
    let good = v.sqi().iter().zip(occupancy).filter(|(q, b)| **q && **b).count();
    Ok(100.0 * good as f64 / in_bed as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<MeanStd> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Some(MeanStd { mean, std: var.sqrt(), n: values.len() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::VitalKind;

    fn m(c: Vec<Vec<u64>>) -> ConfusionMatrix {
        ConfusionMatrix::from_counts(c).unwrap()
    }

    #[test]
    fn kappa_examples() {
        assert_eq!(kappa(&m(vec![vec![10, 0], vec![0, 10]])).unwrap(), 1.0);
        assert_eq!(kappa(&m(vec![vec![5, 5], vec![5, 5]])).unwrap(), 0.0);
        assert!((kappa(&m(vec![vec![45, 5], vec![15, 35]])).unwrap() - 0.6).abs() < 1e-15);
        assert_eq!(kappa(&m(vec![vec![0, 0], vec![0, 7]])).unwrap(), 1.0);
        assert!(matches!(kappa(&ConfusionMatrix::zeros(3)), Err(Error::EmptyMatrix)));
    }

    #[test]
    fn confusion_examples() {
        let r = LabelSeq { scheme: StageScheme::FourClass, labels: vec![0] };
        let p = LabelSeq { scheme: StageScheme::FourClass, labels: vec![3] };
        let c = confusion(&r, &p).unwrap();
        assert_eq!(c.counts[0][3], 1);
        assert_eq!(c.total(), 1);
        let short = LabelSeq { scheme: StageScheme::FourClass, labels: vec![] };
        assert!(matches!(confusion(&r, &short), Err(Error::LengthMismatch(_))));
    }

    #[test]
    fn sw_examples() {
        assert_eq!(sw_rates(&m(vec![vec![4, 0], vec![0, 6]])).unwrap(), (Some(1.0), Some(1.0)));
        assert_eq!(sw_rates(&m(vec![vec![3, 1], vec![2, 8]])).unwrap().0, Some(0.8));
        assert_eq!(sw_rates(&m(vec![vec![0, 0], vec![2, 8]])).unwrap().1, None);
        assert!(sw_rates(&ConfusionMatrix::zeros(3)).is_err());
    }

    #[test]
    fn coverage_examples() {
        let v = |q: Vec<bool>| VitalSeries::new(VitalKind::HeartRate, vec![60.0; q.len()], q).unwrap();
        assert_eq!(coverage(&v(vec![true; 4]), &[true; 4]).unwrap(), 100.0);
        assert_eq!(coverage(&v(vec![true, false, true, false]), &[true; 4]).unwrap(), 50.0);
        assert_eq!(coverage(&v(vec![false, true, true]), &[false, true, true]).unwrap(), 100.0);
        assert!(matches!(coverage(&v(vec![true]), &[false]), Err(Error::NeverInBed)));
    }

    #[test]
    fn mean_std() {
        let s = MeanStd::of(&[1.0, 3.0]).unwrap();
        assert_eq!((s.mean, s.std), (2.0, 1.0));
        assert!(MeanStd::of(&[]).is_none());
    }
}
