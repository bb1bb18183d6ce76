use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::segments::ClassLabel;

/// Binary confusion counts; the positive class is non-forest.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fn_: usize,
    pub tn: usize,
    pub fp: usize,
}

impl ConfusionCounts {
    pub fn from_predictions(truth: &[ClassLabel], predicted: &[ClassLabel]) -> Self {
        let mut c = ConfusionCounts::default();
        for (t, p) in truth.iter().zip(predicted) {
            match (t, p) {
                (ClassLabel::NonForest, ClassLabel::NonForest) => c.tp += 1,
                (ClassLabel::NonForest, ClassLabel::Forest) => c.fn_ += 1,
                (ClassLabel::Forest, ClassLabel::Forest) => c.tn += 1,
                (ClassLabel::Forest, ClassLabel::NonForest) => c.fp += 1,
            }
        }
        c
    }

    pub fn positives(&self) -> usize {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> usize {
        self.tn + self.fp
    }
}

/// Mean of the two per-class recalls. Errors when either class is absent.
pub fn balanced_accuracy(c: &ConfusionCounts) -> Result<f64> {
    if c.positives() == 0 || c.negatives() == 0 {
        return Err(Error::Degenerate(format!(
            "balanced accuracy needs both classes (positives {}, negatives {})",
            c.positives(),
            c.negatives()
        )));
    }
    let tpr = c.tp as f64 / c.positives() as f64;
    let tnr = c.tn as f64 / c.negatives() as f64;
    Ok((tpr + tnr) / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts(tp: usize, fn_: usize, tn: usize, fp: usize) -> ConfusionCounts {
        ConfusionCounts { tp, fn_, tn, fp }
    }

    #[test]
    fn worked_values() {
        assert_eq!(balanced_accuracy(&counts(50, 0, 50, 0)).unwrap(), 1.0);
        assert!((balanced_accuracy(&counts(90, 10, 30, 70)).unwrap() - 0.60).abs() < 1e-15);
        assert_eq!(balanced_accuracy(&counts(0, 10, 90, 0)).unwrap(), 0.5);
    }

    #[test]
    fn missing_class_is_an_error() {
        assert!(balanced_accuracy(&counts(0, 0, 5, 5)).is_err());
        assert!(balanced_accuracy(&counts(3, 2, 0, 0)).is_err());
    }

    #[test]
    fn counts_from_predictions() {
        use ClassLabel::*;
        let truth = [NonForest, NonForest, Forest, Forest, Forest];
        let pred = [NonForest, Forest, Forest, NonForest, Forest];
        assert_eq!(ConfusionCounts::from_predictions(&truth, &pred), counts(1, 1, 2, 1));
    }
}
