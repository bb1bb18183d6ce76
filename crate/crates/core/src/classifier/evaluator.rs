use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{balanced_accuracy, train, ConfusionCounts, SvmConfig};
use crate::error::{Error, Result};
use crate::genome::Genome;
use crate::segments::{ClassLabel, SegmentRecord, Split};
use crate::texture::FeatureMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Balanced accuracy on the validation split (the search fitness).
    pub val: f64,
    /// Balanced accuracy on the test split (reporting only).
    pub test: f64,
    pub active_columns: usize,
}

/// Scores genomes by training an SVM on their band columns. Results are
/// memoized by genome and safe to request from several threads.
pub struct GenomeEvaluator {
    features: FeatureMatrix,
    labels: Vec<ClassLabel>,
    train_rows: Vec<usize>,
    val_rows: Vec<usize>,
    test_rows: Vec<usize>,
    config: SvmConfig,
    memo: Mutex<HashMap<Genome, Evaluation>>,
    trainings: AtomicUsize,
}

fn require_both_classes(rows: &[usize], labels: &[ClassLabel], split: Split) -> Result<()> {
    let pos = rows.iter().filter(|&&r| labels[r] == ClassLabel::NonForest).count();
    if pos == 0 || pos == rows.len() {
        return Err(Error::Stratification(format!(
            "{split} split needs both classes ({} rows, {pos} non-forest)",
            rows.len()
        )));
    }
    Ok(())
}

impl GenomeEvaluator {
    pub fn new(features: FeatureMatrix, labels: Vec<ClassLabel>, splits: &[Split], config: SvmConfig) -> Result<Self> {
        if labels.len() != features.rows() || splits.len() != features.rows() {
            return Err(Error::Validation(format!(
                "{} feature rows, {} labels, {} split tags",
                features.rows(),
                labels.len(),
                splits.len()
            )));
        }
        let rows_of = |s: Split| -> Vec<usize> { (0..splits.len()).filter(|&i| splits[i] == s).collect() };
        let (train_rows, val_rows, test_rows) = (rows_of(Split::Train), rows_of(Split::Val), rows_of(Split::Test));
        require_both_classes(&train_rows, &labels, Split::Train)?;
        require_both_classes(&val_rows, &labels, Split::Val)?;
        require_both_classes(&test_rows, &labels, Split::Test)?;
        Ok(GenomeEvaluator {
            features,
            labels,
            train_rows,
            val_rows,
            test_rows,
            config,
            memo: Mutex::new(HashMap::new()),
            trainings: AtomicUsize::new(0),
        })
    }

    /// Matches feature rows to records by `(scene_id, segment_id)`.
    pub fn from_records(features: FeatureMatrix, records: &[SegmentRecord], config: SvmConfig) -> Result<Self> {
        let index: HashMap<(&str, u32), &SegmentRecord> = records
            .iter()
            .map(|r| ((r.scene_id.as_str(), r.segment_id), r))
            .collect();
        let mut labels = Vec::with_capacity(features.rows());
        let mut splits = Vec::with_capacity(features.rows());
        for r in 0..features.rows() {
            let key = (features.scene_ids[r].as_str(), features.segment_ids[r]);
            let rec = index.get(&key).ok_or_else(|| {
                Error::Validation(format!("feature row for {}/{} has no segment record", key.0, key.1))
            })?;
            labels.push(rec.label);
            splits.push(rec.split);
        }
        Self::new(features, labels, &splits, config)
    }

    pub fn bands(&self) -> usize {
        self.features.bands
    }

    pub fn config(&self) -> &SvmConfig {
        &self.config
    }

    /// Number of SVMs actually trained (memo misses).
    pub fn trainings(&self) -> usize {
        self.trainings.load(Ordering::Relaxed)
    }

    pub fn split_sizes(&self) -> (usize, usize, usize) {
        (self.train_rows.len(), self.val_rows.len(), self.test_rows.len())
    }

    fn gather(&self, rows: &[usize], columns: &[usize]) -> Vec<f64> {
        let mut out = Vec::with_capacity(rows.len() * columns.len());
        for &r in rows {
            let row = self.features.row(r);
            out.extend(columns.iter().map(|&c| row[c]));
        }
        out
    }

    fn score(&self, model: &super::SvmModel, rows: &[usize], columns: &[usize]) -> Result<f64> {
        let x = self.gather(rows, columns);
        let truth: Vec<ClassLabel> = rows.iter().map(|&r| self.labels[r]).collect();
        balanced_accuracy(&ConfusionCounts::from_predictions(&truth, &model.predict_all(&x)))
    }

    pub fn evaluate(&self, genome: &Genome) -> Result<Evaluation> {
        if genome.is_empty() {
            return Err(Error::Parameter("genome selects no band".into()));
        }
        if let Some(hit) = self.memo.lock().expect("memo poisoned").get(genome) {
            return Ok(*hit);
        }
        let columns = self.features.genome_columns(genome)?;
        let x = self.gather(&self.train_rows, &columns);
        let y: Vec<ClassLabel> = self.train_rows.iter().map(|&r| self.labels[r]).collect();
        let model = train(&x, columns.len(), &y, &self.config)?;
        self.trainings.fetch_add(1, Ordering::Relaxed);
        let eval = Evaluation {
            val: self.score(&model, &self.val_rows, &columns)?,
            test: self.score(&model, &self.test_rows, &columns)?,
            active_columns: columns.len(),
        };
        Ok(*self
            .memo
            .lock()
            .expect("memo poisoned")
            .entry(*genome)
            .or_insert(eval))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::texture::FEATURES_PER_BAND;

    /// Two bands: band 1 separates the classes, band 2 is noise. Every positive
    /// row lands in train; callers move some into val/test.
    fn toy() -> (FeatureMatrix, Vec<ClassLabel>, Vec<Split>) {
        let rows = 120;
        let mut data = Vec::new();
        let mut labels = Vec::new();
        let mut splits = Vec::new();
        for r in 0..rows {
            let pos = r % 5 == 0;
            for c in 0..2 * FEATURES_PER_BAND {
                let noise = (((r * 131 + c * 17) % 97) as f64) / 97.0;
                let v = if c < FEATURES_PER_BAND && pos { 3.0 + noise } else { noise };
                data.push(v);
            }
            labels.push(if pos { ClassLabel::NonForest } else { ClassLabel::Forest });
            splits.push(match r % 10 {
                0..=6 => Split::Train,
                7 | 8 => Split::Val,
                _ => Split::Test,
            });
        }
        let fm = FeatureMatrix {
            bands: 2,
            scene_ids: vec!["s".into(); rows],
            segment_ids: (0..rows as u32).collect(),
            data,
        };
        (fm, labels, splits)
    }

    #[test]
    fn genome_slices_its_band_blocks() {
        let (fm, labels, mut splits) = toy();
        splits[5] = Split::Val;
        splits[15] = Split::Test;
        let ev = GenomeEvaluator::new(fm, labels, &splits, SvmConfig::default()).unwrap();
        let band1 = ev.evaluate(&"10".parse().unwrap()).unwrap();
        assert_eq!(band1.active_columns, 52);
        assert_eq!(band1.val, 1.0);
        let both = ev.evaluate(&"11".parse().unwrap()).unwrap();
        assert_eq!(both.active_columns, 104);
        assert!(ev.evaluate(&"00".parse().unwrap()).is_err());
    }

    #[test]
    fn memoized_scores_are_stable() {
        let (fm, labels, mut splits) = toy();
        splits[5] = Split::Val;
        splits[15] = Split::Test;
        let ev = GenomeEvaluator::new(fm, labels, &splits, SvmConfig::default()).unwrap();
        let g: Genome = "01".parse().unwrap();
        let a = ev.evaluate(&g).unwrap();
        let b = ev.evaluate(&g).unwrap();
        assert_eq!(a, b);
        assert_eq!(ev.trainings(), 1);
        assert!((0.0..=1.0).contains(&a.val) && (0.0..=1.0).contains(&a.test));
    }

    #[test]
    fn split_without_minority_is_rejected() {
        let (fm, labels, splits) = toy();
        let splits: Vec<Split> = splits
            .iter()
            .enumerate()
            .map(|(r, &s)| if labels[r] == ClassLabel::NonForest { Split::Train } else { s })
            .collect();
        assert!(matches!(
            GenomeEvaluator::new(fm, labels, &splits, SvmConfig::default()),
            Err(Error::Stratification(_))
        ));
    }
}
