//! Soft-margin SVM on genome-selected feature columns.
//!
//! Columns are standardized on the training rows, classes are weighted by
//! inverse frequency (`C_class = C · N / (2 · N_class)`), and the model is
//! trained either by dual coordinate descent (linear) or SMO (RBF).

mod evaluator;
mod linear;
mod metrics;
mod scaler;
mod smo;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::segments::ClassLabel;

pub use evaluator::{Evaluation, GenomeEvaluator};
pub use metrics::{balanced_accuracy, ConfusionCounts};
pub use scaler::Scaler;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Linear,
    Rbf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmConfig {
    pub kernel: KernelKind,
    pub c: f64,
    pub tolerance: f64,
    /// Epoch cap for the linear solver; the RBF solver gets `max_epochs · n` iterations.
    pub max_epochs: usize,
    /// `None` picks `1 / (d · mean column variance)`.
    pub gamma: Option<f64>,
    pub standardize: bool,
    pub class_weighting: bool,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            kernel: KernelKind::Linear,
            c: 1.0,
            tolerance: 1e-4,
            max_epochs: 1000,
            gamma: None,
            standardize: true,
            class_weighting: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Decision {
    Linear {
        weights: Vec<f64>,
    },
    Kernel {
        support: Vec<f64>,
        coef: Vec<f64>,
        gamma: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub kernel: KernelKind,
    pub columns: usize,
    pub scaler: Option<Scaler>,
    /// Penalty multipliers `(forest, non-forest)`.
    pub class_weights: (f64, f64),
    pub bias: f64,
    /// Epochs (linear) or pair updates (RBF) used.
    pub iterations: usize,
    pub gap: f64,
    pub converged: bool,
    decision: Decision,
}

impl SvmModel {
    pub fn support_count(&self) -> usize {
        match &self.decision {
            Decision::Linear { .. } => 0,
            Decision::Kernel { coef, .. } => coef.len(),
        }
    }

    pub fn decision_value(&self, row: &[f64]) -> f64 {
        let scaled: Vec<f64>;
        let row = match &self.scaler {
            Some(s) => {
                let mut r = row.to_vec();
                s.transform_in_place(&mut r);
                scaled = r;
                &scaled[..]
            }
            None => row,
        };
        match &self.decision {
            Decision::Linear { weights } => {
                weights.iter().zip(row).map(|(w, x)| w * x).sum::<f64>() + self.bias
            }
            Decision::Kernel { support, coef, gamma } => {
                support
                    .chunks_exact(self.columns)
                    .zip(coef)
                    .map(|(sv, a)| a * smo::rbf(sv, row, *gamma))
                    .sum::<f64>()
                    + self.bias
            }
        }
    }

    pub fn predict(&self, row: &[f64]) -> ClassLabel {
        if self.decision_value(row) > 0.0 {
            ClassLabel::NonForest
        } else {
            ClassLabel::Forest
        }
    }

    /// Predictions for a row-major matrix with `self.columns` columns.
    pub fn predict_all(&self, data: &[f64]) -> Vec<ClassLabel> {
        data.chunks_exact(self.columns).map(|r| self.predict(r)).collect()
    }
}

/// Trains on a row-major `labels.len() × cols` matrix.
pub fn train(data: &[f64], cols: usize, labels: &[ClassLabel], config: &SvmConfig) -> Result<SvmModel> {
    if cols == 0 {
        return Err(Error::Parameter("no active feature columns".into()));
    }
    if data.len() != labels.len() * cols {
        return Err(Error::Validation(format!(
            "feature matrix has {} values, expected {} rows × {cols}",
            data.len(),
            labels.len()
        )));
    }
    if !(config.c > 0.0) || !(config.tolerance > 0.0) || config.max_epochs == 0 {
        return Err(Error::Parameter(
            "SVM needs c > 0, tolerance > 0 and max_epochs >= 1".into(),
        ));
    }
    let n_pos = labels.iter().filter(|&&l| l == ClassLabel::NonForest).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Degenerate(format!(
            "training set has a single class ({n_neg} forest, {n_pos} non-forest)"
        )));
    }

    let mut x = data.to_vec();
    let scaler = config.standardize.then(|| {
        let s = Scaler::fit(&x, cols);
        s.transform_in_place(&mut x);
        s
    });

    let n = labels.len() as f64;
    let class_weights = if config.class_weighting {
        (n / (2.0 * n_neg as f64), n / (2.0 * n_pos as f64))
    } else {
        (1.0, 1.0)
    };
    let y: Vec<f64> = labels.iter().map(|l| l.sign()).collect();
    let upper: Vec<f64> = labels
        .iter()
        .map(|l| {
            config.c
                * match l {
                    ClassLabel::Forest => class_weights.0,
                    ClassLabel::NonForest => class_weights.1,
                }
        })
        .collect();

    let model = match config.kernel {
        KernelKind::Linear => {
            let sol = linear::solve(&x, cols, &y, &upper, config.tolerance, config.max_epochs, config.seed);
            SvmModel {
                kernel: KernelKind::Linear,
                columns: cols,
                scaler,
                class_weights,
                bias: sol.bias,
                iterations: sol.epochs,
                gap: sol.gap,
                converged: sol.converged,
                decision: Decision::Linear { weights: sol.weights },
            }
        }
        KernelKind::Rbf => {
            let gamma = match config.gamma {
                Some(g) if g > 0.0 => g,
                Some(g) => return Err(Error::Parameter(format!("gamma must be > 0, got {g}"))),
                None => {
                    let var = Scaler::fit(&x, cols).sd.iter().map(|s| s * s).sum::<f64>() / cols as f64;
                    1.0 / (cols as f64 * var.max(1e-12))
                }
            };
            let max_iter = config.max_epochs.saturating_mul(labels.len());
            let sol = smo::solve(&x, cols, &y, &upper, gamma, config.tolerance, max_iter);
            let mut support = Vec::new();
            let mut coef = Vec::new();
            for (i, &a) in sol.alpha.iter().enumerate() {
                if a > 0.0 {
                    support.extend_from_slice(&x[i * cols..(i + 1) * cols]);
                    coef.push(a * y[i]);
                }
            }
            SvmModel {
                kernel: KernelKind::Rbf,
                columns: cols,
                scaler,
                class_weights,
                bias: -sol.rho,
                iterations: sol.iterations,
                gap: sol.gap,
                converged: sol.converged,
                decision: Decision::Kernel { support, coef, gamma },
            }
        }
    };
    Ok(model)
}
