//! Dual coordinate descent for the L1-loss linear SVM.
//!
//! Solves `min_α ½αᵀQα − eᵀα, 0 ≤ α_i ≤ C_i` with `Q_ij = y_i y_j x_iᵀx_j`,
//! keeping `w = Σ α_i y_i x_i` up to date. The bias is learned as the weight
//! of an implicit constant feature 1.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSolution {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub epochs: usize,
    /// Final projected-gradient spread (max − min).
    pub gap: f64,
    pub converged: bool,
}

pub fn solve(
    x: &[f64],
    cols: usize,
    y: &[f64],
    upper: &[f64],
    tolerance: f64,
    max_epochs: usize,
    seed: u64,
) -> LinearSolution {
    let n = y.len();
    let mut w = vec![0.0; cols];
    let mut b = 0.0;
    let mut alpha = vec![0.0; n];
    let qd: Vec<f64> = x
        .chunks_exact(cols)
        .map(|r| r.iter().map(|v| v * v).sum::<f64>() + 1.0)
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut gap = f64::INFINITY;
    let mut epochs = 0;
    let mut converged = false;
    while epochs < max_epochs {
        epochs += 1;
        order.shuffle(&mut rng);
        let mut pg_max = f64::NEG_INFINITY;
        let mut pg_min = f64::INFINITY;
        for &i in &order {
            let row = &x[i * cols..(i + 1) * cols];
            let g = y[i] * (row.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + b) - 1.0;
            let pg = if alpha[i] <= 0.0 {
                g.min(0.0)
            } else if alpha[i] >= upper[i] {
                g.max(0.0)
            } else {
                g
            };
            pg_max = pg_max.max(pg);
            pg_min = pg_min.min(pg);
            if pg.abs() > 1e-12 {
                let old = alpha[i];
                alpha[i] = (old - g / qd[i]).clamp(0.0, upper[i]);
                let step = (alpha[i] - old) * y[i];
                if step != 0.0 {
                    for (wk, xk) in w.iter_mut().zip(row) {
                        *wk += step * xk;
                    }
                    b += step;
                }
            }
        }
        gap = pg_max - pg_min;
        if gap < tolerance {
            converged = true;
            break;
        }
    }
    LinearSolution {
        weights: w,
        bias: b,
        epochs,
        gap,
        converged,
    }
}
