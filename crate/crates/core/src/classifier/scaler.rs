use serde::{Deserialize, Serialize};

/// Per-column standardization fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

const MIN_SD: f64 = 1e-12;

impl Scaler {
    /// Fits on a row-major `rows × cols` matrix. Constant columns get sd 1.
    pub fn fit(data: &[f64], cols: usize) -> Self {
        let rows = data.len() / cols;
        let mut mean = vec![0.0; cols];
        for row in data.chunks_exact(cols) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= rows.max(1) as f64);
        let mut var = vec![0.0; cols];
        for row in data.chunks_exact(cols) {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let sd = var
            .into_iter()
            .map(|s| {
                let sd = (s / rows.max(1) as f64).sqrt();
                if sd > MIN_SD {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Scaler { mean, sd }
    }

    pub fn transform_in_place(&self, data: &mut [f64]) {
        let cols = self.mean.len();
        for row in data.chunks_exact_mut(cols) {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.sd) {
                *v = (*v - m) / s;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standardizes_and_guards_constant_columns() {
        let mut data = vec![1.0, 5.0, 3.0, 5.0];
        let s = Scaler::fit(&data, 2);
        assert_eq!(s.mean, vec![2.0, 5.0]);
        assert_eq!(s.sd, vec![1.0, 1.0]);
        s.transform_in_place(&mut data);
        assert_eq!(data, vec![-1.0, 0.0, 1.0, 0.0]);
    }
}
