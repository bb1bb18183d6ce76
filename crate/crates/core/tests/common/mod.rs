//! Independent reference implementations used to cross-check the library.
#![allow(dead_code)]

use std::collections::VecDeque;

use bandsel::preprocess::{pca_fit, pca_project};
use bandsel::raster::Scene;
use bandsel::segments::{build_segment_table, filter_segments, split_segments, FilterThresholds, SegmentRecord, SplitFractions};
use bandsel::superpixel::{slic, SlicParams};
use bandsel::synth::{generate, SynthConfig};
use bandsel::texture::{segment_features, FeatureMatrix, DEFAULT_LEVELS};

/// Offsets `(dy, dx)` for 0°, 45°, 90°, 135°.
pub const OFFSETS: [(i64, i64); 4] = [(0, 1), (-1, 1), (-1, 0), (-1, -1)];

/// Co-occurrence matrix by enumerating every ordered pixel pair in the image
/// and keeping those at the offset with both ends selected. Returns the
/// symmetric normalized matrix and the number of matching pairs.
pub fn naive_glcm(
    width: usize,
    height: usize,
    levels: usize,
    data: &[u8],
    selected: &[bool],
    offset: (i64, i64),
) -> (Vec<Vec<f64>>, usize) {
    let mut counts = vec![vec![0.0f64; levels]; levels];
    let mut pairs = 0usize;
    let n = width * height;
    for a in 0..n {
        for b in 0..n {
            let (ax, ay) = ((a % width) as i64, (a / width) as i64);
            let (bx, by) = ((b % width) as i64, (b / width) as i64);
            if bx - ax == offset.1 && by - ay == offset.0 && selected[a] && selected[b] {
                counts[data[a] as usize][data[b] as usize] += 1.0;
                counts[data[b] as usize][data[a] as usize] += 1.0;
                pairs += 1;
            }
        }
    }
    if pairs > 0 {
        for row in counts.iter_mut() {
            for v in row.iter_mut() {
                *v /= 2.0 * pairs as f64;
            }
        }
    }
    (counts, pairs)
}

fn xlogx(v: f64) -> f64 {
    if v > 0.0 {
        v * v.ln()
    } else {
        0.0
    }
}

/// The 13 coefficients written directly from their textbook definitions,
/// with 0-based gray levels and natural logarithms.
pub fn naive_haralick(p: &[Vec<f64>]) -> [f64; 13] {
    let n = p.len();
    let total: f64 = p.iter().flatten().sum();
    if total == 0.0 {
        return [0.0; 13];
    }
    let fi = |i: usize| i as f64;

    let mut f1 = 0.0;
    for i in 0..n {
        for j in 0..n {
            f1 += p[i][j] * p[i][j];
        }
    }

    let mut f2 = 0.0;
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if i.abs_diff(j) == k {
                    f2 += fi(k) * fi(k) * p[i][j];
                }
            }
        }
    }

    let px: Vec<f64> = (0..n).map(|i| (0..n).map(|j| p[i][j]).sum()).collect();
    let py: Vec<f64> = (0..n).map(|j| (0..n).map(|i| p[i][j]).sum()).collect();
    let mu_x: f64 = (0..n).map(|i| fi(i) * px[i]).sum();
    let mu_y: f64 = (0..n).map(|j| fi(j) * py[j]).sum();
    let sd_x = (0..n).map(|i| (fi(i) - mu_x).powi(2) * px[i]).sum::<f64>().sqrt();
    let sd_y = (0..n).map(|j| (fi(j) - mu_y).powi(2) * py[j]).sum::<f64>().sqrt();
    let mut cov = 0.0;
    for i in 0..n {
        for j in 0..n {
            cov += (fi(i) - mu_x) * (fi(j) - mu_y) * p[i][j];
        }
    }
    let f3 = if sd_x * sd_y > 1e-15 { cov / (sd_x * sd_y) } else { 0.0 };

    let mut mu = 0.0;
    for i in 0..n {
        for j in 0..n {
            mu += fi(i) * p[i][j];
        }
    }
    let mut f4 = 0.0;
    for i in 0..n {
        for j in 0..n {
            f4 += (fi(i) - mu).powi(2) * p[i][j];
        }
    }

    let mut f5 = 0.0;
    for i in 0..n {
        for j in 0..n {
            f5 += p[i][j] / (1.0 + (fi(i) - fi(j)).powi(2));
        }
    }

    let p_sum: Vec<f64> = (0..2 * n - 1)
        .map(|k| {
            let mut s = 0.0;
            for i in 0..n {
                for j in 0..n {
                    if i + j == k {
                        s += p[i][j];
                    }
                }
            }
            s
        })
        .collect();
    let p_diff: Vec<f64> = (0..n)
        .map(|k| {
            let mut s = 0.0;
            for i in 0..n {
                for j in 0..n {
                    if i.abs_diff(j) == k {
                        s += p[i][j];
                    }
                }
            }
            s
        })
        .collect();

    let f6: f64 = p_sum.iter().enumerate().map(|(k, v)| fi(k) * v).sum();
    let f7: f64 = p_sum.iter().enumerate().map(|(k, v)| (fi(k) - f6).powi(2) * v).sum();
    let f8: f64 = -p_sum.iter().map(|&v| xlogx(v)).sum::<f64>();
    let mut f9 = 0.0;
    for i in 0..n {
        for j in 0..n {
            f9 -= xlogx(p[i][j]);
        }
    }
    let d_mean: f64 = p_diff.iter().enumerate().map(|(k, v)| fi(k) * v).sum();
    let f10: f64 = p_diff.iter().enumerate().map(|(k, v)| (fi(k) - d_mean).powi(2) * v).sum();
    let f11: f64 = -p_diff.iter().map(|&v| xlogx(v)).sum::<f64>();

    let hx: f64 = -px.iter().map(|&v| xlogx(v)).sum::<f64>();
    let hy: f64 = -py.iter().map(|&v| xlogx(v)).sum::<f64>();
    let mut hxy1 = 0.0;
    let mut hxy2 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let q = px[i] * py[j];
            if q > 0.0 {
                hxy1 -= p[i][j] * q.ln();
                hxy2 -= q * q.ln();
            }
        }
    }
    let h = hx.max(hy);
    let (f12, f13) = if h > 1e-15 {
        let inner = 1.0 - (-2.0 * (hxy2 - f9)).exp();
        ((f9 - hxy1) / h, inner.max(0.0).sqrt())
    } else {
        (0.0, 0.0)
    };

    [f1, f2, f3, f4, f5, f6, f7, f8, f9, f10, f11, f12, f13]
}

/// Number of 4-connected components of each label, by flood fill.
pub fn components_per_label(labels: &[u32], width: usize, height: usize, count: usize) -> Vec<usize> {
    let mut seen = vec![false; labels.len()];
    let mut components = vec![0usize; count];
    for start in 0..labels.len() {
        if seen[start] {
            continue;
        }
        let l = labels[start];
        components[l as usize] += 1;
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(p) = queue.pop_front() {
            let (x, y) = (p % width, p / width);
            let mut visit = |q: usize| {
                if !seen[q] && labels[q] == l {
                    seen[q] = true;
                    queue.push_back(q);
                }
            };
            if x > 0 {
                visit(p - 1);
            }
            if x + 1 < width {
                visit(p + 1);
            }
            if y > 0 {
                visit(p - width);
            }
            if y + 1 < height {
                visit(p + width);
            }
        }
    }
    components
}

/// Scenes segmented, filtered, split and featurized with library defaults.
pub struct SegmentDataset {
    pub scenes: Vec<Scene>,
    pub records: Vec<SegmentRecord>,
    pub features: FeatureMatrix,
}

impl SegmentDataset {
    pub fn kept(&self) -> usize {
        self.records.len()
    }
}

pub fn segment_dataset(configs: &[SynthConfig], pixels_per_segment: usize, split_seed: u64) -> SegmentDataset {
    let scenes: Vec<Scene> = configs
        .iter()
        .enumerate()
        .map(|(i, c)| generate(c, &format!("scene_{i}")).unwrap())
        .collect();
    let mut records = Vec::new();
    for scene in &scenes {
        let model = pca_fit(scene, 4).unwrap();
        let planes = pca_project(scene, &model).unwrap();
        let labels = slic(&planes, &SlicParams::for_image(scene.width(), scene.height(), pixels_per_segment)).unwrap();
        records.extend(build_segment_table(scene, &labels).unwrap());
    }
    let records = filter_segments(records, FilterThresholds::default());
    let records: Vec<SegmentRecord> = split_segments(records, SplitFractions::default(), split_seed)
        .unwrap()
        .into_iter()
        .filter(|r| r.is_kept())
        .collect();
    let refs: Vec<&Scene> = scenes.iter().collect();
    let features = segment_features(&refs, &records, DEFAULT_LEVELS).unwrap();
    SegmentDataset { scenes, records, features }
}
