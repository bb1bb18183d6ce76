//! Gray-level co-occurrence matrices over segment masks and the 13 Haralick
//! coefficients.
//!
//! Levels are 0-based, so the sum average of a matrix concentrated at
//! `(i, j)` is `i + j`. Sum variance is taken around the sum average.

use std::fmt;
use std::ops::Range;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genome::Genome;
use crate::raster::{quantize_band, Scene};
use crate::segments::SegmentRecord;

pub const HARALICK_COUNT: usize = 13;
pub const DIRECTIONS: [Direction; 4] = [Direction::D0, Direction::D45, Direction::D90, Direction::D135];
pub const FEATURES_PER_BAND: usize = HARALICK_COUNT * 4;
pub const DEFAULT_LEVELS: usize = 32;

/// Zero-variance threshold for the correlation-type coefficients.
pub const VARIANCE_EPS: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    D0,
    D45,
    D90,
    D135,
}

impl Direction {
    /// Neighbor offset `(dy, dx)` at distance 1.
    pub fn offset(self) -> (isize, isize) {
        match self {
            Direction::D0 => (0, 1),
            Direction::D45 => (-1, 1),
            Direction::D90 => (-1, 0),
            Direction::D135 => (-1, -1),
        }
    }

    pub fn degrees(self) -> u32 {
        match self {
            Direction::D0 => 0,
            Direction::D45 => 45,
            Direction::D90 => 90,
            Direction::D135 => 135,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.degrees())
    }
}

/// A level image: row-major gray levels in `[0, levels)`.
#[derive(Debug, Clone, Copy)]
pub struct LevelImage<'a> {
    pub width: usize,
    pub height: usize,
    pub levels: usize,
    pub data: &'a [u8],
}

/// Symmetric, normalized co-occurrence matrix. `pair_count == 0` flags a
/// mask with no neighbor pair inside it; the matrix is then all zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Glcm {
    pub levels: usize,
    pub direction: Direction,
    pub pair_count: usize,
    pub matrix: Vec<f64>,
}

impl Glcm {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.levels + j]
    }

    pub fn is_empty(&self) -> bool {
        self.pair_count == 0
    }
}

/// Membership test for a pixel set, backed by a bounding-box bitmap.
struct MaskWindow {
    x0: usize,
    y0: usize,
    w: usize,
    h: usize,
    bits: Vec<bool>,
}

impl MaskWindow {
    fn new(pixels: &[u32], width: usize) -> Self {
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        for &p in pixels {
            let (x, y) = (p as usize % width, p as usize / width);
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
        let (w, h) = (x1 + 1 - x0, y1 + 1 - y0);
        let mut bits = vec![false; w * h];
        for &p in pixels {
            let (x, y) = (p as usize % width, p as usize / width);
            bits[(y - y0) * w + (x - x0)] = true;
        }
        MaskWindow { x0, y0, w, h, bits }
    }

    fn contains(&self, x: isize, y: isize) -> bool {
        let (lx, ly) = (x - self.x0 as isize, y - self.y0 as isize);
        lx >= 0
            && ly >= 0
            && (lx as usize) < self.w
            && (ly as usize) < self.h
            && self.bits[ly as usize * self.w + lx as usize]
    }
}

fn glcm_with_window(image: &LevelImage, pixels: &[u32], window: &MaskWindow, direction: Direction) -> Glcm {
    let levels = image.levels;
    let (dy, dx) = direction.offset();
    let mut counts = vec![0u32; levels * levels];
    let mut pairs = 0usize;
    for &p in pixels {
        let (x, y) = ((p as usize % image.width) as isize, (p as usize / image.width) as isize);
        let (qx, qy) = (x + dx, y + dy);
        if window.contains(qx, qy) {
            let a = image.data[p as usize] as usize;
            let b = image.data[qy as usize * image.width + qx as usize] as usize;
            counts[a * levels + b] += 1;
            pairs += 1;
        }
    }
    let mut matrix = vec![0.0; levels * levels];
    if pairs > 0 {
        let total = (2 * pairs) as f64;
        for i in 0..levels {
            for j in 0..levels {
                matrix[i * levels + j] = (counts[i * levels + j] + counts[j * levels + i]) as f64 / total;
            }
        }
    }
    Glcm {
        levels,
        direction,
        pair_count: pairs,
        matrix,
    }
}

/// Co-occurrence matrix of pairs `(p, p + offset)` with both ends in `pixels`.
pub fn glcm(image: &LevelImage, pixels: &[u32], direction: Direction) -> Result<Glcm> {
    if pixels.is_empty() {
        return Err(Error::Parameter("GLCM of an empty pixel set".into()));
    }
    let n = image.width * image.height;
    if image.data.len() != n {
        return Err(Error::Validation("level image size mismatch".into()));
    }
    if let Some(&p) = pixels.iter().find(|&&p| p as usize >= n) {
        return Err(Error::Validation(format!("mask pixel {p} outside the image")));
    }
    if let Some(&v) = image.data.iter().find(|&&v| v as usize >= image.levels) {
        return Err(Error::Validation(format!(
            "level {v} outside 0..{}",
            image.levels
        )));
    }
    let window = MaskWindow::new(pixels, image.width);
    Ok(glcm_with_window(image, pixels, &window, direction))
}

fn plogp(p: f64) -> f64 {
    if p > 0.0 {
        p * p.ln()
    } else {
        0.0
    }
}

/// The 13 Haralick coefficients, in order: angular second moment, contrast,
/// correlation, sum of squares variance, inverse difference moment, sum
/// average, sum variance, sum entropy, entropy, difference variance,
/// difference entropy, information measures of correlation 1 and 2.
pub fn haralick_13(g: &Glcm) -> [f64; HARALICK_COUNT] {
    let mut f = [0.0; HARALICK_COUNT];
    if g.is_empty() {
        return f;
    }
    let n = g.levels;
    let p = &g.matrix;

    let mut px = vec![0.0; n];
    let mut py = vec![0.0; n];
    let mut p_sum = vec![0.0; 2 * n - 1];
    let mut p_diff = vec![0.0; n];
    let mut asm = 0.0;
    let mut idm = 0.0;
    let mut entropy = 0.0;
    let mut sum_ij = 0.0;
    for i in 0..n {
        for j in 0..n {
            let v = p[i * n + j];
            if v == 0.0 {
                continue;
            }
            px[i] += v;
            py[j] += v;
            p_sum[i + j] += v;
            p_diff[i.abs_diff(j)] += v;
            asm += v * v;
            let d = i as f64 - j as f64;
            idm += v / (1.0 + d * d);
            entropy -= v * v.ln();
            sum_ij += (i * j) as f64 * v;
        }
    }

    let mean = |m: &[f64]| m.iter().enumerate().map(|(k, v)| k as f64 * v).sum::<f64>();
    let (mu_x, mu_y) = (mean(&px), mean(&py));
    let var = |m: &[f64], mu: f64| {
        m.iter()
            .enumerate()
            .map(|(k, v)| (k as f64 - mu).powi(2) * v)
            .sum::<f64>()
    };
    let (var_x, var_y) = (var(&px, mu_x), var(&py, mu_y));

    let contrast: f64 = p_diff.iter().enumerate().map(|(k, v)| (k * k) as f64 * v).sum();
    let sd = (var_x * var_y).sqrt();
    let correlation = if sd > VARIANCE_EPS {
        (sum_ij - mu_x * mu_y) / sd
    } else {
        0.0
    };
    let sum_average = mean(&p_sum);
    let sum_variance = var(&p_sum, sum_average);
    let sum_entropy = -p_sum.iter().map(|&v| plogp(v)).sum::<f64>();
    let diff_mean = mean(&p_diff);
    let diff_variance = var(&p_diff, diff_mean);
    let diff_entropy = -p_diff.iter().map(|&v| plogp(v)).sum::<f64>();

    let hx = -px.iter().map(|&v| plogp(v)).sum::<f64>();
    let hy = -py.iter().map(|&v| plogp(v)).sum::<f64>();
    let mut hxy1 = 0.0;
    let mut hxy2 = 0.0;
    for i in 0..n {
        if px[i] == 0.0 {
            continue;
        }
        for j in 0..n {
            if py[j] == 0.0 {
                continue;
            }
            let q = px[i] * py[j];
            let v = p[i * n + j];
            if v > 0.0 {
                hxy1 -= v * q.ln();
            }
            hxy2 -= q * q.ln();
        }
    }
    let hmax = hx.max(hy);
    let (imc1, imc2) = if hmax > VARIANCE_EPS {
        (
            (entropy - hxy1) / hmax,
            (1.0 - (-2.0 * (hxy2 - entropy)).exp()).max(0.0).sqrt(),
        )
    } else {
        (0.0, 0.0)
    };

    f[0] = asm;
    f[1] = contrast;
    f[2] = correlation;
    f[3] = var_x;
    f[4] = idm;
    f[5] = sum_average;
    f[6] = sum_variance;
    f[7] = sum_entropy;
    f[8] = entropy;
    f[9] = diff_variance;
    f[10] = diff_entropy;
    f[11] = imc1;
    f[12] = imc2;
    f
}

/// 4 directions × 13 coefficients for one pixel set of one level image.
pub fn band_features(image: &LevelImage, pixels: &[u32]) -> [f64; FEATURES_PER_BAND] {
    let mut out = [0.0; FEATURES_PER_BAND];
    if pixels.is_empty() {
        return out;
    }
    let window = MaskWindow::new(pixels, image.width);
    for (d, &dir) in DIRECTIONS.iter().enumerate() {
        let g = glcm_with_window(image, pixels, &window, dir);
        out[d * HARALICK_COUNT..(d + 1) * HARALICK_COUNT].copy_from_slice(&haralick_13(&g));
    }
    out
}

/// Per-segment texture features, columns ordered (band, direction, coefficient).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub bands: usize,
    pub scene_ids: Vec<String>,
    pub segment_ids: Vec<u32>,
    /// Row-major, `rows × bands·52`.
    pub data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn columns(&self) -> usize {
        self.bands * FEATURES_PER_BAND
    }

    pub fn rows(&self) -> usize {
        self.segment_ids.len()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.columns();
        &self.data[r * c..(r + 1) * c]
    }

    /// Column range of a 1-based band.
    pub fn band_columns(&self, band: usize) -> Range<usize> {
        let start = (band - 1) * FEATURES_PER_BAND;
        start..start + FEATURES_PER_BAND
    }

    /// Column indices of every band the genome switches on.
    pub fn genome_columns(&self, genome: &Genome) -> Result<Vec<usize>> {
        if genome.len() != self.bands {
            return Err(Error::Parameter(format!(
                "genome has {} genes, feature matrix has {} bands",
                genome.len(),
                self.bands
            )));
        }
        Ok(genome
            .active_bands()
            .into_iter()
            .flat_map(|b| self.band_columns(b))
            .collect())
    }

    pub fn column_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.columns());
        for b in 1..=self.bands {
            for d in DIRECTIONS {
                for f in 1..=HARALICK_COUNT {
                    names.push(format!("b{b}_d{d}_f{f}"));
                }
            }
        }
        names
    }
}

/// Texture features for each record, quantizing every band of every scene
/// to `levels` gray levels first. Rows follow the record order.
pub fn segment_features(scenes: &[&Scene], records: &[SegmentRecord], levels: usize) -> Result<FeatureMatrix> {
    let bands = scenes.first().map(|s| s.band_count()).unwrap_or(0);
    if bands == 0 {
        return Err(Error::Parameter("no scenes to extract features from".into()));
    }
    if let Some(s) = scenes.iter().find(|s| s.band_count() != bands) {
        return Err(Error::Validation(format!(
            "scene {} has {} bands, expected {bands}",
            s.id(),
            s.band_count()
        )));
    }
    let quantized: Vec<Vec<Vec<u8>>> = scenes
        .iter()
        .map(|s| s.bands().iter().map(|b| quantize_band(b, levels)).collect())
        .collect::<Result<_>>()?;

    let scene_index = |id: &str| {
        scenes
            .iter()
            .position(|s| s.id() == id)
            .ok_or_else(|| Error::Validation(format!("record refers to unknown scene {id}")))
    };
    let indices: Vec<usize> = records
        .iter()
        .map(|r| scene_index(&r.scene_id))
        .collect::<Result<_>>()?;

    let cols = bands * FEATURES_PER_BAND;
    let mut data = vec![0.0; records.len() * cols];
    data.par_chunks_mut(cols)
        .zip(records.par_iter().zip(indices.par_iter()))
        .for_each(|(row, (record, &si))| {
            let scene = scenes[si];
            for b in 0..bands {
                let image = LevelImage {
                    width: scene.width(),
                    height: scene.height(),
                    levels,
                    data: &quantized[si][b],
                };
                row[b * FEATURES_PER_BAND..(b + 1) * FEATURES_PER_BAND]
                    .copy_from_slice(&band_features(&image, &record.pixels));
            }
        });

    Ok(FeatureMatrix {
        bands,
        scene_ids: records.iter().map(|r| r.scene_id.clone()).collect(),
        segment_ids: records.iter().map(|r| r.segment_id).collect(),
        data,
    })
}

pub fn write_feature_csv(features: &FeatureMatrix, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["scene_id".to_string(), "segment_id".to_string()];
    header.extend(features.column_names());
    w.write_record(&header)?;
    for r in 0..features.rows() {
        let mut rec = vec![features.scene_ids[r].clone(), features.segment_ids[r].to_string()];
        rec.extend(features.row(r).iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_feature_csv(path: &Path) -> Result<FeatureMatrix> {
    let mut reader = csv::Reader::from_path(path)?;
    let header = reader.headers()?.clone();
    let feature_cols = header.len().saturating_sub(2);
    if header.len() < 2 || feature_cols % FEATURES_PER_BAND != 0 {
        return Err(Error::Format {
            what: path.display().to_string(),
            detail: format!("{} columns is not 2 + a multiple of {FEATURES_PER_BAND}", header.len()),
        });
    }
    let mut out = FeatureMatrix {
        bands: feature_cols / FEATURES_PER_BAND,
        scene_ids: Vec::new(),
        segment_ids: Vec::new(),
        data: Vec::new(),
    };
    if out.column_names().iter().map(String::as_str).ne(header.iter().skip(2)) {
        return Err(Error::Format {
            what: path.display().to_string(),
            detail: "unexpected feature column names".into(),
        });
    }
    let bad = |detail: String| Error::Format {
        what: path.display().to_string(),
        detail,
    };
    for rec in reader.records() {
        let rec = rec?;
        out.scene_ids.push(rec[0].to_string());
        out.segment_ids
            .push(rec[1].parse().map_err(|e| bad(format!("segment_id {:?}: {e}", &rec[1])))?);
        for v in rec.iter().skip(2) {
            out.data.push(v.parse().map_err(|e| bad(format!("value {v:?}: {e}")))?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::ClassMask;
    use crate::segments::{ClassLabel, Split};

    fn full(w: usize, h: usize) -> Vec<u32> {
        (0..(w * h) as u32).collect()
    }

    #[test]
    fn two_by_two_horizontal() {
        let data = [0u8, 0, 1, 1];
        let img = LevelImage { width: 2, height: 2, levels: 2, data: &data };
        let g = glcm(&img, &full(2, 2), Direction::D0).unwrap();
        assert_eq!(g.matrix, vec![0.5, 0.0, 0.0, 0.5]);
        let f = haralick_13(&g);
        assert!((f[0] - 0.5).abs() < 1e-15);
        assert_eq!(f[1], 0.0);
        assert!((f[8] - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn constant_image_is_degenerate_but_finite() {
        let data = [3u8; 25];
        let img = LevelImage { width: 5, height: 5, levels: 8, data: &data };
        for dir in DIRECTIONS {
            let g = glcm(&img, &full(5, 5), dir).unwrap();
            assert_eq!(g.at(3, 3), 1.0);
            let f = haralick_13(&g);
            assert_eq!(f[0], 1.0);
            assert_eq!(f[1], 0.0);
            assert_eq!(f[2], 0.0);
            assert_eq!(f[8], 0.0);
            assert_eq!(f[11], 0.0);
            assert_eq!(f[12], 0.0);
            assert!(f.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn single_pixel_mask_has_no_pairs() {
        let data = [0u8, 1, 2, 3];
        let img = LevelImage { width: 2, height: 2, levels: 4, data: &data };
        for dir in DIRECTIONS {
            let g = glcm(&img, &[3], dir).unwrap();
            assert!(g.is_empty());
            assert_eq!(haralick_13(&g), [0.0; HARALICK_COUNT]);
        }
    }

    #[test]
    fn empty_mask_is_an_error() {
        let data = [0u8; 4];
        let img = LevelImage { width: 2, height: 2, levels: 2, data: &data };
        assert!(glcm(&img, &[], Direction::D0).is_err());
    }

    #[test]
    fn pairs_leaving_the_mask_are_skipped() {
        // Mask is the left column only: no horizontal pair, one vertical pair.
        let data = [0u8, 1, 1, 0];
        let img = LevelImage { width: 2, height: 2, levels: 2, data: &data };
        assert!(glcm(&img, &[0, 2], Direction::D0).unwrap().is_empty());
        let g = glcm(&img, &[0, 2], Direction::D90).unwrap();
        assert_eq!(g.pair_count, 1);
        assert_eq!(g.matrix, vec![0.0, 0.5, 0.5, 0.0]);
    }

    fn scene_with_duplicate() -> Scene {
        let w = 8;
        let a: Vec<u16> = (0..64).map(|i| ((i * 37) % 23) as u16 * 100).collect();
        let b: Vec<u16> = (0..64).map(|i| (i % 5) as u16).collect();
        Scene::new("s", w, 8, vec![a.clone(), b, a], ClassMask::new(vec![0; 64]).unwrap()).unwrap()
    }

    fn whole_scene_record(scene: &Scene) -> SegmentRecord {
        SegmentRecord {
            segment_id: 0,
            scene_id: scene.id().into(),
            area: scene.pixel_count(),
            bbox: (0, 0, scene.width() - 1, scene.height() - 1),
            homogeneity: 1.0,
            label: ClassLabel::Forest,
            split: Split::Train,
            pixels: full(scene.width(), scene.height()),
        }
    }

    #[test]
    fn duplicated_bands_give_identical_blocks() {
        let scene = scene_with_duplicate();
        let fm = segment_features(&[&scene], &[whole_scene_record(&scene)], 32).unwrap();
        assert_eq!(fm.columns(), 3 * 52);
        let row = fm.row(0);
        assert_eq!(&row[fm.band_columns(1)], &row[fm.band_columns(3)]);
        assert_ne!(&row[fm.band_columns(1)], &row[fm.band_columns(2)]);
    }

    #[test]
    fn column_layout() {
        let fm = FeatureMatrix { bands: 7, scene_ids: vec![], segment_ids: vec![], data: vec![] };
        assert_eq!(fm.columns(), 364);
        let names = fm.column_names();
        assert_eq!(names[0], "b1_d0_f1");
        assert_eq!(names[13], "b1_d45_f1");
        assert_eq!(names[363], "b7_d135_f13");
        let g: Genome = "0000001".parse().unwrap();
        assert_eq!(fm.genome_columns(&g).unwrap(), (312..364).collect::<Vec<_>>());
    }

    #[test]
    fn feature_csv_round_trip() {
        let scene = scene_with_duplicate();
        let fm = segment_features(&[&scene], &[whole_scene_record(&scene)], 16).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        write_feature_csv(&fm, &path).unwrap();
        assert_eq!(read_feature_csv(&path).unwrap(), fm);
    }
}
