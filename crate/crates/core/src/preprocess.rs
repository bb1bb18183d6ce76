//! Principal-component false color: B bands in, 3 planes in `[0, 1]` out.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{stretch_range_f64, Scene, StretchParams};

pub const COMPONENTS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// Unit eigenvectors, largest eigenvalue first.
    pub components: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
}

impl PcaModel {
    pub fn dimension(&self) -> usize {
        self.mean.len()
    }

    fn project_pixel(&self, pixel: &[f64]) -> [f64; COMPONENTS] {
        let mut out = [0.0; COMPONENTS];
        for (k, comp) in self.components.iter().enumerate() {
            out[k] = pixel
                .iter()
                .zip(&self.mean)
                .zip(comp)
                .map(|((v, m), c)| (v - m) * c)
                .sum();
        }
        out
    }
}

/// A stack of equally sized real-valued planes, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneImage {
    pub width: usize,
    pub height: usize,
    pub planes: Vec<Vec<f64>>,
}

impl PlaneImage {
    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Renders the first three planes as interleaved RGB with a percentile stretch.
    pub fn to_rgb(&self, params: StretchParams) -> Vec<u8> {
        let ranges: Vec<_> = self
            .planes
            .iter()
            .take(3)
            .map(|p| stretch_range_f64(p, params))
            .collect();
        let mut out = Vec::with_capacity(self.pixel_count() * 3);
        for i in 0..self.pixel_count() {
            for (c, range) in ranges.iter().enumerate() {
                out.push(range.apply(self.planes[c][i]));
            }
        }
        out
    }
}

/// Fits a 3-component PCA on one scene, sampling every `sample_stride`-th pixel.
pub fn pca_fit(scene: &Scene, sample_stride: usize) -> Result<PcaModel> {
    pca_fit_scenes(&[scene], sample_stride)
}

/// Fits one PCA over the pooled pixels of several scenes.
pub fn pca_fit_scenes(scenes: &[&Scene], sample_stride: usize) -> Result<PcaModel> {
    if sample_stride == 0 {
        return Err(Error::Parameter("sample_stride must be >= 1".into()));
    }
    let dim = match scenes.first() {
        Some(s) => s.band_count(),
        None => return Err(Error::Parameter("no scenes to fit".into())),
    };
    if dim < COMPONENTS {
        return Err(Error::Parameter(format!(
            "PCA needs at least {COMPONENTS} bands, scene has {dim}"
        )));
    }
    if let Some(s) = scenes.iter().find(|s| s.band_count() != dim) {
        return Err(Error::Validation(format!(
            "scene {} has {} bands, expected {dim}",
            s.id(),
            s.band_count()
        )));
    }

    let mut count = 0usize;
    let mut sum = vec![0.0; dim];
    for scene in scenes {
        for i in (0..scene.pixel_count()).step_by(sample_stride) {
            for (b, band) in scene.bands().iter().enumerate() {
                sum[b] += band.samples[i] as f64;
            }
            count += 1;
        }
    }
    if count < 2 {
        return Err(Error::Degenerate(format!(
            "only {count} sampled pixel(s); need at least 2"
        )));
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();

    let mut cov = DMatrix::<f64>::zeros(dim, dim);
    let mut centered = vec![0.0; dim];
    for scene in scenes {
        for i in (0..scene.pixel_count()).step_by(sample_stride) {
            for (b, band) in scene.bands().iter().enumerate() {
                centered[b] = band.samples[i] as f64 - mean[b];
            }
            for r in 0..dim {
                for c in r..dim {
                    cov[(r, c)] += centered[r] * centered[c];
                }
            }
        }
    }
    for r in 0..dim {
        for c in r..dim {
            let v = cov[(r, c)] / (count - 1) as f64;
            cov[(r, c)] = v;
            cov[(c, r)] = v;
        }
    }
    if cov.trace() <= 0.0 {
        return Err(Error::Degenerate("all sampled bands have zero variance".into()));
    }

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let mut components = Vec::with_capacity(COMPONENTS);
    let mut explained_variance = Vec::with_capacity(COMPONENTS);
    for &k in order.iter().take(COMPONENTS) {
        let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        // Sign convention: the largest-magnitude coefficient is positive.
        let pivot = v
            .iter()
            .enumerate()
            .fold(0, |best, (i, x)| if x.abs() > v[best].abs() { i } else { best });
        if v[pivot] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        components.push(v);
        explained_variance.push(eig.eigenvalues[k].max(0.0));
    }

    Ok(PcaModel {
        mean,
        components,
        explained_variance,
    })
}

/// Projections onto the model's components without normalization.
pub fn pca_project_raw(scene: &Scene, model: &PcaModel) -> Result<PlaneImage> {
    if model.dimension() != scene.band_count() {
        return Err(Error::Validation(format!(
            "PCA model has dimension {}, scene {} has {} bands",
            model.dimension(),
            scene.id(),
            scene.band_count()
        )));
    }
    let (w, h) = (scene.width(), scene.height());
    let rows: Vec<Vec<[f64; COMPONENTS]>> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut pixel = vec![0.0; scene.band_count()];
            (0..w)
                .map(|x| {
                    let i = y * w + x;
                    for (b, band) in scene.bands().iter().enumerate() {
                        pixel[b] = band.samples[i] as f64;
                    }
                    model.project_pixel(&pixel)
                })
                .collect()
        })
        .collect();
    let mut planes: Vec<Vec<f64>> = (0..COMPONENTS).map(|_| Vec::with_capacity(w * h)).collect();
    for px in rows.iter().flatten() {
        for k in 0..COMPONENTS {
            planes[k].push(px[k]);
        }
    }
    Ok(PlaneImage {
        width: w,
        height: h,
        planes,
    })
}

/// Projects every pixel and min-max normalizes each plane to `[0, 1]`.
pub fn pca_project(scene: &Scene, model: &PcaModel) -> Result<PlaneImage> {
    let mut image = pca_project_raw(scene, model)?;
    for plane in &mut image.planes {
        normalize_unit(plane);
    }
    Ok(image)
}

fn normalize_unit(plane: &mut [f64]) {
    let (lo, hi) = plane
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    if span > 0.0 {
        plane.iter_mut().for_each(|v| *v = (*v - lo) / span);
    } else {
        plane.iter_mut().for_each(|v| *v = 0.0);
    }
}
