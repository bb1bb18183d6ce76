//! SLIC superpixels over a real-valued plane stack.
//!
//! Colors are expected in `[0, 1]` and are scaled by [`COLOR_SCALE`] before
//! the distance is taken, so `compactness` keeps the meaning it has for SLIC
//! on CIELAB (`m` around 10 balances color against grid spacing).

use std::collections::{BTreeSet, VecDeque};
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::PlaneImage;

pub const COLOR_SCALE: f64 = 100.0;
pub const DEFAULT_PIXELS_PER_SEGMENT: usize = 700;

pub const LABELS_FILE: &str = "segments.raw";
pub const LABELS_SIDECAR: &str = "segments.json";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlicParams {
    pub target_segments: usize,
    pub compactness: f64,
    pub iterations: usize,
}

impl SlicParams {
    pub fn new(target_segments: usize) -> Self {
        SlicParams {
            target_segments,
            compactness: 10.0,
            iterations: 10,
        }
    }

    /// `round(H·W / pixels_per_segment)`, at least 1.
    pub fn for_image(width: usize, height: usize, pixels_per_segment: usize) -> Self {
        let target = ((width * height) as f64 / pixels_per_segment.max(1) as f64).round() as usize;
        Self::new(target.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u32>,
    pub segment_count: usize,
}

impl LabelMap {
    pub fn segment_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.segment_count];
        for &l in &self.labels {
            sizes[l as usize] += 1;
        }
        sizes
    }

    /// Pixel indices of each segment, in raster order.
    pub fn segment_pixels(&self) -> Vec<Vec<u32>> {
        let mut out = vec![Vec::new(); self.segment_count];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l as usize].push(i as u32);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LabelSidecar {
    width: usize,
    height: usize,
    segment_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    params: Option<SlicParams>,
}

pub fn write_label_map(labels: &LabelMap, params: Option<&SlicParams>, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let raw: Vec<u8> = labels.labels.iter().flat_map(|v| v.to_le_bytes()).collect();
    let path = dir.join(LABELS_FILE);
    fs::write(&path, raw).map_err(|e| Error::io(&path, e))?;
    let sidecar = LabelSidecar {
        width: labels.width,
        height: labels.height,
        segment_count: labels.segment_count,
        params: params.copied(),
    };
    let path = dir.join(LABELS_SIDECAR);
    fs::write(&path, serde_json::to_string_pretty(&sidecar)?).map_err(|e| Error::io(&path, e))?;
    Ok(())
}

pub fn read_label_map(dir: &Path) -> Result<LabelMap> {
    let path = dir.join(LABELS_SIDECAR);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let sidecar: LabelSidecar = serde_json::from_str(&text)?;
    let path = dir.join(LABELS_FILE);
    let raw = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let n = sidecar.width * sidecar.height;
    if raw.len() != n * 4 {
        return Err(Error::ShortRead {
            path,
            expected: n * 4,
            found: raw.len(),
        });
    }
    let labels: Vec<u32> = raw
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    if let Some(bad) = labels.iter().find(|&&l| l as usize >= sidecar.segment_count) {
        return Err(Error::Validation(format!(
            "segment id {bad} outside 0..{}",
            sidecar.segment_count
        )));
    }
    Ok(LabelMap {
        width: sidecar.width,
        height: sidecar.height,
        labels,
        segment_count: sidecar.segment_count,
    })
}

#[derive(Debug, Clone)]
struct Center {
    color: Vec<f64>,
    x: f64,
    y: f64,
}

/// Grid shape whose cell count is closest to `k` among grids whose cells are
/// at most 2:1; falls back to the squarest cells when no grid qualifies.
fn grid_shape(width: usize, height: usize, k: usize) -> (usize, usize) {
    let max_aspect = 2f64.ln() + 1e-9;
    let mut best = (1, 1);
    let mut best_score = (true, usize::MAX, f64::INFINITY);
    for nx in 1..=k.min(width) {
        let ny = ((k as f64 / nx as f64).round() as usize).clamp(1, height);
        let miss = (nx * ny).abs_diff(k);
        let aspect = ((width as f64 / nx as f64) / (height as f64 / ny as f64)).ln().abs();
        let score = (aspect > max_aspect, if aspect > max_aspect { 0 } else { miss }, aspect);
        let better = (!score.0 && best_score.0)
            || (score.0 == best_score.0
                && (score.1 < best_score.1 || (score.1 == best_score.1 && score.2 < best_score.2 - 1e-12)));
        if better {
            best = (nx, ny);
            best_score = score;
        }
    }
    best
}

fn pixel_color(image: &PlaneImage, i: usize, out: &mut [f64]) {
    for (c, plane) in image.planes.iter().enumerate() {
        out[c] = plane[i] * COLOR_SCALE;
    }
}

fn gradient(image: &PlaneImage, x: usize, y: usize) -> f64 {
    let (w, h) = (image.width, image.height);
    let at = |xx: usize, yy: usize| yy * w + xx;
    let (xl, xr) = (x.saturating_sub(1), (x + 1).min(w - 1));
    let (yu, yd) = (y.saturating_sub(1), (y + 1).min(h - 1));
    image
        .planes
        .iter()
        .map(|p| {
            let gx = p[at(xr, y)] - p[at(xl, y)];
            let gy = p[at(x, yd)] - p[at(x, yu)];
            gx * gx + gy * gy
        })
        .sum()
}

fn init_centers(image: &PlaneImage, k: usize) -> (Vec<Center>, Vec<u32>) {
    let (w, h) = (image.width, image.height);
    let (nx, ny) = grid_shape(w, h, k);
    let mut centers = Vec::with_capacity(nx * ny);
    let mut color = vec![0.0; image.planes.len()];
    for j in 0..ny {
        for i in 0..nx {
            let gx = (((i as f64 + 0.5) * w as f64 / nx as f64) as usize).min(w - 1);
            let gy = (((j as f64 + 0.5) * h as f64 / ny as f64) as usize).min(h - 1);
            // Move the seed to the lowest-gradient pixel of its 3×3 neighborhood.
            let (mut bx, mut by, mut bg) = (gx, gy, gradient(image, gx, gy));
            for yy in gy.saturating_sub(1)..=(gy + 1).min(h - 1) {
                for xx in gx.saturating_sub(1)..=(gx + 1).min(w - 1) {
                    let g = gradient(image, xx, yy);
                    if g < bg {
                        (bx, by, bg) = (xx, yy, g);
                    }
                }
            }
            pixel_color(image, by * w + bx, &mut color);
            centers.push(Center {
                color: color.clone(),
                x: bx as f64,
                y: by as f64,
            });
        }
    }
    let mut labels = vec![0u32; w * h];
    for y in 0..h {
        let j = (y * ny / h).min(ny - 1);
        for x in 0..w {
            let i = (x * nx / w).min(nx - 1);
            labels[y * w + x] = (j * nx + i) as u32;
        }
    }
    (centers, labels)
}

/// SLIC clustering followed by connectivity enforcement.
pub fn slic(image: &PlaneImage, params: &SlicParams) -> Result<LabelMap> {
    let (w, h) = (image.width, image.height);
    let n = w * h;
    if n == 0 || image.planes.is_empty() || image.planes.iter().any(|p| p.len() != n) {
        return Err(Error::Validation("SLIC input planes do not match image size".into()));
    }
    if params.target_segments == 0 || params.target_segments > n {
        return Err(Error::Parameter(format!(
            "target_segments must be in 1..={n}, got {}",
            params.target_segments
        )));
    }
    if !(params.compactness > 0.0) {
        return Err(Error::Parameter("compactness must be > 0".into()));
    }
    if params.iterations == 0 {
        return Err(Error::Parameter("iterations must be >= 1".into()));
    }

    let step = (n as f64 / params.target_segments as f64).sqrt();
    let spatial_weight = (params.compactness / step).powi(2);
    let radius = step.ceil() as i64;
    let (mut centers, mut labels) = init_centers(image, params.target_segments);
    let nplanes = image.planes.len();

    for _ in 0..params.iterations {
        let windows: Vec<(i64, i64, i64, i64)> = centers
            .iter()
            .map(|c| {
                let (cx, cy) = (c.x.round() as i64, c.y.round() as i64);
                (
                    (cx - radius).max(0),
                    (cx + radius).min(w as i64 - 1),
                    (cy - radius).max(0),
                    (cy + radius).min(h as i64 - 1),
                )
            })
            .collect();

        labels
            .par_chunks_mut(w)
            .enumerate()
            .for_each(|(y, row)| {
                let yi = y as i64;
                let mut best = vec![f64::INFINITY; w];
                let mut color = vec![0.0; nplanes];
                for (k, (c, win)) in centers.iter().zip(&windows).enumerate() {
                    if yi < win.2 || yi > win.3 {
                        continue;
                    }
                    let dy = y as f64 - c.y;
                    for x in win.0 as usize..=win.1 as usize {
                        pixel_color(image, y * w + x, &mut color);
                        let dc: f64 = color
                            .iter()
                            .zip(&c.color)
                            .map(|(a, b)| (a - b) * (a - b))
                            .sum();
                        let dx = x as f64 - c.x;
                        let d = dc + (dx * dx + dy * dy) * spatial_weight;
                        if d < best[x] {
                            best[x] = d;
                            row[x] = k as u32;
                        }
                    }
                }
            });

        let mut sums = vec![vec![0.0; nplanes + 2]; centers.len()];
        let mut counts = vec![0usize; centers.len()];
        for (i, &l) in labels.iter().enumerate() {
            let s = &mut sums[l as usize];
            for (c, plane) in image.planes.iter().enumerate() {
                s[c] += plane[i] * COLOR_SCALE;
            }
            s[nplanes] += (i % w) as f64;
            s[nplanes + 1] += (i / w) as f64;
            counts[l as usize] += 1;
        }
        for ((center, s), &cnt) in centers.iter_mut().zip(&sums).zip(&counts) {
            if cnt == 0 {
                continue;
            }
            let inv = 1.0 / cnt as f64;
            for c in 0..nplanes {
                center.color[c] = s[c] * inv;
            }
            center.x = s[nplanes] * inv;
            center.y = s[nplanes + 1] * inv;
        }
    }

    let raw = LabelMap {
        width: w,
        height: h,
        labels,
        segment_count: centers.len(),
    };
    let min_size = (step * step / 4.0) as usize;
    Ok(enforce_connectivity(&raw, min_size))
}

fn find(parent: &mut [u32], mut x: u32) -> u32 {
    while parent[x as usize] != x {
        let p = parent[x as usize];
        parent[x as usize] = parent[p as usize];
        x = p;
    }
    x
}

/// Splits every label into 4-connected components, merges components smaller
/// than `min_size` into their largest adjacent segment, and relabels the
/// result contiguously in raster order.
pub fn enforce_connectivity(labels: &LabelMap, min_size: usize) -> LabelMap {
    let (w, h) = (labels.width, labels.height);
    let n = w * h;
    const UNSET: u32 = u32::MAX;

    let mut comp = vec![UNSET; n];
    let mut sizes: Vec<usize> = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..n {
        if comp[start] != UNSET {
            continue;
        }
        let id = sizes.len() as u32;
        let label = labels.labels[start];
        comp[start] = id;
        queue.push_back(start);
        let mut size = 0;
        while let Some(p) = queue.pop_front() {
            size += 1;
            let (x, y) = (p % w, p / w);
            let mut visit = |q: usize| {
                if comp[q] == UNSET && labels.labels[q] == label {
                    comp[q] = id;
                    queue.push_back(q);
                }
            };
            if x > 0 {
                visit(p - 1);
            }
            if x + 1 < w {
                visit(p + 1);
            }
            if y > 0 {
                visit(p - w);
            }
            if y + 1 < h {
                visit(p + w);
            }
        }
        sizes.push(size);
    }

    let ncomp = sizes.len();
    let mut adjacency: Vec<BTreeSet<u32>> = vec![BTreeSet::new(); ncomp];
    for p in 0..n {
        let a = comp[p];
        if p % w + 1 < w && comp[p + 1] != a {
            adjacency[a as usize].insert(comp[p + 1]);
            adjacency[comp[p + 1] as usize].insert(a);
        }
        if p + w < n && comp[p + w] != a {
            adjacency[a as usize].insert(comp[p + w]);
            adjacency[comp[p + w] as usize].insert(a);
        }
    }

    let mut parent: Vec<u32> = (0..ncomp as u32).collect();
    let mut group_size = sizes.clone();
    let mut order: Vec<u32> = (0..ncomp as u32).collect();
    order.sort_by_key(|&c| (sizes[c as usize], c));
    for c in order {
        let root = find(&mut parent, c);
        if group_size[root as usize] >= min_size {
            continue;
        }
        let neighbors: Vec<u32> = adjacency[root as usize].iter().copied().collect();
        let mut target: Option<u32> = None;
        for nb in neighbors {
            let r = find(&mut parent, nb);
            if r == root {
                continue;
            }
            target = match target {
                Some(t)
                    if group_size[t as usize] > group_size[r as usize]
                        || (group_size[t as usize] == group_size[r as usize] && t < r) =>
                {
                    Some(t)
                }
                _ => Some(r),
            };
        }
        let Some(t) = target else { continue };
        parent[root as usize] = t;
        group_size[t as usize] += group_size[root as usize];
        let mut moved = std::mem::take(&mut adjacency[root as usize]);
        if moved.len() > adjacency[t as usize].len() {
            std::mem::swap(&mut moved, &mut adjacency[t as usize]);
        }
        adjacency[t as usize].extend(moved);
    }

    let mut new_id = vec![UNSET; ncomp];
    let mut next = 0u32;
    let mut out = Vec::with_capacity(n);
    for &c in &comp {
        let r = find(&mut parent, c) as usize;
        if new_id[r] == UNSET {
            new_id[r] = next;
            next += 1;
        }
        out.push(new_id[r]);
    }
    LabelMap {
        width: w,
        height: h,
        labels: out,
        segment_count: next as usize,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(w: usize, h: usize, v: f64) -> PlaneImage {
        PlaneImage {
            width: w,
            height: h,
            planes: vec![vec![v; w * h]; 3],
        }
    }

    fn components_per_label(map: &LabelMap) -> Vec<usize> {
        // Independent BFS count of 4-connected components for each label.
        let (w, h) = (map.width, map.height);
        let mut seen = vec![false; w * h];
        let mut count = vec![0; map.segment_count];
        for s in 0..w * h {
            if seen[s] {
                continue;
            }
            count[map.labels[s] as usize] += 1;
            let mut stack = vec![s];
            seen[s] = true;
            while let Some(p) = stack.pop() {
                let (x, y) = (p % w, p / w);
                let nbrs = [
                    (x > 0).then(|| p - 1),
                    (x + 1 < w).then(|| p + 1),
                    (y > 0).then(|| p - w),
                    (y + 1 < h).then(|| p + w),
                ];
                for q in nbrs.into_iter().flatten() {
                    if !seen[q] && map.labels[q] == map.labels[p] {
                        seen[q] = true;
                        stack.push(q);
                    }
                }
            }
        }
        count
    }

    #[test]
    fn single_target_covers_image() {
        let map = slic(&uniform(20, 15, 0.3), &SlicParams::new(1)).unwrap();
        assert_eq!(map.segment_count, 1);
        assert!(map.labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn prime_targets_avoid_strip_grids() {
        let (nx, ny) = grid_shape(62, 75, 59);
        let aspect = (62.0 / nx as f64) / (75.0 / ny as f64);
        assert!((0.5..=2.0).contains(&aspect), "{nx}x{ny}");
        assert!((nx * ny).abs_diff(59) <= 6, "{nx}x{ny}");
        let map = slic(&uniform(62, 75, 0.5), &SlicParams::new(59)).unwrap();
        assert!((48..=71).contains(&map.segment_count), "{}", map.segment_count);
    }

    #[test]
    fn uniform_image_gives_grid_tiles() {
        let map = slic(&uniform(64, 64, 0.5), &SlicParams::new(16)).unwrap();
        assert!((14..=18).contains(&map.segment_count), "{}", map.segment_count);
        let sizes = map.segment_sizes();
        // 64·64/16 = 256 px per tile on a featureless input.
        assert!(sizes.iter().all(|&s| (200..=320).contains(&s)), "{sizes:?}");
        assert!(components_per_label(&map).iter().all(|&c| c == 1));
    }

    #[test]
    fn two_tone_boundary_is_found() {
        // 2-means on a left/right split: the optimal clustering is the tone split itself.
        let (w, h) = (40, 20);
        let mut img = uniform(w, h, 0.0);
        for p in &mut img.planes {
            for y in 0..h {
                for x in 17..w {
                    p[y * w + x] = 1.0;
                }
            }
        }
        let map = slic(&img, &SlicParams::new(2)).unwrap();
        assert_eq!(map.segment_count, 2);
        for y in 0..h {
            let row = &map.labels[y * w..(y + 1) * w];
            let boundary = (1..w).find(|&x| row[x] != row[x - 1]).unwrap();
            assert!(boundary.abs_diff(17) <= 1, "row {y} boundary {boundary}");
        }
    }

    #[test]
    fn too_many_segments_rejected() {
        assert!(matches!(
            slic(&uniform(3, 3, 0.0), &SlicParams::new(10)),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn connected_labeling_unchanged_up_to_relabel() {
        let (w, h) = (6, 4);
        let labels: Vec<u32> = (0..w * h).map(|i| if i % w < 3 { 7 } else { 2 }).collect();
        let map = LabelMap {
            width: w,
            height: h,
            labels,
            segment_count: 8,
        };
        let out = enforce_connectivity(&map, 4);
        assert_eq!(out.segment_count, 2);
        for i in 0..w * h {
            assert_eq!(out.labels[i], if i % w < 3 { 0 } else { 1 });
        }
    }

    #[test]
    fn small_island_absorbed_by_largest_neighbor() {
        // Label 0 has a main body on the left and a 2-px island inside label 1.
        let (w, h) = (10, 4);
        let mut labels = vec![0u32; w * h];
        for y in 0..h {
            for x in 4..w {
                labels[y * w + x] = if x >= 8 { 2 } else { 1 };
            }
        }
        labels[w + 6] = 0;
        labels[2 * w + 6] = 0;
        let map = LabelMap {
            width: w,
            height: h,
            labels,
            segment_count: 3,
        };
        let out = enforce_connectivity(&map, 4);
        assert_eq!(out.segment_count, 3);
        assert_eq!(out.labels[w + 6], out.labels[w + 5]);
        assert_eq!(out.labels[2 * w + 6], out.labels[2 * w + 5]);
        assert!(components_per_label(&out).iter().all(|&c| c == 1));
    }

    #[test]
    fn large_island_becomes_its_own_segment() {
        let (w, h) = (9, 3);
        let labels: Vec<u32> = (0..w * h)
            .map(|i| if (3..6).contains(&(i % w)) { 1 } else { 0 })
            .collect();
        let map = LabelMap {
            width: w,
            height: h,
            labels,
            segment_count: 2,
        };
        let out = enforce_connectivity(&map, 4);
        assert_eq!(out.segment_count, 3);
    }

    #[test]
    fn checkerboard_collapses_to_connected_segments() {
        let (w, h) = (12, 12);
        let labels: Vec<u32> = (0..w * h).map(|i| ((i % w + i / w) % 2) as u32).collect();
        let map = LabelMap {
            width: w,
            height: h,
            labels,
            segment_count: 2,
        };
        let out = enforce_connectivity(&map, 9);
        assert!(out.segment_count < 20, "{}", out.segment_count);
        assert!(out.segment_sizes().iter().all(|&s| s >= 9));
        assert!(components_per_label(&out).iter().all(|&c| c == 1));
    }

    #[test]
    fn label_map_round_trip() {
        let map = slic(&uniform(30, 20, 0.1), &SlicParams::new(6)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_label_map(&map, Some(&SlicParams::new(6)), dir.path()).unwrap();
        assert_eq!(read_label_map(dir.path()).unwrap(), map);
    }

    #[test]
    fn default_target_from_density() {
        assert_eq!(SlicParams::for_image(977, 998, 700).target_segments, 1393);
        assert_eq!(SlicParams::for_image(10, 10, 700).target_segments, 1);
    }
}
