//! Segment table: majority labels, quality filters and stratified splits.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{Scene, FOREST, NON_FOREST};
use crate::superpixel::LabelMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassLabel {
    Forest,
    NonForest,
}

impl ClassLabel {
    /// `+1` for the positive (non-forest) class, `-1` otherwise.
    pub fn sign(self) -> f64 {
        match self {
            ClassLabel::Forest => -1.0,
            ClassLabel::NonForest => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    Unassigned,
    Train,
    Val,
    Test,
    Excluded,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Unassigned => "unassigned",
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
            Split::Excluded => "excluded",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentRecord {
    pub segment_id: u32,
    pub scene_id: String,
    pub area: usize,
    /// Inclusive pixel bounds `(x0, y0, x1, y1)`.
    pub bbox: (usize, usize, usize, usize),
    pub homogeneity: f64,
    pub label: ClassLabel,
    pub split: Split,
    /// Flat pixel indices into the scene, raster order.
    pub pixels: Vec<u32>,
}

impl SegmentRecord {
    pub fn is_kept(&self) -> bool {
        self.split != Split::Excluded
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterThresholds {
    pub min_homogeneity: f64,
    pub min_area: usize,
}

impl Default for FilterThresholds {
    fn default() -> Self {
        FilterThresholds {
            min_homogeneity: 0.70,
            min_area: 70,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions {
            train: 0.70,
            val: 0.15,
            test: 0.15,
        }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::Parameter(format!("split fractions {parts:?} outside [0, 1]")));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Parameter(format!("split fractions {parts:?} do not sum to 1")));
        }
        Ok(())
    }
}

fn bbox_of(pixels: &[u32], width: usize) -> (usize, usize, usize, usize) {
    pixels.iter().fold(
        (usize::MAX, usize::MAX, 0, 0),
        |(x0, y0, x1, y1), &p| {
            let (x, y) = (p as usize % width, p as usize / width);
            (x0.min(x), y0.min(y), x1.max(x), y1.max(y))
        },
    )
}

fn make_record(scene: &Scene, segment_id: u32, pixels: Vec<u32>) -> SegmentRecord {
    let mask = &scene.mask().labels;
    let (mut forest, mut non_forest) = (0usize, 0usize);
    for &p in &pixels {
        match mask[p as usize] {
            FOREST => forest += 1,
            NON_FOREST => non_forest += 1,
            _ => {}
        }
    }
    let valid = forest + non_forest;
    // Ties go to non-forest.
    let label = if non_forest >= forest {
        ClassLabel::NonForest
    } else {
        ClassLabel::Forest
    };
    let (homogeneity, split) = if valid == 0 {
        (0.0, Split::Excluded)
    } else {
        (forest.max(non_forest) as f64 / valid as f64, Split::Unassigned)
    };
    SegmentRecord {
        segment_id,
        scene_id: scene.id().to_string(),
        area: pixels.len(),
        bbox: bbox_of(&pixels, scene.width()),
        homogeneity,
        label,
        split,
        pixels,
    }
}

/// One record per segment id. Homogeneity counts only non-nodata pixels;
/// segments with no valid pixel are excluded up front.
pub fn build_segment_table(scene: &Scene, labels: &LabelMap) -> Result<Vec<SegmentRecord>> {
    if labels.width != scene.width() || labels.height != scene.height() {
        return Err(Error::Validation(format!(
            "label map {}x{} does not match scene {} ({}x{})",
            labels.width,
            labels.height,
            scene.id(),
            scene.width(),
            scene.height()
        )));
    }
    Ok(labels
        .segment_pixels()
        .into_par_iter()
        .enumerate()
        .map(|(id, pixels)| make_record(scene, id as u32, pixels))
        .collect())
}

/// Marks records failing either threshold as excluded. Boundary values are kept.
pub fn filter_segments(mut records: Vec<SegmentRecord>, thresholds: FilterThresholds) -> Vec<SegmentRecord> {
    for r in &mut records {
        if r.homogeneity < thresholds.min_homogeneity || r.area < thresholds.min_area {
            r.split = Split::Excluded;
        }
    }
    records
}

fn share(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64) + 1e-9).floor() as usize
}

/// Stratified random split of the kept records.
///
/// Each class is shuffled independently (forest first, then non-forest, from
/// one seeded stream) and cut into train = floor, val = floor, test = rest.
pub fn split_segments(
    mut records: Vec<SegmentRecord>,
    fractions: SplitFractions,
    seed: u64,
) -> Result<Vec<SegmentRecord>> {
    fractions.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for class in [ClassLabel::Forest, ClassLabel::NonForest] {
        let mut members: Vec<usize> = records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.is_kept() && r.label == class)
            .map(|(i, _)| i)
            .collect();
        if members.len() < 3 {
            return Err(Error::Stratification(format!(
                "class {class:?} has {} kept segment(s); at least 3 are required",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        let n = members.len();
        let n_train = share(fractions.train, n);
        let n_val = share(fractions.val, n).min(n - n_train);
        for (k, &i) in members.iter().enumerate() {
            records[i].split = if k < n_train {
                Split::Train
            } else if k < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
        }
    }
    Ok(records)
}

/// Counts of kept records per (split, class).
pub fn split_counts(records: &[SegmentRecord]) -> HashMap<(Split, ClassLabel), usize> {
    let mut out = HashMap::new();
    for r in records.iter().filter(|r| r.is_kept()) {
        *out.entry((r.split, r.label)).or_insert(0) += 1;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SegmentRow {
    segment_id: u32,
    scene_id: String,
    area: usize,
    homogeneity: f64,
    label: ClassLabel,
    split: Split,
}

pub fn write_segment_csv(records: &[SegmentRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(SegmentRow {
            segment_id: r.segment_id,
            scene_id: r.scene_id.clone(),
            area: r.area,
            homogeneity: r.homogeneity,
            label: r.label,
            split: r.split,
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Reads a segment table and reattaches pixel sets from the per-scene label maps.
pub fn read_segment_csv(path: &Path, label_maps: &HashMap<String, LabelMap>) -> Result<Vec<SegmentRecord>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut pixel_cache: HashMap<&str, Vec<Vec<u32>>> = HashMap::new();
    let mut out = Vec::new();
    for row in reader.deserialize() {
        let row: SegmentRow = row?;
        let (scene_key, map) = label_maps.get_key_value(&row.scene_id).ok_or_else(|| {
            Error::Validation(format!("no label map for scene {}", row.scene_id))
        })?;
        let pixels = pixel_cache
            .entry(scene_key.as_str())
            .or_insert_with(|| map.segment_pixels());
        let seg = pixels.get(row.segment_id as usize).ok_or_else(|| {
            Error::Validation(format!(
                "segment {} not in label map of scene {}",
                row.segment_id, row.scene_id
            ))
        })?;
        if seg.len() != row.area {
            return Err(Error::Validation(format!(
                "segment {} of scene {}: area {} in table, {} in label map",
                row.segment_id,
                row.scene_id,
                row.area,
                seg.len()
            )));
        }
        out.push(SegmentRecord {
            segment_id: row.segment_id,
            bbox: bbox_of(seg, map.width),
            pixels: seg.clone(),
            scene_id: row.scene_id,
            area: row.area,
            homogeneity: row.homogeneity,
            label: row.label,
            split: row.split,
        });
    }
    Ok(out)
}
