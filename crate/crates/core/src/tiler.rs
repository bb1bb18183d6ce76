//! Sliding-window tiling of band compositions with dihedral augmentation.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{composition_ranges, write_png, PngColor, Scene, StretchParams, StretchRange};

pub const INDEX_FILE: &str = "index.csv";
pub const RAW_HEADER_FILE: &str = "tiles.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Augment {
    None,
    /// Identity and the three rotations (transforms 0..=3).
    Rot4,
    /// The full dihedral group (transforms 0..=7).
    D8,
}

impl Augment {
    pub fn transforms(self) -> std::ops::Range<u8> {
        match self {
            Augment::None => 0..1,
            Augment::Rot4 => 0..4,
            Augment::D8 => 0..8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TileCompression {
    Fast,
    Balanced,
    None,
}

impl From<TileCompression> for png::Compression {
    fn from(c: TileCompression) -> Self {
        match c {
            TileCompression::Fast => png::Compression::Fast,
            TileCompression::Balanced => png::Compression::Balanced,
            TileCompression::None => png::Compression::NoCompression,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TileSpec {
    pub tile_size: usize,
    pub stride: usize,
    /// Augmentation applied to training tiles; test tiles are never augmented.
    pub augment: Augment,
    pub compression: TileCompression,
    pub stretch: StretchParams,
}

impl Default for TileSpec {
    fn default() -> Self {
        TileSpec {
            tile_size: 256,
            stride: 64,
            augment: Augment::D8,
            compression: TileCompression::Fast,
            stretch: StretchParams::default(),
        }
    }
}

impl TileSpec {
    pub fn validate(&self) -> Result<()> {
        if self.tile_size == 0 || self.stride == 0 || self.stride > self.tile_size {
            return Err(Error::Parameter(format!(
                "tile_size {} and stride {} must satisfy 0 < stride <= tile_size",
                self.tile_size, self.stride
            )));
        }
        Ok(())
    }
}

/// Top-left corners of every full window, row-major.
pub fn grid_windows(width: usize, height: usize, spec: &TileSpec) -> Result<Vec<(usize, usize)>> {
    spec.validate()?;
    if width < spec.tile_size || height < spec.tile_size {
        return Err(Error::Validation(format!(
            "scene {width}x{height} is smaller than a {0}x{0} tile",
            spec.tile_size
        )));
    }
    let nx = (width - spec.tile_size) / spec.stride + 1;
    let ny = (height - spec.tile_size) / spec.stride + 1;
    Ok((0..ny)
        .flat_map(|j| (0..nx).map(move |i| (i * spec.stride, j * spec.stride)))
        .collect())
}

/// Source coordinates `(row, col)` that transform `t` reads for output `(r, c)`.
fn source(t: u8, n: usize, r: usize, c: usize) -> (usize, usize) {
    let m = n - 1;
    match t {
        0 => (r, c),
        1 => (m - c, r),
        2 => (m - r, m - c),
        3 => (c, m - r),
        4 => (r, m - c),
        5 => (m - r, c),
        6 => (c, r),
        7 => (m - c, m - r),
        _ => unreachable!("transform ids are validated"),
    }
}

pub fn inverse_transform(t: u8) -> u8 {
    match t {
        1 => 3,
        3 => 1,
        other => other,
    }
}

/// Applies dihedral transform `t` (0 identity, 1..=3 clockwise rotations by
/// 90/180/270, 4 horizontal flip, 5 vertical flip, 6 transpose,
/// 7 anti-transpose) to a square interleaved tile.
pub fn transform_tile<T: Copy>(data: &[T], size: usize, channels: usize, t: u8) -> Result<Vec<T>> {
    if t > 7 {
        return Err(Error::Parameter(format!("transform id {t} outside 0..=7")));
    }
    if channels == 0 || data.len() != size * size * channels {
        return Err(Error::Validation(format!(
            "tile of {} values is not a square {size}x{size}x{channels} tile",
            data.len()
        )));
    }
    let mut out = Vec::with_capacity(data.len());
    for r in 0..size {
        for c in 0..size {
            let (sr, sc) = source(t, size, r, c);
            let at = (sr * size + sc) * channels;
            out.extend_from_slice(&data[at..at + channels]);
        }
    }
    Ok(out)
}

/// Transformed image and mask pair of a square tile for every id in `0..=7`.
#[allow(clippy::type_complexity)]
pub fn augment_d8<T: Copy>(
    image: &[T],
    mask: &[u8],
    size: usize,
    channels: usize,
) -> Result<Vec<(u8, Vec<T>, Vec<u8>)>> {
    if mask.len() != size * size {
        return Err(Error::Validation(format!(
            "mask of {} values is not a square {size}x{size} tile",
            mask.len()
        )));
    }
    (0..8)
        .map(|t| Ok((t, transform_tile(image, size, channels, t)?, transform_tile(mask, size, 1, t)?)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TileSplit {
    Train,
    Test,
}

impl fmt::Display for TileSplit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TileSplit::Train => "train",
            TileSplit::Test => "test",
        })
    }
}

/// Scene ids assigned to each tile split.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

impl SplitPlan {
    pub fn split_of(&self, scene_id: &str) -> Option<TileSplit> {
        if self.train.iter().any(|s| s == scene_id) {
            Some(TileSplit::Train)
        } else if self.test.iter().any(|s| s == scene_id) {
            Some(TileSplit::Test)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileEntry {
    pub scene_id: String,
    pub x: usize,
    pub y: usize,
    pub transform: u8,
    pub split: TileSplit,
    /// Paths relative to the dataset root.
    pub image: String,
    pub mask: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TileSet {
    pub root: PathBuf,
    pub entries: Vec<TileEntry>,
}

impl TileSet {
    pub fn count(&self, split: TileSplit) -> usize {
        self.entries.iter().filter(|e| e.split == split).count()
    }
}

/// Layout of `.raw` tiles written for compositions that are not three bands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawTileHeader {
    pub tile_size: usize,
    pub bands: Vec<usize>,
    pub dtype: String,
    pub interleave: String,
}

fn check_plan(scenes: &[&Scene], composition: &[usize], plan: &SplitPlan, spec: &TileSpec) -> Result<Vec<TileSplit>> {
    spec.validate()?;
    if composition.is_empty() {
        return Err(Error::Parameter("composition selects no band".into()));
    }
    scenes
        .iter()
        .map(|scene| {
            for &b in composition {
                scene.band(b)?;
            }
            grid_windows(scene.width(), scene.height(), spec)?;
            plan.split_of(scene.id())
                .ok_or_else(|| Error::Validation(format!("scene {} is in neither the train nor the test list", scene.id())))
        })
        .collect()
}

/// Entries `build_dataset` would emit, without touching the filesystem.
pub fn plan_dataset(scenes: &[&Scene], composition: &[usize], plan: &SplitPlan, spec: &TileSpec) -> Result<Vec<TileEntry>> {
    let splits = check_plan(scenes, composition, plan, spec)?;
    let ext = if composition.len() == 3 { "png" } else { "raw" };
    let mut entries = Vec::new();
    for (scene, split) in scenes.iter().zip(splits) {
        let transforms = match split {
            TileSplit::Train => spec.augment.transforms(),
            TileSplit::Test => Augment::None.transforms(),
        };
        for (x, y) in grid_windows(scene.width(), scene.height(), spec)? {
            for t in transforms.clone() {
                let stem = format!("{split}/{}_{x}_{y}_t{t}", scene.id());
                entries.push(TileEntry {
                    scene_id: scene.id().to_string(),
                    x,
                    y,
                    transform: t,
                    split,
                    image: format!("{stem}.{ext}"),
                    mask: format!("{stem}_mask.png"),
                });
            }
        }
    }
    Ok(entries)
}

fn crop<T: Copy>(plane: &[T], width: usize, x: usize, y: usize, size: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(size * size);
    for r in y..y + size {
        out.extend_from_slice(&plane[r * width + x..r * width + x + size]);
    }
    out
}

/// Interleaved window of the composition: 8-bit stretched RGB for three bands,
/// raw samples otherwise.
enum Window {
    Rgb(Vec<u8>),
    Raw(Vec<u16>),
}

fn render_window(scene: &Scene, composition: &[usize], ranges: &[StretchRange], x: usize, y: usize, size: usize) -> Result<Window> {
    let planes: Vec<Vec<u16>> = composition
        .iter()
        .map(|&b| Ok(crop(&scene.band(b)?.samples, scene.width(), x, y, size)))
        .collect::<Result<_>>()?;
    let k = planes.len();
    let n = size * size;
    if k == 3 {
        let mut out = Vec::with_capacity(n * 3);
        for i in 0..n {
            for c in 0..3 {
                out.push(ranges[c].apply(planes[c][i] as f64));
            }
        }
        Ok(Window::Rgb(out))
    } else {
        let mut out = Vec::with_capacity(n * k);
        for i in 0..n {
            out.extend(planes.iter().map(|p| p[i]));
        }
        Ok(Window::Raw(out))
    }
}

fn write_raw(path: &Path, data: &[u16]) -> Result<()> {
    let bytes: Vec<u8> = data.iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Cuts every scene into tiles of `composition` and writes them under `out`.
/// All inputs are checked before the first file is created.
pub fn build_dataset(
    scenes: &[&Scene],
    composition: &[usize],
    plan: &SplitPlan,
    spec: &TileSpec,
    out: &Path,
) -> Result<TileSet> {
    let entries = plan_dataset(scenes, composition, plan, spec)?;
    for split in [TileSplit::Train, TileSplit::Test] {
        let dir = out.join(split.to_string());
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let size = spec.tile_size;
    let k = composition.len();
    if k != 3 {
        let header = RawTileHeader {
            tile_size: size,
            bands: composition.to_vec(),
            dtype: "u16le".into(),
            interleave: "pixel".into(),
        };
        let path = out.join(RAW_HEADER_FILE);
        fs::write(&path, serde_json::to_vec_pretty(&header)?).map_err(|e| Error::io(&path, e))?;
    }

    let mut by_window: HashMap<(&str, usize, usize), Vec<&TileEntry>> = HashMap::new();
    for e in &entries {
        by_window.entry((e.scene_id.as_str(), e.x, e.y)).or_default().push(e);
    }
    for scene in scenes {
        let ranges = if k == 3 {
            composition_ranges(scene, composition, spec.stretch)?
        } else {
            Vec::new()
        };
        let windows = grid_windows(scene.width(), scene.height(), spec)?;
        windows.par_iter().try_for_each(|&(x, y)| -> Result<()> {
            let window = render_window(scene, composition, &ranges, x, y, size)?;
            let mask = crop(&scene.mask().labels, scene.width(), x, y, size);
            for e in &by_window[&(scene.id(), x, y)] {
                let t = e.transform;
                let m = transform_tile(&mask, size, 1, t)?;
                write_png(&out.join(&e.mask), size, size, PngColor::Gray, &m, spec.compression.into())?;
                match &window {
                    Window::Rgb(img) => {
                        let img = transform_tile(img, size, 3, t)?;
                        write_png(&out.join(&e.image), size, size, PngColor::Rgb, &img, spec.compression.into())?;
                    }
                    Window::Raw(img) => write_raw(&out.join(&e.image), &transform_tile(img, size, k, t)?)?,
                }
            }
            Ok(())
        })?;
    }

    let index = out.join(INDEX_FILE);
    let mut w = csv::Writer::from_path(&index).map_err(|e| Error::Format {
        what: index.display().to_string(),
        detail: e.to_string(),
    })?;
    for e in &entries {
        w.serialize(e)?;
    }
    w.flush().map_err(|e| Error::io(&index, e))?;
    Ok(TileSet {
        root: out.to_path_buf(),
        entries,
    })
}
