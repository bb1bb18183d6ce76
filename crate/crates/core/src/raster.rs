//! Multiband scenes on disk and in memory.
//!
//! A scene directory holds `header.json`, one `band_<i>.raw` per band
//! (little-endian `u16`, row-major) and `mask.raw` (`u8`, row-major). Band
//! indices are 1-based. Geo-referencing, when present, is carried as opaque
//! JSON and written back untouched.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use png::Compression as PngCompression;

pub const FOREST: u8 = 0;
pub const NON_FOREST: u8 = 1;
pub const NODATA: u8 = 255;

pub const HEADER_FILE: &str = "header.json";
pub const MASK_FILE: &str = "mask.raw";

pub fn band_file_name(index: usize) -> String {
    format!("band_{index}.raw")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneHeader {
    pub width: usize,
    pub height: usize,
    pub bands: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pixel_area_km2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub georef: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandPlane {
    pub index: usize,
    pub samples: Vec<u16>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassMask {
    pub labels: Vec<u8>,
}

impl ClassMask {
    pub fn new(labels: Vec<u8>) -> Result<Self> {
        if let Some((offset, v)) = labels
            .iter()
            .enumerate()
            .find(|(_, &v)| !matches!(v, FOREST | NON_FOREST | NODATA))
        {
            return Err(Error::Validation(format!(
                "mask value {v} at offset {offset} is not one of 0, 1, 255"
            )));
        }
        Ok(ClassMask { labels })
    }
}

/// A validated multiband raster with its aligned ground-truth mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    id: String,
    width: usize,
    height: usize,
    bands: Vec<BandPlane>,
    mask: ClassMask,
    pixel_area_km2: Option<f64>,
    georef: Option<serde_json::Value>,
}

impl Scene {
    /// Builds a scene from planes ordered by band index (1..=B).
    pub fn new(
        id: impl Into<String>,
        width: usize,
        height: usize,
        bands: Vec<Vec<u16>>,
        mask: ClassMask,
    ) -> Result<Self> {
        let planes = bands
            .into_iter()
            .enumerate()
            .map(|(i, samples)| BandPlane {
                index: i + 1,
                samples,
            })
            .collect();
        Self::from_planes(id.into(), width, height, planes, mask)
    }

    fn from_planes(
        id: String,
        width: usize,
        height: usize,
        bands: Vec<BandPlane>,
        mask: ClassMask,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Validation(format!(
                "scene {id}: dimensions {width}x{height} must be positive"
            )));
        }
        if bands.is_empty() {
            return Err(Error::Validation(format!("scene {id}: no bands")));
        }
        let n = width * height;
        for (i, b) in bands.iter().enumerate() {
            if b.index != i + 1 {
                return Err(Error::Validation(format!(
                    "scene {id}: band at position {i} has index {}",
                    b.index
                )));
            }
            if b.samples.len() != n {
                return Err(Error::Validation(format!(
                    "scene {id}: band {} has {} samples, expected {n}",
                    b.index,
                    b.samples.len()
                )));
            }
        }
        if mask.labels.len() != n {
            return Err(Error::Validation(format!(
                "scene {id}: mask has {} pixels, expected {n}",
                mask.labels.len()
            )));
        }
        Ok(Scene {
            id,
            width,
            height,
            bands,
            mask,
            pixel_area_km2: None,
            georef: None,
        })
    }

    pub fn with_pixel_area(mut self, km2: Option<f64>) -> Self {
        self.pixel_area_km2 = km2;
        self
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn band_count(&self) -> usize {
        self.bands.len()
    }

    pub fn bands(&self) -> &[BandPlane] {
        &self.bands
    }

    pub fn mask(&self) -> &ClassMask {
        &self.mask
    }

    pub fn pixel_area_km2(&self) -> Option<f64> {
        self.pixel_area_km2
    }

    /// Band by 1-based index.
    pub fn band(&self, index: usize) -> Result<&BandPlane> {
        if index == 0 || index > self.bands.len() {
            return Err(Error::Parameter(format!(
                "band {index} not in scene {} (valid bands: 1..={})",
                self.id,
                self.bands.len()
            )));
        }
        Ok(&self.bands[index - 1])
    }

    pub fn header(&self) -> SceneHeader {
        SceneHeader {
            width: self.width,
            height: self.height,
            bands: self.bands.len(),
            pixel_area_km2: self.pixel_area_km2,
            id: Some(self.id.clone()),
            georef: self.georef.clone(),
        }
    }
}

fn read_exact_len(path: &Path, expected: usize) -> Result<Vec<u8>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < expected {
        return Err(Error::ShortRead {
            path: path.to_path_buf(),
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(Error::Validation(format!(
            "{}: {} bytes, expected {expected} for the declared dimensions",
            path.display(),
            bytes.len()
        )));
    }
    Ok(bytes)
}

pub fn read_header(dir: &Path) -> Result<SceneHeader> {
    let path = dir.join(HEADER_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let header: SceneHeader = serde_json::from_str(&text).map_err(|e| Error::Format {
        what: path.display().to_string(),
        detail: e.to_string(),
    })?;
    Ok(header)
}

/// Loads and validates a scene directory.
pub fn load_scene(dir: impl AsRef<Path>) -> Result<Scene> {
    let dir = dir.as_ref();
    let header = read_header(dir)?;
    let n = header.width * header.height;
    if header.bands == 0 {
        return Err(Error::Validation(format!(
            "{}: header declares zero bands",
            dir.display()
        )));
    }

    let mut planes = Vec::with_capacity(header.bands);
    for index in 1..=header.bands {
        let path = dir.join(band_file_name(index));
        let bytes = read_exact_len(&path, n * 2)?;
        let samples = bytes
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes([c[0], c[1]]))
            .collect();
        planes.push(BandPlane { index, samples });
    }

    let mask_path = dir.join(MASK_FILE);
    let mask = ClassMask::new(read_exact_len(&mask_path, n)?)
        .map_err(|e| Error::Validation(format!("{}: {e}", mask_path.display())))?;

    let id = header.id.clone().unwrap_or_else(|| {
        dir.file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "scene".to_string())
    });
    let mut scene = Scene::from_planes(id, header.width, header.height, planes, mask)?;
    scene.pixel_area_km2 = header.pixel_area_km2;
    scene.georef = header.georef;
    Ok(scene)
}

/// Writes a scene in the directory layout read by [`load_scene`].
pub fn write_scene(scene: &Scene, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let header_path = dir.join(HEADER_FILE);
    let header = serde_json::to_string_pretty(&scene.header())?;
    fs::write(&header_path, header).map_err(|e| Error::io(&header_path, e))?;
    for band in &scene.bands {
        let path = dir.join(band_file_name(band.index));
        let bytes: Vec<u8> = band.samples.iter().flat_map(|v| v.to_le_bytes()).collect();
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    }
    let mask_path = dir.join(MASK_FILE);
    fs::write(&mask_path, &scene.mask.labels).map_err(|e| Error::io(&mask_path, e))?;
    Ok(())
}

/// Linear min-max quantization of a band into `levels` gray levels.
///
/// `q = floor((v - min) * levels / (max - min + 1))`; a constant band maps to 0.
pub fn quantize_band(plane: &BandPlane, levels: usize) -> Result<Vec<u8>> {
    quantize_samples(&plane.samples, levels)
}

pub fn quantize_samples(samples: &[u16], levels: usize) -> Result<Vec<u8>> {
    if !(2..=256).contains(&levels) {
        return Err(Error::Parameter(format!(
            "quantization levels must be in 2..=256, got {levels}"
        )));
    }
    let (min, max) = samples
        .iter()
        .fold((u16::MAX, u16::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if samples.is_empty() {
        return Ok(Vec::new());
    }
    let span = (max - min) as u64 + 1;
    let levels = levels as u64;
    Ok(samples
        .iter()
        .map(|&v| ((v - min) as u64 * levels / span) as u8)
        .collect())
}

/// Percentile bounds for the linear contrast stretch used by PNG export.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StretchParams {
    pub low_percentile: f64,
    pub high_percentile: f64,
}

impl Default for StretchParams {
    fn default() -> Self {
        StretchParams {
            low_percentile: 2.0,
            high_percentile: 98.0,
        }
    }
}

/// Low/high cut values of a percentile stretch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StretchRange {
    pub low: f64,
    pub high: f64,
}

impl StretchRange {
    pub fn apply(&self, v: f64) -> u8 {
        if self.high <= self.low {
            return 0;
        }
        let t = ((v - self.low) / (self.high - self.low)).clamp(0.0, 1.0);
        (t * 255.0).round() as u8
    }
}

fn percentile_ranks(n: usize, params: StretchParams) -> (usize, usize) {
    let last = (n - 1) as f64;
    let lo = (params.low_percentile / 100.0 * last).floor() as usize;
    let hi = (params.high_percentile / 100.0 * last).ceil() as usize;
    (lo.min(n - 1), hi.min(n - 1))
}

/// Stretch range of 16-bit samples, computed from a full histogram.
pub fn stretch_range_u16(samples: &[u16], params: StretchParams) -> StretchRange {
    if samples.is_empty() {
        return StretchRange { low: 0.0, high: 0.0 };
    }
    let mut hist = vec![0usize; 1 << 16];
    for &v in samples {
        hist[v as usize] += 1;
    }
    let (lo_rank, hi_rank) = percentile_ranks(samples.len(), params);
    let value_at = |rank: usize| {
        let mut seen = 0usize;
        for (v, &c) in hist.iter().enumerate() {
            seen += c;
            if seen > rank {
                return v as f64;
            }
        }
        u16::MAX as f64
    };
    StretchRange {
        low: value_at(lo_rank),
        high: value_at(hi_rank),
    }
}

/// Stretch range of real-valued samples (same rank rule as the 16-bit path).
pub fn stretch_range_f64(samples: &[f64], params: StretchParams) -> StretchRange {
    if samples.is_empty() {
        return StretchRange { low: 0.0, high: 0.0 };
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (lo_rank, hi_rank) = percentile_ranks(sorted.len(), params);
    StretchRange {
        low: sorted[lo_rank],
        high: sorted[hi_rank],
    }
}

fn check_band_order(scene: &Scene, band_order: &[usize]) -> Result<()> {
    if band_order.len() != 3 {
        return Err(Error::Parameter(format!(
            "RGB composition needs exactly 3 bands, got {}",
            band_order.len()
        )));
    }
    for &b in band_order {
        scene.band(b)?;
    }
    Ok(())
}

/// Per-channel stretch ranges for an RGB composition computed over the whole scene.
pub fn composition_ranges(
    scene: &Scene,
    band_order: &[usize],
    params: StretchParams,
) -> Result<Vec<StretchRange>> {
    check_band_order(scene, band_order)?;
    band_order
        .iter()
        .map(|&b| Ok(stretch_range_u16(&scene.band(b)?.samples, params)))
        .collect()
}

/// Interleaved 8-bit RGB rendering of three bands.
pub fn compose_rgb(scene: &Scene, band_order: &[usize], params: StretchParams) -> Result<Vec<u8>> {
    let ranges = composition_ranges(scene, band_order, params)?;
    let planes: Vec<&[u16]> = band_order
        .iter()
        .map(|&b| scene.band(b).map(|p| p.samples.as_slice()))
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(scene.pixel_count() * 3);
    for i in 0..scene.pixel_count() {
        for c in 0..3 {
            out.push(ranges[c].apply(planes[c][i] as f64));
        }
    }
    Ok(out)
}

/// Renders bands `band_order` as R, G, B and writes an 8-bit PNG.
pub fn compose_png(
    scene: &Scene,
    band_order: &[usize],
    params: StretchParams,
    out: impl AsRef<Path>,
) -> Result<PathBuf> {
    let rgb = compose_rgb(scene, band_order, params)?;
    let out = out.as_ref();
    write_png(out, scene.width(), scene.height(), PngColor::Rgb, &rgb, png::Compression::Balanced)?;
    Ok(out.to_path_buf())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PngColor {
    Gray,
    Rgb,
}

pub fn write_png(
    path: &Path,
    width: usize,
    height: usize,
    color: PngColor,
    data: &[u8],
    compression: png::Compression,
) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    encoder.set_color(match color {
        PngColor::Gray => png::ColorType::Grayscale,
        PngColor::Rgb => png::ColorType::Rgb,
    });
    encoder.set_depth(png::BitDepth::Eight);
    encoder.set_compression(compression);
    let mut writer = encoder.write_header()?;
    writer.write_image_data(data)?;
    writer.finish()?;
    Ok(())
}

/// Decoded 8-bit PNG: (width, height, channels, bytes).
pub fn read_png(path: &Path) -> Result<(usize, usize, usize, Vec<u8>)> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let decoder = png::Decoder::new(std::io::BufReader::new(file));
    let mut reader = decoder.read_info()?;
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
    let info = reader.next_frame(&mut buf)?;
    buf.truncate(info.buffer_size());
    Ok((
        info.width as usize,
        info.height as usize,
        info.color_type.samples(),
        buf,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_scene() -> Scene {
        let bands = (0..7)
            .map(|b| (0..12).map(|i| (i * 100 + b * 7) as u16).collect())
            .collect();
        Scene::new("t", 4, 3, bands, ClassMask::new(vec![0; 12]).unwrap()).unwrap()
    }

    #[test]
    fn load_two_band_scene() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join(HEADER_FILE),
            r#"{"width":4,"height":3,"bands":2}"#,
        )
        .unwrap();
        fs::write(dir.path().join("band_1.raw"), [1u8; 24]).unwrap();
        fs::write(dir.path().join("band_2.raw"), [2u8; 24]).unwrap();
        fs::write(dir.path().join(MASK_FILE), [0u8; 12]).unwrap();
        let scene = load_scene(dir.path()).unwrap();
        assert_eq!(scene.band_count(), 2);
        assert_eq!(scene.band(1).unwrap().samples.len(), 12);
        assert_eq!(scene.band(2).unwrap().samples[0], 0x0202);
    }

    #[test]
    fn short_band_file_is_a_short_read() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join(HEADER_FILE),
            r#"{"width":4,"height":3,"bands":1}"#,
        )
        .unwrap();
        fs::write(dir.path().join("band_1.raw"), [0u8; 23]).unwrap();
        fs::write(dir.path().join(MASK_FILE), [0u8; 12]).unwrap();
        let err = load_scene(dir.path()).unwrap_err();
        match err {
            Error::ShortRead { path, expected, found } => {
                assert!(path.ends_with("band_1.raw"));
                assert_eq!((expected, found), (24, 23));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_mask_names_the_file() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join(HEADER_FILE),
            r#"{"width":4,"height":3,"bands":1}"#,
        )
        .unwrap();
        fs::write(dir.path().join("band_1.raw"), [0u8; 24]).unwrap();
        let err = load_scene(dir.path()).unwrap_err();
        assert!(err.to_string().contains("mask.raw"), "{err}");
    }

    #[test]
    fn bad_mask_value_reports_value_and_offset() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join(HEADER_FILE),
            r#"{"width":4,"height":3,"bands":1}"#,
        )
        .unwrap();
        fs::write(dir.path().join("band_1.raw"), [0u8; 24]).unwrap();
        let mut mask = [0u8; 12];
        mask[5] = 7;
        fs::write(dir.path().join(MASK_FILE), mask).unwrap();
        let err = load_scene(dir.path()).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::Validation(_)));
        assert!(msg.contains("value 7") && msg.contains("offset 5"), "{msg}");
    }

    #[test]
    fn write_then_load_is_byte_identical() {
        let scene = tiny_scene().with_pixel_area(Some(0.0009));
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        write_scene(&scene, a.path()).unwrap();
        let loaded = load_scene(a.path()).unwrap();
        assert_eq!(loaded, scene);
        write_scene(&loaded, b.path()).unwrap();
        for i in 1..=7 {
            let name = band_file_name(i);
            assert_eq!(
                fs::read(a.path().join(&name)).unwrap(),
                fs::read(b.path().join(&name)).unwrap()
            );
        }
    }

    #[test]
    fn quantize_endpoints_full_range() {
        let plane = BandPlane {
            index: 1,
            samples: (0..=u16::MAX).collect(),
        };
        let q = quantize_band(&plane, 32).unwrap();
        assert_eq!(q[0], 0);
        assert_eq!(*q.last().unwrap(), 31);
    }

    #[test]
    fn quantize_constant_and_small() {
        assert_eq!(quantize_samples(&[500; 9], 32).unwrap(), vec![0; 9]);
        assert_eq!(quantize_samples(&[10, 20, 30], 2).unwrap(), vec![0, 0, 1]);
        assert!(matches!(
            quantize_samples(&[1, 2], 1),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn constant_band_renders_black() {
        let mut bands: Vec<Vec<u16>> = (0..3).map(|_| (0..12).map(|i| i * 10).collect()).collect();
        bands[1] = vec![777; 12];
        let scene = Scene::new("c", 4, 3, bands, ClassMask::new(vec![0; 12]).unwrap()).unwrap();
        let rgb = compose_rgb(&scene, &[1, 2, 3], StretchParams::default()).unwrap();
        assert!(rgb.chunks(3).all(|px| px[1] == 0));
        assert!(rgb.chunks(3).any(|px| px[0] > 0));
    }

    #[test]
    fn composition_channels_follow_band_order() {
        let scene = tiny_scene();
        let rgb = compose_rgb(&scene, &[6, 5, 1], StretchParams::default()).unwrap();
        let r = stretch_range_u16(&scene.band(6).unwrap().samples, StretchParams::default());
        let b = stretch_range_u16(&scene.band(1).unwrap().samples, StretchParams::default());
        for (i, px) in rgb.chunks(3).enumerate() {
            assert_eq!(px[0], r.apply(scene.band(6).unwrap().samples[i] as f64));
            assert_eq!(px[2], b.apply(scene.band(1).unwrap().samples[i] as f64));
        }
        assert_eq!(rgb, compose_rgb(&scene, &[6, 5, 1], StretchParams::default()).unwrap());
    }

    #[test]
    fn unknown_band_lists_valid_range() {
        let err = compose_rgb(&tiny_scene(), &[9, 5, 1], StretchParams::default()).unwrap_err();
        assert!(err.to_string().contains("1..=7"), "{err}");
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.png");
        compose_png(&tiny_scene(), &[3, 3, 3], StretchParams::default(), &path).unwrap();
        let (w, h, c, data) = read_png(&path).unwrap();
        assert_eq!((w, h, c, data.len()), (4, 3, 3, 36));
    }

    #[test]
    fn u16_and_f64_ranges_agree() {
        let samples: Vec<u16> = (0..1000u32).map(|i| ((i * 7919) % 1013) as u16).collect();
        let as_f: Vec<f64> = samples.iter().map(|&v| v as f64).collect();
        let p = StretchParams::default();
        assert_eq!(stretch_range_u16(&samples, p), stretch_range_f64(&as_f, p));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn quantize_in_range_and_monotone(
                samples in proptest::collection::vec(any::<u16>(), 1..200),
                levels in 2usize..=64,
            ) {
                let q = quantize_samples(&samples, levels).unwrap();
                for (i, &a) in q.iter().enumerate() {
                    prop_assert!((a as usize) < levels);
                    for (j, &b) in q.iter().enumerate() {
                        if samples[i] <= samples[j] {
                            prop_assert!(a <= b);
                        }
                    }
                }
            }
        }
    }
}
