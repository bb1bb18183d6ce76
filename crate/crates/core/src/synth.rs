//! Seeded synthetic multiband scenes with forest / non-forest ground truth.
//!
//! Non-forest appears as elliptical clearings. Every band is a smooth
//! background field plus Gaussian pixel noise; inside clearings each band adds
//! its own class shift (redrawn per clearing with some jitter) and scales its
//! noise by a texture ratio. Bands whose shift and ratio are neutral carry no
//! class signal.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{ClassMask, Scene, FOREST, NODATA, NON_FOREST};

/// Width × height of the ten reference regions, in region order.
pub const REGION_DIMS: [(usize, usize); 10] = [
    (1230, 843),
    (1343, 933),
    (977, 998),
    (768, 879),
    (790, 1384),
    (928, 833),
    (1788, 950),
    (853, 1017),
    (971, 1064),
    (1047, 1115),
];

/// Scene id used for reference region `n` (1-based).
pub fn region_id(n: usize) -> String {
    format!("region_{n:02}")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandSignal {
    /// Mean offset of clearing pixels, in digital numbers.
    pub shift: f64,
    /// Standard deviation of the per-clearing shift.
    pub jitter: f64,
    /// Noise standard deviation inside clearings relative to forest.
    pub texture_ratio: f64,
}

impl BandSignal {
    pub const NONE: BandSignal = BandSignal {
        shift: 0.0,
        jitter: 0.0,
        texture_ratio: 1.0,
    };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub width: usize,
    pub height: usize,
    /// Forest mean of each band; its length sets the band count.
    pub base: Vec<f64>,
    pub signal: Vec<BandSignal>,
    pub noise_sd: f64,
    /// Amplitude (standard deviation) of the smooth background field.
    pub field_sd: f64,
    /// Spacing of the background field's control grid, in pixels.
    pub field_cell: usize,
    /// Approximate fraction of the scene covered by clearings.
    pub clearing_fraction: f64,
    pub clearing_radius: (f64, f64),
    /// Width of a nodata frame around the scene.
    pub nodata_border: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self::landsat_like(256, 256, 0)
    }
}

const LANDSAT_BASE: [f64; 7] = [9000.0, 8200.0, 7600.0, 6900.0, 15000.0, 9800.0, 7300.0];

impl SynthConfig {
    /// Seven bands with uneven class signal: 5 and 6 strong, 1 moderate,
    /// 3, 4 and 7 weak, 2 almost none.
    pub fn landsat_like(width: usize, height: usize, seed: u64) -> Self {
        let s = |shift, jitter, texture_ratio| BandSignal {
            shift,
            jitter,
            texture_ratio,
        };
        SynthConfig {
            width,
            height,
            base: LANDSAT_BASE.to_vec(),
            signal: vec![
                s(220.0, 260.0, 1.15),
                s(40.0, 260.0, 1.0),
                s(120.0, 260.0, 1.05),
                s(-120.0, 260.0, 1.05),
                s(-420.0, 300.0, 1.3),
                s(380.0, 300.0, 1.3),
                s(120.0, 260.0, 1.05),
            ],
            noise_sd: 220.0,
            field_sd: 260.0,
            field_cell: 96,
            clearing_fraction: 0.22,
            clearing_radius: (30.0, 70.0),
            nodata_border: 0,
            seed,
        }
    }

    /// Seven bands where only `bands` (1-based) differ between classes.
    pub fn planted(width: usize, height: usize, seed: u64, bands: &[usize]) -> Self {
        let mut cfg = Self::landsat_like(width, height, seed);
        for (i, sig) in cfg.signal.iter_mut().enumerate() {
            *sig = if bands.contains(&(i + 1)) {
                BandSignal {
                    shift: 350.0,
                    jitter: 260.0,
                    texture_ratio: 1.4,
                }
            } else {
                BandSignal::NONE
            };
        }
        cfg
    }

    pub fn bands(&self) -> usize {
        self.base.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Parameter("synthetic scene needs positive dimensions".into()));
        }
        if self.base.is_empty() || self.base.len() != self.signal.len() {
            return Err(Error::Parameter(format!(
                "{} band means but {} band signals",
                self.base.len(),
                self.signal.len()
            )));
        }
        if !(0.0..1.0).contains(&self.clearing_fraction) {
            return Err(Error::Parameter("clearing_fraction must be in [0, 1)".into()));
        }
        let (r0, r1) = self.clearing_radius;
        if !(r0 > 0.0 && r0 <= r1) || self.field_cell == 0 || self.noise_sd < 0.0 || self.field_sd < 0.0 {
            return Err(Error::Parameter("invalid clearing radius, field cell or noise level".into()));
        }
        if self.signal.iter().any(|s| s.jitter < 0.0 || s.texture_ratio < 0.0) {
            return Err(Error::Parameter("signal jitter and texture ratio must be non-negative".into()));
        }
        Ok(())
    }
}

struct Clearing {
    cx: f64,
    cy: f64,
    a: f64,
    b: f64,
    cos: f64,
    sin: f64,
}

impl Clearing {
    fn contains(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.cx, y - self.cy);
        let u = dx * self.cos + dy * self.sin;
        let v = -dx * self.sin + dy * self.cos;
        (u / self.a).powi(2) + (v / self.b).powi(2) <= 1.0
    }
}

fn smooth_field<R: Rng>(w: usize, h: usize, cell: usize, sd: f64, rng: &mut R) -> Vec<f64> {
    let gx = w / cell + 2;
    let gy = h / cell + 2;
    let normal = Normal::new(0.0, sd.max(f64::MIN_POSITIVE)).expect("finite sd");
    let grid: Vec<f64> = (0..gx * gy).map(|_| normal.sample(rng)).collect();
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        let fy = y as f64 / cell as f64;
        let (j, ty) = (fy as usize, fy.fract());
        for x in 0..w {
            let fx = x as f64 / cell as f64;
            let (i, tx) = (fx as usize, fx.fract());
            let g = |a: usize, b: usize| grid[b * gx + a];
            let top = g(i, j) * (1.0 - tx) + g(i + 1, j) * tx;
            let bottom = g(i, j + 1) * (1.0 - tx) + g(i + 1, j + 1) * tx;
            out.push(top * (1.0 - ty) + bottom * ty);
        }
    }
    out
}

/// Generates one scene; identical `(config, id)` give identical scenes.
pub fn generate(config: &SynthConfig, id: &str) -> Result<Scene> {
    config.validate()?;
    let (w, h) = (config.width, config.height);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let (r0, r1) = config.clearing_radius;
    let mean_area = std::f64::consts::PI * ((r0 + r1) / 2.0).powi(2) * 0.75;
    let count = ((config.clearing_fraction * (w * h) as f64) / mean_area).round() as usize;
    let clearings: Vec<Clearing> = (0..count)
        .map(|_| {
            let a = rng.random_range(r0..=r1);
            let theta: f64 = rng.random_range(0.0..std::f64::consts::PI);
            Clearing {
                cx: rng.random_range(0.0..w as f64),
                cy: rng.random_range(0.0..h as f64),
                a,
                b: a * rng.random_range(0.5..=1.0),
                cos: theta.cos(),
                sin: theta.sin(),
            }
        })
        .collect();

    // Index of the first clearing covering each pixel; u32::MAX for forest.
    let mut owner = vec![u32::MAX; w * h];
    for (k, c) in clearings.iter().enumerate() {
        let reach = c.a.ceil() as isize + 1;
        let (cx, cy) = (c.cx as isize, c.cy as isize);
        for y in (cy - reach).max(0)..(cy + reach + 1).min(h as isize) {
            for x in (cx - reach).max(0)..(cx + reach + 1).min(w as isize) {
                let idx = y as usize * w + x as usize;
                if owner[idx] == u32::MAX && c.contains(x as f64, y as f64) {
                    owner[idx] = k as u32;
                }
            }
        }
    }

    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let mut planes = Vec::with_capacity(config.bands());
    for (base, sig) in config.base.iter().zip(&config.signal) {
        let field = smooth_field(w, h, config.field_cell, config.field_sd, &mut rng);
        let shifts: Vec<f64> = clearings
            .iter()
            .map(|_| sig.shift + sig.jitter * noise.sample(&mut rng))
            .collect();
        let plane: Vec<u16> = (0..w * h)
            .map(|i| {
                let z: f64 = noise.sample(&mut rng);
                let v = match owner[i] {
                    u32::MAX => base + field[i] + config.noise_sd * z,
                    k => base + field[i] + shifts[k as usize] + config.noise_sd * sig.texture_ratio * z,
                };
                v.round().clamp(1.0, u16::MAX as f64) as u16
            })
            .collect();
        planes.push(plane);
    }

    let border = config.nodata_border;
    let mask: Vec<u8> = (0..w * h)
        .map(|i| {
            let (x, y) = (i % w, i / w);
            if x < border || y < border || x + border >= w || y + border >= h {
                NODATA
            } else if owner[i] == u32::MAX {
                FOREST
            } else {
                NON_FOREST
            }
        })
        .collect();
    if border > 0 {
        for plane in &mut planes {
            for (v, &m) in plane.iter_mut().zip(&mask) {
                if m == NODATA {
                    *v = 0;
                }
            }
        }
    }
    Scene::new(id, w, h, planes, ClassMask::new(mask)?)
}

/// Ten scenes with the reference region dimensions.
pub fn region_scenes(template: &SynthConfig) -> Result<Vec<Scene>> {
    REGION_DIMS
        .iter()
        .enumerate()
        .map(|(i, &(w, h))| {
            let cfg = SynthConfig {
                width: w,
                height: h,
                seed: template.seed.wrapping_add(i as u64),
                ..template.clone()
            };
            generate(&cfg, &region_id(i + 1))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_sized() {
        let cfg = SynthConfig::landsat_like(120, 90, 3);
        let a = generate(&cfg, "s").unwrap();
        let b = generate(&cfg, "s").unwrap();
        assert_eq!(a, b);
        assert_eq!((a.width(), a.height(), a.band_count()), (120, 90, 7));
        let other = generate(&SynthConfig { seed: 4, ..cfg }, "s").unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn clearing_fraction_is_roughly_respected() {
        let s = generate(&SynthConfig::landsat_like(400, 400, 1), "s").unwrap();
        let nf = s.mask().labels.iter().filter(|&&v| v == NON_FOREST).count() as f64 / 160_000.0;
        assert!((0.08..0.35).contains(&nf), "{nf}");
    }

    fn class_means(s: &Scene, band: usize) -> (f64, f64) {
        let p = &s.band(band).unwrap().samples;
        let (mut f, mut nf, mut cf, mut cn) = (0.0, 0.0, 0.0, 0.0);
        for (v, &m) in p.iter().zip(&s.mask().labels) {
            match m {
                FOREST => {
                    f += *v as f64;
                    cf += 1.0
                }
                NON_FOREST => {
                    nf += *v as f64;
                    cn += 1.0
                }
                _ => {}
            }
        }
        (f / cf, nf / cn)
    }

    #[test]
    fn planted_bands_carry_the_only_shift() {
        let scenes: Vec<Scene> = (0..6)
            .map(|seed| generate(&SynthConfig::planted(300, 300, seed, &[5, 6]), "s").unwrap())
            .collect();
        for band in 1..=7 {
            let gap = scenes
                .iter()
                .map(|s| {
                    let (f, nf) = class_means(s, band);
                    nf - f
                })
                .sum::<f64>()
                / scenes.len() as f64;
            if band == 5 || band == 6 {
                assert!(gap > 150.0, "band {band}: mean gap {gap}");
            } else {
                assert!(gap.abs() < 120.0, "band {band}: mean gap {gap}");
            }
        }
    }

    #[test]
    fn nodata_border() {
        let cfg = SynthConfig {
            nodata_border: 3,
            ..SynthConfig::landsat_like(40, 30, 0)
        };
        let s = generate(&cfg, "s").unwrap();
        assert_eq!(s.mask().labels[0], NODATA);
        assert_ne!(s.mask().labels[3 * 40 + 3], NODATA);
        assert_eq!(s.band(1).unwrap().samples[0], 0);
    }

    #[test]
    fn rejects_bad_configs() {
        let cfg = SynthConfig {
            signal: vec![],
            ..SynthConfig::default()
        };
        assert!(generate(&cfg, "x").is_err());
    }
}
