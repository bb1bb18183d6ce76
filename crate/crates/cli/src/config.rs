use std::fmt;
use std::path::{Path, PathBuf};

use bandsel::classifier::SvmConfig;
use bandsel::report::ReportOptions;
use bandsel::segments::{FilterThresholds, SplitFractions};
use bandsel::tiler::{SplitPlan, TileSpec};
use bandsel::umda::{UmdaConfig, DEFAULT_SEEDS};
use serde::{Deserialize, Serialize};

pub const OUTPUT_ROOT_ENV: &str = "BANDSEL_OUTPUT_ROOT";

/// Bad configuration or arguments; maps to exit status 1.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid configuration: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PcaSettings {
    /// Every n-th pixel enters the covariance estimate.
    pub sample_stride: usize,
    /// Fit one model over all scenes instead of one per scene.
    pub global: bool,
}

impl Default for PcaSettings {
    fn default() -> Self {
        PcaSettings {
            sample_stride: 4,
            global: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SlicSettings {
    pub pixels_per_segment: usize,
    /// Fixed segment count per scene; overrides `pixels_per_segment`.
    pub target_segments: Option<usize>,
    pub compactness: f64,
    pub iterations: usize,
}

impl Default for SlicSettings {
    fn default() -> Self {
        SlicSettings {
            pixels_per_segment: bandsel::superpixel::DEFAULT_PIXELS_PER_SEGMENT,
            target_segments: None,
            compactness: 10.0,
            iterations: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSettings {
    pub fractions: SplitFractions,
    pub seed: u64,
}

impl Default for SplitSettings {
    fn default() -> Self {
        SplitSettings {
            fractions: SplitFractions::default(),
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolveSettings {
    pub seeds: Vec<u64>,
    pub genes: usize,
    pub population_size: usize,
    pub generations: usize,
    pub parents: usize,
    pub offspring: usize,
    pub clamp: (f64, f64),
}

impl Default for EvolveSettings {
    fn default() -> Self {
        let u = UmdaConfig::default();
        EvolveSettings {
            seeds: DEFAULT_SEEDS.to_vec(),
            genes: u.genes,
            population_size: u.population_size,
            generations: u.generations,
            parents: u.parents,
            offspring: u.offspring,
            clamp: u.clamp,
        }
    }
}

impl EvolveSettings {
    pub fn umda(&self, seed: u64) -> UmdaConfig {
        UmdaConfig {
            genes: self.genes,
            population_size: self.population_size,
            generations: self.generations,
            parents: self.parents,
            offspring: self.offspring,
            seed,
            clamp: self.clamp,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TileSettings {
    #[serde(flatten)]
    pub spec: TileSpec,
    /// Scene ids tiled (and augmented) for training.
    pub train: Vec<String>,
    pub test: Vec<String>,
}

impl TileSettings {
    pub fn plan(&self) -> SplitPlan {
        SplitPlan {
            train: self.train.clone(),
            test: self.test.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Scene directories; relative paths resolve against the config file.
    pub scenes: Vec<PathBuf>,
    pub output_root: PathBuf,
    pub pca: PcaSettings,
    pub slic: SlicSettings,
    pub filter: FilterThresholds,
    pub split: SplitSettings,
    pub texture_levels: usize,
    pub evolve: EvolveSettings,
    pub svm: SvmConfig,
    pub report: ReportOptions,
    /// Bands to tile; defaults to the report's top-k composition.
    pub composition: Option<Vec<usize>>,
    pub tiles: TileSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scenes: Vec::new(),
            output_root: PathBuf::from("bandsel-run"),
            pca: PcaSettings::default(),
            slic: SlicSettings::default(),
            filter: FilterThresholds::default(),
            split: SplitSettings::default(),
            texture_levels: bandsel::texture::DEFAULT_LEVELS,
            evolve: EvolveSettings::default(),
            svm: SvmConfig::default(),
            report: ReportOptions::default(),
            composition: None,
            tiles: TileSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for scene in &mut cfg.scenes {
            if scene.is_relative() {
                *scene = base.join(&*scene);
            }
        }
        if cfg.output_root.is_relative() {
            cfg.output_root = base.join(&cfg.output_root);
        }
        Ok(cfg)
    }

    /// Checks everything that can be checked without reading scene data.
    pub fn validate(&self) -> anyhow::Result<()> {
        for scene in &self.scenes {
            if !scene.is_dir() {
                return Err(invalid(format!("scene directory {} does not exist", scene.display())));
            }
        }
        let f = &self.filter;
        if !(0.0..=1.0).contains(&f.min_homogeneity) {
            return Err(invalid(format!("filter.min_homogeneity {} outside [0, 1]", f.min_homogeneity)));
        }
        self.split.fractions.validate().map_err(|e| invalid(e.to_string()))?;
        if self.slic.pixels_per_segment == 0 || self.slic.target_segments == Some(0) {
            return Err(invalid("slic segment size and count must be positive"));
        }
        if !(self.slic.compactness > 0.0) || self.slic.iterations == 0 {
            return Err(invalid("slic.compactness must be > 0 and slic.iterations >= 1"));
        }
        if self.pca.sample_stride == 0 {
            return Err(invalid("pca.sample_stride must be >= 1"));
        }
        if !(2..=256).contains(&self.texture_levels) {
            return Err(invalid(format!("texture_levels {} outside 2..=256", self.texture_levels)));
        }
        if self.evolve.seeds.is_empty() {
            return Err(invalid("evolve.seeds is empty"));
        }
        self.evolve.umda(0).validate().map_err(|e| invalid(e.to_string()))?;
        let s = &self.svm;
        if !(s.c > 0.0) || !(s.tolerance > 0.0) || s.max_epochs == 0 || s.gamma.is_some_and(|g| !(g > 0.0)) {
            return Err(invalid("svm needs c > 0, tolerance > 0, max_epochs >= 1 and gamma > 0"));
        }
        if self.report.top_k == 0 || self.report.top_k > self.evolve.genes {
            return Err(invalid(format!("report.top_k must be in 1..={}", self.evolve.genes)));
        }
        if let Some(c) = &self.composition {
            if c.is_empty() || c.iter().any(|&b| b == 0 || b > self.evolve.genes) {
                return Err(invalid(format!("composition {c:?} must list bands in 1..={}", self.evolve.genes)));
            }
        }
        self.tiles.spec.validate().map_err(|e| invalid(e.to_string()))?;
        let p = self.tiles.spec.stretch;
        if !(0.0..=100.0).contains(&p.low_percentile) || !(p.low_percentile..=100.0).contains(&p.high_percentile) {
            return Err(invalid("stretch percentiles must satisfy 0 <= low <= high <= 100"));
        }
        if let Some(id) = self.tiles.train.iter().find(|id| self.tiles.test.contains(id)) {
            return Err(invalid(format!("scene {id} is listed in both tiles.train and tiles.test")));
        }
        Ok(())
    }

    pub fn require_scenes(&self) -> anyhow::Result<()> {
        if self.scenes.is_empty() {
            return Err(invalid("no scenes configured (set \"scenes\" in the config file)"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn out_of_range_homogeneity_is_rejected() {
        let cfg: RunConfig = serde_json::from_str(r#"{"filter": {"min_homogeneity": 1.5}}"#).unwrap();
        assert_eq!(cfg.filter.min_area, 70);
        let err = cfg.validate().unwrap_err();
        assert!(err.downcast_ref::<ConfigError>().is_some(), "{err}");
    }

    #[test]
    fn example_config_parses() {
        let cfg: RunConfig = serde_json::from_str(include_str!("../../../bandsel.example.json")).unwrap();
        assert_eq!(cfg.evolve.seeds, DEFAULT_SEEDS.to_vec());
        assert_eq!(cfg.tiles.test, vec!["scene_3".to_string()]);
        RunConfig { scenes: Vec::new(), ..cfg }.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"scene": []}"#).is_err());
    }

    #[test]
    fn tile_spec_is_flattened() {
        let cfg: RunConfig =
            serde_json::from_str(r#"{"tiles": {"tile_size": 128, "stride": 32, "augment": "rot4", "train": ["a"]}}"#).unwrap();
        assert_eq!(cfg.tiles.spec.tile_size, 128);
        assert_eq!(cfg.tiles.train, vec!["a".to_string()]);
    }
}
