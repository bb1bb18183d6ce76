use std::cell::OnceCell;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context};
use bandsel::classifier::GenomeEvaluator;
use bandsel::preprocess::{pca_fit, pca_fit_scenes, pca_project, PcaModel};
use bandsel::raster::{load_scene, write_png, PngColor, Scene, StretchParams, FOREST, NODATA, NON_FOREST};
use bandsel::report::{build_report, load_runs, run_file_name, Report};
use bandsel::segments::{
    build_segment_table, filter_segments, read_segment_csv, split_counts, split_segments, write_segment_csv,
    ClassLabel, SegmentRecord, Split,
};
use bandsel::superpixel::{read_label_map, slic, write_label_map, LabelMap, SlicParams};
use bandsel::texture::{read_feature_csv, segment_features, write_feature_csv};
use bandsel::tiler::{build_dataset, SplitPlan, TileSplit};
use bandsel::umda::{evolve, write_jsonl, Fitness};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

const DONE_MARKER: &str = ".done";
const INCOMPLETE_MARKER: &str = ".incomplete";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Ingest,
    Pca,
    Slic,
    Segments,
    Features,
    Evolve,
    Report,
    Tile,
}

impl Stage {
    pub const PIPELINE: [Stage; 8] = [
        Stage::Ingest,
        Stage::Pca,
        Stage::Slic,
        Stage::Segments,
        Stage::Features,
        Stage::Evolve,
        Stage::Report,
        Stage::Tile,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Pca => "pca",
            Stage::Slic => "slic",
            Stage::Segments => "segments",
            Stage::Features => "features",
            Stage::Evolve => "evolve",
            Stage::Report => "report",
            Stage::Tile => "tile",
        }
    }

    /// Output directory under the run root.
    pub fn dir_name(self) -> &'static str {
        match self {
            Stage::Tile => "tiles",
            other => other.name(),
        }
    }

    fn upstream(self) -> Option<Stage> {
        let i = Stage::PIPELINE.iter().position(|&s| s == self).expect("stage listed");
        i.checked_sub(1).map(|j| Stage::PIPELINE[j])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ran,
    Cached,
}

pub fn progress(stage: &str, status: &str, extra: &str) {
    if extra.is_empty() {
        eprintln!("stage={stage} status={status}");
    } else {
        eprintln!("stage={stage} status={status} {extra}");
    }
}

pub struct Runner {
    cfg: RunConfig,
    root: PathBuf,
    force: bool,
    scenes: OnceCell<Vec<Scene>>,
}

fn sha256_hex(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex::encode(h.finalize())
}

fn json<T: Serialize>(v: &T) -> Vec<u8> {
    serde_json::to_vec(v).expect("config types serialize")
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> anyhow::Result<()> {
    fs::write(path, serde_json::to_vec_pretty(v)?).with_context(|| format!("writing {}", path.display()))
}

impl Runner {
    pub fn new(cfg: RunConfig, root: PathBuf, force: bool) -> Self {
        Runner {
            cfg,
            root,
            force,
            scenes: OnceCell::new(),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn stage_dir(&self, stage: Stage) -> PathBuf {
        self.root.join(stage.dir_name())
    }

    fn scenes(&self) -> anyhow::Result<&[Scene]> {
        if let Some(s) = self.scenes.get() {
            return Ok(s);
        }
        self.cfg.require_scenes()?;
        let scenes = self
            .cfg
            .scenes
            .iter()
            .map(|dir| load_scene(dir).with_context(|| format!("loading scene {}", dir.display())))
            .collect::<anyhow::Result<Vec<_>>>()?;
        let mut seen = HashSet::new();
        if let Some(dup) = scenes.iter().find(|s| !seen.insert(s.id().to_string())) {
            bail!(bandsel::Error::Validation(format!("scene id {} appears twice", dup.id())));
        }
        Ok(self.scenes.get_or_init(|| scenes))
    }

    fn scene_refs(&self) -> anyhow::Result<Vec<&Scene>> {
        Ok(self.scenes()?.iter().collect())
    }

    /// Hash of the raw scene files, in configuration order.
    fn input_key(&self) -> anyhow::Result<String> {
        self.cfg.require_scenes()?;
        let mut h = Sha256::new();
        for dir in &self.cfg.scenes {
            let mut names: Vec<PathBuf> = fs::read_dir(dir)
                .with_context(|| format!("listing {}", dir.display()))?
                .map(|e| e.map(|e| e.path()))
                .collect::<Result<_, _>>()?;
            names.sort();
            for path in names.iter().filter(|p| p.is_file()) {
                let name = path.file_name().unwrap_or_default().to_string_lossy();
                h.update(name.as_bytes());
                h.update(fs::read(path).with_context(|| format!("reading {}", path.display()))?);
            }
        }
        Ok(hex::encode(h.finalize()))
    }

    fn stage_params(&self, stage: Stage) -> Vec<u8> {
        let c = &self.cfg;
        match stage {
            Stage::Ingest => json(&c.scenes),
            Stage::Pca => json(&c.pca),
            Stage::Slic => json(&c.slic),
            Stage::Segments => json(&(&c.filter, &c.split)),
            Stage::Features => json(&c.texture_levels),
            Stage::Evolve => json(&(&c.evolve, &c.svm)),
            Stage::Report => json(&c.report),
            Stage::Tile => json(&(&c.composition, &c.tiles)),
        }
    }

    fn done_key(&self, stage: Stage) -> Option<String> {
        fs::read_to_string(self.stage_dir(stage).join(DONE_MARKER)).ok()
    }

    /// Content key of a stage: its parameters chained onto the key of the
    /// stage before it (or the scene bytes for the first stage).
    fn stage_key(&self, stage: Stage) -> anyhow::Result<String> {
        let upstream = match stage.upstream() {
            None => self.input_key()?,
            Some(up) => self.done_key(up).ok_or_else(|| {
                anyhow!(
                    "stage {} needs completed stage {} under {} (run `bandsel {}` first)",
                    stage.name(),
                    up.name(),
                    self.root.display(),
                    up.name()
                )
            })?,
        };
        Ok(sha256_hex(&[stage.name().as_bytes(), upstream.as_bytes(), &self.stage_params(stage)]))
    }

    pub fn run(&self, stage: Stage) -> anyhow::Result<Outcome> {
        let key = self.stage_key(stage)?;
        let dir = self.stage_dir(stage);
        if !self.force && self.done_key(stage).as_deref() == Some(key.as_str()) {
            progress(stage.name(), "cached", "");
            return Ok(Outcome::Cached);
        }
        progress(stage.name(), "start", "");
        let start = Instant::now();
        if dir.exists() {
            fs::remove_dir_all(&dir).with_context(|| format!("clearing {}", dir.display()))?;
        }
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        fs::write(dir.join(INCOMPLETE_MARKER), &key)?;
        let result = match stage {
            Stage::Ingest => self.ingest(&dir),
            Stage::Pca => self.pca(&dir),
            Stage::Slic => self.slic(&dir),
            Stage::Segments => self.segments(&dir),
            Stage::Features => self.features(&dir),
            Stage::Evolve => self.evolve(&dir),
            Stage::Report => self.report(&dir),
            Stage::Tile => self.tile(&dir),
        };
        if let Err(e) = result {
            progress(stage.name(), "failed", &format!("error={:?}", format!("{e:#}")));
            return Err(e.context(format!("stage {} failed", stage.name())));
        }
        fs::remove_file(dir.join(INCOMPLETE_MARKER))?;
        fs::write(dir.join(DONE_MARKER), &key)?;
        progress(stage.name(), "done", &format!("elapsed_ms={}", start.elapsed().as_millis()));
        Ok(Outcome::Ran)
    }

    pub fn pipeline(&self) -> anyhow::Result<()> {
        let mut ran = 0;
        for stage in Stage::PIPELINE {
            if self.run(stage)? == Outcome::Ran {
                ran += 1;
            }
        }
        if ran == 0 {
            eprintln!("all stages cached");
            progress("pipeline", "cached", "");
        } else {
            progress("pipeline", "done", &format!("stages_run={ran}"));
        }
        Ok(())
    }

    fn ingest(&self, dir: &Path) -> anyhow::Result<()> {
        #[derive(Serialize)]
        struct SceneSummary<'a> {
            id: &'a str,
            path: String,
            width: usize,
            height: usize,
            bands: usize,
            forest_pixels: usize,
            non_forest_pixels: usize,
            nodata_pixels: usize,
            pixel_area_km2: Option<f64>,
        }
        let scenes = self.scenes()?;
        let summary: Vec<SceneSummary> = scenes
            .iter()
            .zip(&self.cfg.scenes)
            .map(|(s, path)| {
                let count = |v: u8| s.mask().labels.iter().filter(|&&m| m == v).count();
                SceneSummary {
                    id: s.id(),
                    path: path.display().to_string(),
                    width: s.width(),
                    height: s.height(),
                    bands: s.band_count(),
                    forest_pixels: count(FOREST),
                    non_forest_pixels: count(NON_FOREST),
                    nodata_pixels: count(NODATA),
                    pixel_area_km2: s.pixel_area_km2(),
                }
            })
            .collect();
        if let Some(s) = scenes.iter().find(|s| s.band_count() != self.cfg.evolve.genes) {
            bail!(bandsel::Error::Validation(format!(
                "scene {} has {} bands but genomes have {} genes",
                s.id(),
                s.band_count(),
                self.cfg.evolve.genes
            )));
        }
        write_json(&dir.join("summary.json"), &summary)
    }

    fn pca_model_path(&self, id: &str) -> PathBuf {
        self.stage_dir(Stage::Pca).join(format!("{id}.json"))
    }

    fn pca(&self, dir: &Path) -> anyhow::Result<()> {
        let scenes = self.scene_refs()?;
        let stride = self.cfg.pca.sample_stride;
        let global = if self.cfg.pca.global {
            Some(pca_fit_scenes(&scenes, stride)?)
        } else {
            None
        };
        for scene in scenes {
            let model = match &global {
                Some(m) => m.clone(),
                None => pca_fit(scene, stride).with_context(|| format!("PCA of scene {}", scene.id()))?,
            };
            write_json(&self.pca_model_path(scene.id()), &model)?;
            let planes = pca_project(scene, &model)?;
            let rgb = planes.to_rgb(StretchParams::default());
            write_png(
                &dir.join(format!("{}.png", scene.id())),
                scene.width(),
                scene.height(),
                PngColor::Rgb,
                &rgb,
                png_fast(),
            )?;
        }
        Ok(())
    }

    fn slic(&self, dir: &Path) -> anyhow::Result<()> {
        let s = &self.cfg.slic;
        for scene in self.scenes()? {
            let path = self.pca_model_path(scene.id());
            let model: PcaModel = serde_json::from_slice(&fs::read(&path).with_context(|| format!("reading {}", path.display()))?)?;
            let planes = pca_project(scene, &model)?;
            let target = s
                .target_segments
                .unwrap_or_else(|| SlicParams::for_image(scene.width(), scene.height(), s.pixels_per_segment).target_segments);
            let params = SlicParams {
                target_segments: target,
                compactness: s.compactness,
                iterations: s.iterations,
            };
            let labels = slic(&planes, &params).with_context(|| format!("SLIC of scene {}", scene.id()))?;
            progress("slic", "progress", &format!("scene={} segments={}", scene.id(), labels.segment_count));
            write_label_map(&labels, Some(&params), &dir.join(scene.id()))?;
        }
        Ok(())
    }

    fn label_maps(&self) -> anyhow::Result<HashMap<String, LabelMap>> {
        self.scenes()?
            .iter()
            .map(|s| {
                let dir = self.stage_dir(Stage::Slic).join(s.id());
                Ok((s.id().to_string(), read_label_map(&dir)?))
            })
            .collect()
    }

    fn segments(&self, dir: &Path) -> anyhow::Result<()> {
        let maps = self.label_maps()?;
        let mut records = Vec::new();
        for scene in self.scenes()? {
            records.extend(build_segment_table(scene, &maps[scene.id()])?);
        }
        let records = filter_segments(records, self.cfg.filter);
        let records = split_segments(records, self.cfg.split.fractions, self.cfg.split.seed)?;
        write_segment_csv(&records, &dir.join("segments.csv"))?;

        let counts = split_counts(&records);
        let mut table: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
        for split in [Split::Train, Split::Val, Split::Test] {
            for label in [ClassLabel::Forest, ClassLabel::NonForest] {
                let name = match label {
                    ClassLabel::Forest => "forest",
                    ClassLabel::NonForest => "non-forest",
                };
                table
                    .entry(split.to_string())
                    .or_default()
                    .insert(name.into(), counts.get(&(split, label)).copied().unwrap_or(0));
            }
        }
        let kept = records.iter().filter(|r| r.is_kept()).count();
        progress("segments", "progress", &format!("total={} kept={kept}", records.len()));
        write_json(
            &dir.join("summary.json"),
            &serde_json::json!({ "total": records.len(), "kept": kept, "splits": table }),
        )
    }

    fn kept_records(&self) -> anyhow::Result<Vec<SegmentRecord>> {
        let maps = self.label_maps()?;
        let path = self.stage_dir(Stage::Segments).join("segments.csv");
        Ok(read_segment_csv(&path, &maps)?.into_iter().filter(|r| r.is_kept()).collect())
    }

    fn features(&self, dir: &Path) -> anyhow::Result<()> {
        let records = self.kept_records()?;
        let features = segment_features(&self.scene_refs()?, &records, self.cfg.texture_levels)?;
        progress("features", "progress", &format!("rows={} columns={}", features.rows(), features.columns()));
        write_feature_csv(&features, &dir.join("features.csv"))?;
        Ok(())
    }

    fn evolve(&self, dir: &Path) -> anyhow::Result<()> {
        let records = self.kept_records()?;
        let features = read_feature_csv(&self.stage_dir(Stage::Features).join("features.csv"))?;
        let evaluator = GenomeEvaluator::from_records(features, &records, self.cfg.svm)?;
        let fitness = |g: &bandsel::Genome| {
            evaluator.evaluate(g).map(|e| Fitness {
                val: e.val,
                test: Some(e.test),
            })
        };
        for &seed in &self.cfg.evolve.seeds {
            let result = evolve(&self.cfg.evolve.umda(seed), fitness).with_context(|| format!("evolution with seed {seed}"))?;
            write_jsonl(&result.logs, &dir.join(run_file_name(seed)))?;
            let best = result.best.fitness().expect("evaluated");
            progress(
                "evolve",
                "progress",
                &format!("seed={seed} best={} val={:.4} test={:.4}", result.best.genome(), best.val, best.test.unwrap_or(f64::NAN)),
            );
        }
        progress("evolve", "progress", &format!("svm_trainings={}", evaluator.trainings()));
        Ok(())
    }

    fn report(&self, dir: &Path) -> anyhow::Result<()> {
        let runs = load_runs(&self.stage_dir(Stage::Evolve))?;
        let report = build_report(&runs, &self.cfg.report)?;
        let text = report.to_text();
        fs::write(dir.join("report.txt"), &text)?;
        write_json(&dir.join("report.json"), &report)?;
        print!("{text}");
        Ok(())
    }

    pub fn composition(&self) -> anyhow::Result<Vec<usize>> {
        if let Some(c) = &self.cfg.composition {
            return Ok(c.clone());
        }
        let path = self.stage_dir(Stage::Report).join("report.json");
        let report: Report = serde_json::from_slice(
            &fs::read(&path).with_context(|| format!("no composition configured and no report at {}", path.display()))?,
        )?;
        Ok(report.composition)
    }

    fn tile(&self, dir: &Path) -> anyhow::Result<()> {
        let composition = self.composition()?;
        let scenes = self.scene_refs()?;
        let mut plan = self.cfg.tiles.plan();
        if plan.train.is_empty() && plan.test.is_empty() {
            plan = SplitPlan {
                train: scenes.iter().map(|s| s.id().to_string()).collect(),
                test: Vec::new(),
            };
        }
        let set = build_dataset(&scenes, &composition, &plan, &self.cfg.tiles.spec, dir)?;
        progress(
            "tile",
            "progress",
            &format!(
                "composition={} train={} test={}",
                composition.iter().map(|b| b.to_string()).collect::<Vec<_>>().join(","),
                set.count(TileSplit::Train),
                set.count(TileSplit::Test)
            ),
        );
        Ok(())
    }

    /// Writes one RGB composition PNG per scene under `<root>/compose`.
    pub fn compose(&self, bands: &[usize]) -> anyhow::Result<Vec<PathBuf>> {
        if bands.len() != 3 {
            bail!(crate::config::ConfigError(format!("compose needs exactly 3 bands, got {bands:?}")));
        }
        let dir = self.root.join("compose");
        fs::create_dir_all(&dir)?;
        let tag = bands.iter().map(|b| b.to_string()).collect::<Vec<_>>().join("-");
        self.scenes()?
            .iter()
            .map(|s| {
                let out = dir.join(format!("{}_{tag}.png", s.id()));
                bandsel::raster::compose_png(s, bands, self.cfg.tiles.spec.stretch, &out)?;
                Ok(out)
            })
            .collect()
    }
}

fn png_fast() -> bandsel::raster::PngCompression {
    bandsel::raster::PngCompression::Fast
}
