//! `bandsel`: band selection pipeline from multiband scenes to tiled datasets.

mod config;
mod stages;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use bandsel::raster::write_scene;
use bandsel::report::{build_report, load_runs, FrequencyPool, ReportOptions};
use bandsel::synth::{generate, region_id, SynthConfig, REGION_DIMS};
use clap::{Parser, Subcommand, ValueEnum};

use config::{ConfigError, RunConfig, OUTPUT_ROOT_ENV};
use stages::{Runner, Stage};

#[derive(Parser, Debug)]
#[command(name = "bandsel", version, about = "UMDA spectral band selection pipeline")]
struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Replace the configured evolution seeds with this single seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Rerun stages even when their checkpoint is current.
    #[arg(long, global = true)]
    force: bool,
    /// Output root; overrides the configuration.
    #[arg(long, global = true, env = OUTPUT_ROOT_ENV)]
    output_root: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate scenes and summarize their masks.
    Ingest,
    /// Fit PCA per scene and write false-color previews.
    Pca,
    /// Segment the PCA false color into superpixels.
    Slic,
    /// Label, filter and split segments.
    Segments,
    /// Extract Haralick features per segment and band.
    Features,
    /// Run UMDA for every configured seed.
    Evolve,
    /// Summarize evolution logs.
    Report {
        /// Directory of seed_<n>.jsonl logs; bypasses the configured run.
        #[arg(long)]
        run_dir: Option<PathBuf>,
        #[arg(long)]
        top_k: Option<usize>,
        /// Count distinct parents with test score >= this value instead of seed bests.
        #[arg(long)]
        min_test: Option<f64>,
    },
    /// Render a band composition of every scene as PNG.
    Compose {
        /// Comma-separated band indices (R,G,B); defaults to the report composition.
        #[arg(long, value_delimiter = ',')]
        bands: Option<Vec<usize>>,
    },
    /// Cut the tiled train/test dataset.
    Tile,
    /// Run every stage, reusing current checkpoints.
    Pipeline,
    /// Write synthetic scenes.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Preset::Sample)]
        preset: Preset,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        width: Option<usize>,
        #[arg(long)]
        height: Option<usize>,
        /// Base seed; scene k uses seed + k.
        #[arg(long = "synth-seed", default_value_t = 7)]
        synth_seed: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Preset {
    /// Three small landsat-like scenes.
    Sample,
    Landsat,
    /// Signal only in bands 5 and 6.
    Planted,
    /// Ten scenes with the reference region dimensions.
    Regions,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<ConfigError>().is_some() {
        return 1;
    }
    match err.downcast_ref::<bandsel::Error>() {
        Some(e) if e.is_validation() => 1,
        _ => 2,
    }
}

fn load_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.evolve.seeds = vec![seed];
    }
    if let Some(root) = &cli.output_root {
        cfg.output_root = root.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn synth(out: &Path, preset: Preset, count: Option<usize>, width: Option<usize>, height: Option<usize>, seed: u64) -> anyhow::Result<()> {
    let dims: Vec<(String, usize, usize)> = match preset {
        Preset::Regions => REGION_DIMS
            .iter()
            .enumerate()
            .map(|(i, &(w, h))| (region_id(i + 1), w, h))
            .collect(),
        _ => {
            let (default_n, default_side) = if preset == Preset::Sample { (3, 400) } else { (3, 512) };
            (1..=count.unwrap_or(default_n))
                .map(|k| (format!("scene_{k}"), width.unwrap_or(default_side), height.unwrap_or(default_side)))
                .collect()
        }
    };
    for (k, (id, w, h)) in dims.into_iter().enumerate() {
        let s = seed + k as u64;
        let cfg = match preset {
            Preset::Planted => SynthConfig::planted(w, h, s, &[5, 6]),
            _ => SynthConfig::landsat_like(w, h, s),
        };
        let scene = generate(&cfg, &id)?;
        let dir = out.join(&id);
        write_scene(&scene, &dir)?;
        println!("{}", dir.display());
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(ConfigError("--jobs must be >= 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .context("configuring the worker pool")?;
    }
    if let Command::Synth { out, preset, count, width, height, synth_seed } = &cli.command {
        return synth(out, *preset, *count, *width, *height, *synth_seed);
    }
    if let Command::Report { run_dir: Some(dir), top_k, min_test } = &cli.command {
        let mut options = ReportOptions::default();
        if let Some(k) = top_k {
            options.top_k = *k;
        }
        if let Some(t) = min_test {
            options.pool = FrequencyPool::Parents { min_test: *t };
        }
        let report = build_report(&load_runs(dir)?, &options)?;
        print!("{}", report.to_text());
        return Ok(());
    }

    let mut cfg = load_config(&cli)?;
    if let Command::Report { top_k, min_test, .. } = &cli.command {
        if let Some(k) = top_k {
            cfg.report.top_k = *k;
        }
        if let Some(t) = min_test {
            cfg.report.pool = FrequencyPool::Parents { min_test: *t };
        }
        cfg.validate()?;
    }
    let runner = Runner::new(cfg.clone(), cfg.output_root.clone(), cli.force);
    let stage = match &cli.command {
        Command::Ingest => Stage::Ingest,
        Command::Pca => Stage::Pca,
        Command::Slic => Stage::Slic,
        Command::Segments => Stage::Segments,
        Command::Features => Stage::Features,
        Command::Evolve => Stage::Evolve,
        Command::Report { .. } => Stage::Report,
        Command::Tile => Stage::Tile,
        Command::Pipeline => return runner.pipeline(),
        Command::Compose { bands } => {
            let bands = match bands {
                Some(b) => b.clone(),
                None => runner.composition()?,
            };
            for path in runner.compose(&bands)? {
                println!("{}", path.display());
            }
            return Ok(());
        }
        Command::Synth { .. } => unreachable!("handled above"),
    };
    if runner.run(stage)? == stages::Outcome::Cached && stage == Stage::Report {
        let text = std::fs::read_to_string(runner.root().join("report").join("report.txt"))?;
        print!("{text}");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
