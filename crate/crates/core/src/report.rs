//! Aggregation of evolution logs into band-frequency and fitness summaries.
//!
//! Every number here is derived from the `seed_<n>.jsonl` logs alone.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genome::Genome;
use crate::umda::{read_jsonl, GenerationLog};

pub fn run_file_name(seed: u64) -> String {
    format!("seed_{seed}.jsonl")
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedRun {
    pub seed: u64,
    pub logs: Vec<GenerationLog>,
}

/// Loads every `seed_<n>.jsonl` in `dir`, ordered by seed.
pub fn load_runs(dir: &Path) -> Result<Vec<SeedRun>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut found: Vec<(u64, PathBuf)> = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name();
        let Some(name) = name.to_str() else { continue };
        if let Some(seed) = name
            .strip_prefix("seed_")
            .and_then(|s| s.strip_suffix(".jsonl"))
            .and_then(|s| s.parse().ok())
        {
            found.push((seed, entry.path()));
        }
    }
    if found.is_empty() {
        return Err(Error::Validation(format!("no seed_<n>.jsonl run logs in {}", dir.display())));
    }
    found.sort();
    found
        .into_iter()
        .map(|(seed, path)| {
            let logs = read_jsonl(&path)?;
            if logs.is_empty() {
                return Err(Error::Format {
                    what: path.display().to_string(),
                    detail: "empty run log".into(),
                });
            }
            Ok(SeedRun { seed, logs })
        })
        .collect()
}

/// Which genomes the band-frequency row counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum FrequencyPool {
    /// The final best individual of every seed.
    SeedBests,
    /// Every distinct parent of a seed, over all generations, whose test
    /// score is at least `min_test`.
    Parents { min_test: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReportOptions {
    pub pool: FrequencyPool,
    pub top_k: usize,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            pool: FrequencyPool::SeedBests,
            top_k: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedBest {
    pub seed: u64,
    pub genome: Genome,
    pub val: f64,
    pub test: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandFrequency {
    /// 1-based band index.
    pub band: usize,
    pub count: usize,
    pub frequency: f64,
    /// 1 = most frequent; ties broken by lower band index.
    pub rank: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub sd: f64,
}

pub fn mean_sd(values: &[f64]) -> Option<MeanSd> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    Some(MeanSd { mean, sd })
}

/// Per-band selection frequency over `genomes`, all of the same length.
pub fn band_frequencies(genomes: &[Genome]) -> Result<Vec<BandFrequency>> {
    let first = genomes
        .first()
        .ok_or_else(|| Error::Validation("band frequencies need at least one genome".into()))?;
    let len = first.len();
    if genomes.iter().any(|g| g.len() != len) {
        return Err(Error::Validation("genomes of different lengths in one pool".into()));
    }
    let mut freqs: Vec<BandFrequency> = (0..len)
        .map(|i| {
            let count = genomes.iter().filter(|g| g.gene(i)).count();
            BandFrequency {
                band: i + 1,
                count,
                frequency: count as f64 / genomes.len() as f64,
                rank: 0,
            }
        })
        .collect();
    let mut order: Vec<usize> = (0..len).collect();
    order.sort_by(|&a, &b| freqs[b].count.cmp(&freqs[a].count).then(a.cmp(&b)));
    for (rank, &i) in order.iter().enumerate() {
        freqs[i].rank = rank + 1;
    }
    Ok(freqs)
}

/// The `k` highest-ranked bands, most frequent first.
pub fn top_bands(freqs: &[BandFrequency], k: usize) -> Vec<usize> {
    let mut ranked: Vec<&BandFrequency> = freqs.iter().collect();
    ranked.sort_by_key(|f| f.rank);
    ranked.into_iter().take(k).map(|f| f.band).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub seeds: Vec<SeedBest>,
    pub pool: FrequencyPool,
    pub pool_size: usize,
    pub frequencies: Vec<BandFrequency>,
    pub val: MeanSd,
    /// Present when every seed best carries a test score.
    pub test: Option<MeanSd>,
    pub composition: Vec<usize>,
}

fn pool_genomes(runs: &[SeedRun], bests: &[SeedBest], pool: FrequencyPool) -> Vec<Genome> {
    match pool {
        FrequencyPool::SeedBests => bests.iter().map(|b| b.genome).collect(),
        FrequencyPool::Parents { min_test } => runs
            .iter()
            .flat_map(|run| {
                let distinct: BTreeSet<Genome> = run
                    .logs
                    .iter()
                    .flat_map(|log| &log.parents)
                    .filter(|p| p.test.is_some_and(|t| t >= min_test))
                    .map(|p| p.genome)
                    .collect();
                distinct
            })
            .collect(),
    }
}

pub fn build_report(runs: &[SeedRun], options: &ReportOptions) -> Result<Report> {
    if runs.is_empty() {
        return Err(Error::Validation("no evolution runs to report".into()));
    }
    let seeds: Vec<SeedBest> = runs
        .iter()
        .map(|run| {
            let last = run.logs.last().ok_or_else(|| Error::Validation(format!("run {} has no generations", run.seed)))?;
            Ok(SeedBest {
                seed: run.seed,
                genome: last.best_genome,
                val: last.best_val,
                test: last.best_test,
            })
        })
        .collect::<Result<_>>()?;

    let genomes = pool_genomes(runs, &seeds, options.pool);
    if genomes.is_empty() {
        return Err(Error::Validation("frequency pool is empty (threshold too high?)".into()));
    }
    let frequencies = band_frequencies(&genomes)?;
    let vals: Vec<f64> = seeds.iter().map(|s| s.val).collect();
    let tests: Option<Vec<f64>> = seeds.iter().map(|s| s.test).collect();
    Ok(Report {
        composition: top_bands(&frequencies, options.top_k),
        pool: options.pool,
        pool_size: genomes.len(),
        val: mean_sd(&vals).expect("at least one seed"),
        test: tests.and_then(|t| mean_sd(&t)),
        seeds,
        frequencies,
    })
}

fn pct(v: f64) -> String {
    format!("{:.2}", 100.0 * v)
}

impl Report {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "best individual per seed");
        let _ = writeln!(s, "{:>6}  {:<10}  {:<16}  {:>7}  {:>7}", "seed", "genome", "bands", "val%", "test%");
        for b in &self.seeds {
            let bands: Vec<String> = b.genome.active_bands().iter().map(|x| x.to_string()).collect();
            let _ = writeln!(
                s,
                "{:>6}  {:<10}  {:<16}  {:>7}  {:>7}",
                b.seed,
                b.genome.to_string(),
                bands.join(","),
                pct(b.val),
                b.test.map(pct).unwrap_or_else(|| "-".into())
            );
        }
        let pool = match self.pool {
            FrequencyPool::SeedBests => "seed bests".to_string(),
            FrequencyPool::Parents { min_test } => format!("distinct parents with test >= {}", pct(min_test)),
        };
        let _ = writeln!(s, "\nband frequency over {} genomes ({pool})", self.pool_size);
        let _ = write!(s, "{:<6}", "band");
        for f in &self.frequencies {
            let _ = write!(s, "{:>8}", f.band);
        }
        let _ = write!(s, "\n{:<6}", "prob");
        for f in &self.frequencies {
            let _ = write!(s, "{:>8}", format!("{:.1}%", 100.0 * f.frequency));
        }
        let _ = write!(s, "\n{:<6}", "rank");
        for f in &self.frequencies {
            let _ = write!(s, "{:>8}", f.rank);
        }
        let _ = writeln!(s, "\n\nfitness over {} seeds", self.seeds.len());
        let _ = writeln!(s, "val   mean {}  sd {}", pct(self.val.mean), pct(self.val.sd));
        if let Some(t) = self.test {
            let _ = writeln!(s, "test  mean {}  sd {}", pct(t.mean), pct(t.sd));
        }
        let comp: Vec<String> = self.composition.iter().map(|b| b.to_string()).collect();
        let _ = writeln!(s, "\ncomposition (top {}): {}", self.composition.len(), comp.join(","));
        s
    }
}
