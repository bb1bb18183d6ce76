//! Univariate Marginal Distribution Algorithm over binary band genomes.
//!
//! Each generation keeps the best `parents` individuals, estimates one
//! Bernoulli marginal per gene from their relative gene frequencies, samples
//! `offspring` new genomes from those marginals and forms the next population
//! as parents ∪ offspring. Because parents survive, the population best never
//! gets worse.

use std::cmp::Ordering;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genome::{Genome, MAX_GENES};

pub const DEFAULT_SEEDS: [u64; 5] = [1, 10, 20, 30, 42];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fitness {
    /// Search objective (validation balanced accuracy in the band-selection setting).
    pub val: f64,
    /// Held-out score carried along for reporting.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<f64>,
}

impl Fitness {
    pub fn new(val: f64) -> Self {
        Fitness { val, test: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    genome: Genome,
    fitness: Option<Fitness>,
}

impl Individual {
    pub fn new(genome: Genome) -> Result<Self> {
        if genome.is_empty() {
            return Err(Error::Parameter("an individual needs at least one active gene".into()));
        }
        Ok(Individual { genome, fitness: None })
    }

    pub fn evaluated(genome: Genome, fitness: Fitness) -> Result<Self> {
        let mut ind = Self::new(genome)?;
        ind.set_fitness(fitness)?;
        Ok(ind)
    }

    pub fn genome(&self) -> &Genome {
        &self.genome
    }

    pub fn fitness(&self) -> Option<Fitness> {
        self.fitness
    }

    /// Fitness can be set once.
    pub fn set_fitness(&mut self, fitness: Fitness) -> Result<()> {
        if self.fitness.is_some() {
            return Err(Error::Validation(format!("fitness of {} already set", self.genome)));
        }
        self.fitness = Some(fitness);
        Ok(())
    }
}

/// Higher fitness first; ties prefer fewer active bands, then the
/// lexicographically smaller genome.
pub fn rank_order(a: (&Genome, f64), b: (&Genome, f64)) -> Ordering {
    b.1.total_cmp(&a.1)
        .then(a.0.active_count().cmp(&b.0.active_count()))
        .then(a.0.cmp(b.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UmdaConfig {
    pub genes: usize,
    pub population_size: usize,
    pub generations: usize,
    pub parents: usize,
    pub offspring: usize,
    pub seed: u64,
    /// Marginal bounds `(low, high)`; `(0, 1)` disables clamping.
    pub clamp: (f64, f64),
}

impl Default for UmdaConfig {
    fn default() -> Self {
        UmdaConfig {
            genes: 7,
            population_size: 10,
            generations: 10,
            parents: 5,
            offspring: 5,
            seed: 42,
            clamp: (0.05, 0.95),
        }
    }
}

impl UmdaConfig {
    pub fn with_seed(self, seed: u64) -> Self {
        UmdaConfig { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.genes == 0 || self.genes > MAX_GENES {
            return Err(Error::Parameter(format!("genes must be in 1..={MAX_GENES}")));
        }
        if self.parents == 0 {
            return Err(Error::Parameter("parents must be >= 1".into()));
        }
        if self.parents + self.offspring != self.population_size {
            return Err(Error::Parameter(format!(
                "parents ({}) + offspring ({}) must equal population_size ({})",
                self.parents, self.offspring, self.population_size
            )));
        }
        let (lo, hi) = self.clamp;
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
            return Err(Error::Parameter(format!("clamp ({lo}, {hi}) must satisfy 0 <= low <= high <= 1")));
        }
        Ok(())
    }
}

pub fn run_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn sample_genome<R: Rng>(marginals: &[f64], rng: &mut R) -> Genome {
    loop {
        let genes: Vec<bool> = marginals.iter().map(|&p| rng.random_bool(p)).collect();
        if genes.iter().any(|&g| g) {
            return Genome::from_genes(&genes).expect("length checked by caller");
        }
    }
}

/// Random initial population: every gene Bernoulli(0.5), all-zero genomes redrawn.
pub fn init_population<R: Rng>(config: &UmdaConfig, rng: &mut R) -> Result<Vec<Individual>> {
    config.validate()?;
    let half = vec![0.5; config.genes];
    (0..config.population_size)
        .map(|_| Individual::new(sample_genome(&half, rng)))
        .collect()
}

/// The `count` best individuals under [`rank_order`].
pub fn select_parents(population: &[Individual], count: usize) -> Result<Vec<Individual>> {
    let mut ranked: Vec<(&Individual, f64)> = population
        .iter()
        .map(|ind| {
            ind.fitness
                .map(|f| (ind, f.val))
                .ok_or_else(|| Error::Validation(format!("individual {} has not been evaluated", ind.genome)))
        })
        .collect::<Result<_>>()?;
    ranked.sort_by(|a, b| rank_order((&a.0.genome, a.1), (&b.0.genome, b.1)));
    Ok(ranked.into_iter().take(count).map(|(ind, _)| ind.clone()).collect())
}

/// Relative frequency of each gene among the parents, clamped to `clamp`.
pub fn estimate_marginals(parents: &[Individual], clamp: (f64, f64)) -> Result<Vec<f64>> {
    let first = parents
        .first()
        .ok_or_else(|| Error::Parameter("cannot estimate marginals from zero parents".into()))?;
    let genes = first.genome.len();
    let mut counts = vec![0usize; genes];
    for p in parents {
        for (i, c) in counts.iter_mut().enumerate() {
            *c += p.genome.gene(i) as usize;
        }
    }
    Ok(counts
        .into_iter()
        .map(|c| (c as f64 / parents.len() as f64).clamp(clamp.0, clamp.1))
        .collect())
}

/// `count` new individuals, genes drawn in index order from the marginals.
pub fn sample_offspring<R: Rng>(marginals: &[f64], count: usize, rng: &mut R) -> Result<Vec<Individual>> {
    if marginals.is_empty() || marginals.len() > MAX_GENES {
        return Err(Error::Parameter(format!("marginal vector length must be in 1..={MAX_GENES}")));
    }
    if marginals.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::Parameter(format!("marginals {marginals:?} outside [0, 1]")));
    }
    if marginals.iter().all(|&p| p == 0.0) {
        return Err(Error::Parameter("all marginals are zero; no valid genome can be drawn".into()));
    }
    (0..count)
        .map(|_| Individual::new(sample_genome(marginals, rng)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParentEntry {
    pub genome: Genome,
    pub val: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<f64>,
}

/// One line of the run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationLog {
    pub gen: usize,
    pub marginals: Vec<f64>,
    pub parents: Vec<ParentEntry>,
    pub best_genome: Genome,
    pub best_val: f64,
    pub best_test: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionResult {
    pub best: Individual,
    pub logs: Vec<GenerationLog>,
    /// Fitness calls made (duplicates included).
    pub evaluations: usize,
}

fn evaluate_all<F>(population: &mut [Individual], fitness: &F, generation: usize) -> Result<()>
where
    F: Fn(&Genome) -> Result<Fitness> + Sync,
{
    let scores: Vec<Result<Fitness>> = population
        .par_iter()
        .map(|ind| match ind.fitness {
            Some(f) => Ok(f),
            None => fitness(&ind.genome),
        })
        .collect();
    for (ind, score) in population.iter_mut().zip(scores) {
        let score = score.map_err(|e| Error::Fitness {
            generation,
            source: Box::new(e),
        })?;
        if ind.fitness.is_none() {
            ind.set_fitness(score)?;
        }
    }
    Ok(())
}

/// Runs the full loop. Generation `g` of the log describes the population
/// after `g` rounds of sampling: its parents, the marginals they induce and
/// the best individual seen so far. `generations = 0` logs only the initial
/// population.
pub fn evolve<F>(config: &UmdaConfig, fitness: F) -> Result<EvolutionResult>
where
    F: Fn(&Genome) -> Result<Fitness> + Sync,
{
    config.validate()?;
    let mut rng = run_rng(config.seed);
    let mut population = init_population(config, &mut rng)?;
    evaluate_all(&mut population, &fitness, 0)?;
    let mut evaluations = population.len();

    let mut logs = Vec::with_capacity(config.generations + 1);
    for gen in 0..=config.generations {
        let parents = select_parents(&population, config.parents)?;
        let marginals = estimate_marginals(&parents, config.clamp)?;
        let best = &parents[0];
        let best_fit = best.fitness.expect("parents are evaluated");
        logs.push(GenerationLog {
            gen,
            marginals: marginals.clone(),
            parents: parents
                .iter()
                .map(|p| {
                    let f = p.fitness.expect("parents are evaluated");
                    ParentEntry {
                        genome: p.genome,
                        val: f.val,
                        test: f.test,
                    }
                })
                .collect(),
            best_genome: best.genome,
            best_val: best_fit.val,
            best_test: best_fit.test,
        });
        if gen == config.generations {
            return Ok(EvolutionResult {
                best: best.clone(),
                logs,
                evaluations,
            });
        }
        let mut offspring = sample_offspring(&marginals, config.offspring, &mut rng)?;
        evaluate_all(&mut offspring, &fitness, gen + 1)?;
        evaluations += offspring.len();
        population = parents;
        population.extend(offspring);
    }
    unreachable!("loop returns on the last generation")
}

/// Every non-empty genome of length `genes`, ranked by [`rank_order`].
pub fn exhaustive_oracle<F>(genes: usize, fitness: F) -> Result<Vec<(Genome, Fitness)>>
where
    F: Fn(&Genome) -> Result<Fitness> + Sync,
{
    if genes == 0 || genes > 20 {
        return Err(Error::Parameter(format!("exhaustive search over {genes} genes is not supported")));
    }
    let mut all: Vec<(Genome, Fitness)> = (1u32..(1u32 << genes))
        .into_par_iter()
        .map(|bits| {
            let g = Genome::from_bits(genes, bits);
            fitness(&g).map(|f| (g, f))
        })
        .collect::<Result<_>>()?;
    all.sort_by(|a, b| rank_order((&a.0, a.1.val), (&b.0, b.1.val)));
    Ok(all)
}

pub fn write_jsonl(logs: &[GenerationLog], path: &Path) -> Result<()> {
    let mut out = Vec::new();
    for log in logs {
        serde_json::to_writer(&mut out, log)?;
        out.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_jsonl(path: &Path) -> Result<Vec<GenerationLog>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Format {
            what: format!("{} line {}", path.display(), i + 1),
            detail: e.to_string(),
        })?);
    }
    Ok(out)
}
