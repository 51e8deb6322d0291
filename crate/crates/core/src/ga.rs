//! Real-parameter genetic algorithm with elitism and elite-biased mutation.
//!
//! Selection is fitness-proportionate (roulette wheel) over nonnegative
//! fitness values, crossover is per-gene uniform, and mutation redraws a
//! gene either uniformly on its range or from a Gaussian centred on the
//! elite's gene. The elite of each generation is cloned unchanged, together
//! with its cached fitness, so best-so-far fitness never decreases unless
//! `reevaluate_elite` is switched on.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec;

/// Errors produced by GA construction or breeding operators.
#[derive(Debug, Error, PartialEq)]
pub enum GaError {
    #[error("invalid gene spec `{name}`: low {low} must be strictly below high {high}")]
    InvalidGeneSpec { name: String, low: f64, high: f64 },
    #[error("invalid GA configuration: {0}")]
    InvalidConfig(String),
    #[error("genome length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
}

/// Closed search interval for one gene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneSpec {
    pub name: String,
    pub low: f64,
    pub high: f64,
}

impl GeneSpec {
    pub fn new(name: impl Into<String>, low: f64, high: f64) -> Result<Self, GaError> {
        let spec = GeneSpec { name: name.into(), low, high };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), GaError> {
        if !(self.low.is_finite() && self.high.is_finite()) || self.low >= self.high {
            return Err(GaError::InvalidGeneSpec {
                name: self.name.clone(),
                low: self.low,
                high: self.high,
            });
        }
        Ok(())
    }

    pub fn range(&self) -> f64 {
        self.high - self.low
    }

    pub fn clamp(&self, value: f64) -> f64 {
        value.clamp(self.low, self.high)
    }
}

/// One candidate parameter vector, ordered like the active gene specs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Genome {
    pub genes: Vec<f64>,
}

impl Genome {
    pub fn new(genes: Vec<f64>) -> Self {
        Genome { genes }
    }

    pub fn len(&self) -> usize {
        self.genes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.genes.is_empty()
    }
}

/// A genome plus its cached fitness and the RNG seed its evaluation uses.
///
/// `eval_seed` is drawn from the master RNG when the individual is created,
/// before any evaluation is dispatched; evaluations are pure functions of
/// `(genome, eval_seed)`, which is what makes parallel and sequential
/// evaluation bitwise identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub genome: Genome,
    pub fitness: Option<f64>,
    pub eval_seed: u64,
}

impl Individual {
    pub fn unevaluated(genome: Genome, eval_seed: u64) -> Self {
        Individual { genome, fitness: None, eval_seed }
    }

    fn fitness_or_zero(&self) -> f64 {
        self.fitness.unwrap_or(0.0)
    }
}

/// GA hyperparameters.
///
/// `population_schedule` lists `(first generation, size)` pairs; a schedule
/// of `[(0, 35), (3, 25)]` runs 35 individuals for generations 0 through 2
/// and 25 afterwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaConfig {
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    pub elite_bias_rate: f64,
    /// Standard deviation of the elite-biased redraw, as a fraction of the
    /// gene range.
    pub elite_sigma_frac: f64,
    pub population_schedule: Vec<(usize, usize)>,
    pub generations: usize,
    pub rng_seed: u64,
    /// When set, the elite is re-evaluated each generation instead of
    /// keeping its cached fitness; best-so-far monotonicity then holds only
    /// in expectation.
    pub reevaluate_elite: bool,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            crossover_rate: 0.5,
            mutation_rate: 0.3,
            elite_bias_rate: 0.3,
            elite_sigma_frac: 0.05,
            population_schedule: vec![(0, 35), (3, 25)],
            generations: 10,
            rng_seed: 42,
            reevaluate_elite: false,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<(), GaError> {
        for (label, value) in [
            ("crossover_rate", self.crossover_rate),
            ("mutation_rate", self.mutation_rate),
            ("elite_bias_rate", self.elite_bias_rate),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(GaError::InvalidConfig(format!(
                    "{label} must lie in [0, 1], got {value}"
                )));
            }
        }
        if !self.elite_sigma_frac.is_finite() || self.elite_sigma_frac <= 0.0 {
            return Err(GaError::InvalidConfig(format!(
                "elite_sigma_frac must be positive, got {}",
                self.elite_sigma_frac
            )));
        }
        if self.generations == 0 {
            return Err(GaError::InvalidConfig("generations must be at least 1".into()));
        }
        if self.population_schedule.is_empty() {
            return Err(GaError::InvalidConfig("population_schedule is empty".into()));
        }
        if self.population_schedule[0].0 != 0 {
            return Err(GaError::InvalidConfig(
                "population_schedule must start at generation 0".into(),
            ));
        }
        for window in self.population_schedule.windows(2) {
            if window[1].0 <= window[0].0 {
                return Err(GaError::InvalidConfig(
                    "population_schedule generations must be strictly increasing".into(),
                ));
            }
        }
        for &(generation, size) in &self.population_schedule {
            if size < 2 {
                return Err(GaError::InvalidConfig(format!(
                    "population size {size} at generation {generation} is below 2"
                )));
            }
        }
        Ok(())
    }

    /// Population size in force at `generation`.
    pub fn population_size_at(&self, generation: usize) -> usize {
        let mut size = self.population_schedule[0].1;
        for &(start, s) in &self.population_schedule {
            if start <= generation {
                size = s;
            }
        }
        size
    }
}

/// Counters for the declared soft-failure paths.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GaDiagnostics {
    /// Selections that fell back to a uniform draw because total fitness
    /// was zero (or not finite).
    pub uniform_fallback_selections: u64,
    /// Oracle evaluations that returned a non-finite value (stored as 0).
    pub nonfinite_fitness: u64,
    /// Oracle evaluations that returned a negative value (stored as 0).
    pub negative_fitness: u64,
}

/// Snapshot of one generation after evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: usize,
    pub best: Individual,
    pub population_snapshot: Vec<Individual>,
    pub evaluations_so_far: usize,
}

/// Everything `evolve` produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolveOutcome {
    pub records: Vec<GenerationRecord>,
    pub diagnostics: GaDiagnostics,
}

/// A fitness oracle: a pure function of a genome and a per-individual seed.
pub trait FitnessOracle: Sync {
    fn evaluate(&self, genome: &Genome, eval_seed: u64) -> f64;
}

impl<F> FitnessOracle for F
where
    F: Fn(&Genome, u64) -> f64 + Sync,
{
    fn evaluate(&self, genome: &Genome, eval_seed: u64) -> f64 {
        self(genome, eval_seed)
    }
}

fn validate_specs(specs: &[GeneSpec]) -> Result<(), GaError> {
    if specs.is_empty() {
        return Err(GaError::InvalidConfig("gene spec list is empty".into()));
    }
    for spec in specs {
        spec.validate()?;
    }
    Ok(())
}

/// Draws `size` individuals with genes uniform on their spec ranges.
pub fn initialize_population(
    specs: &[GeneSpec],
    size: usize,
    rng: &mut impl Rng,
) -> Result<Vec<Individual>, GaError> {
    validate_specs(specs)?;
    if size < 2 {
        return Err(GaError::InvalidConfig(format!(
            "population size must be at least 2, got {size}"
        )));
    }
    Ok((0..size)
        .map(|_| {
            let genes = specs
                .iter()
                .map(|spec| rng.gen_range(spec.low..=spec.high))
                .collect();
            let eval_seed = rng.gen();
            Individual::unevaluated(Genome::new(genes), eval_seed)
        })
        .collect())
}

/// Roulette-wheel draw proportional to fitness; uniform fallback (counted
/// in `diagnostics`) when total fitness is zero.
pub fn select_parent<'a>(
    population: &'a [Individual],
    rng: &mut impl Rng,
    diagnostics: &mut GaDiagnostics,
) -> &'a Individual {
    debug_assert!(!population.is_empty());
    let total: f64 = population.iter().map(Individual::fitness_or_zero).sum();
    if !(total.is_finite() && total > 0.0) {
        diagnostics.uniform_fallback_selections += 1;
        return &population[rng.gen_range(0..population.len())];
    }
    let threshold = rng.gen::<f64>() * total;
    let mut cumulative = 0.0;
    for individual in population {
        cumulative += individual.fitness_or_zero();
        if cumulative > threshold {
            return individual;
        }
    }
    population.last().expect("population is nonempty")
}

/// Per-gene uniform crossover: each gene comes from `parent_b` with
/// probability `crossover_rate`, otherwise from `parent_a`.
pub fn crossover(
    parent_a: &Genome,
    parent_b: &Genome,
    crossover_rate: f64,
    rng: &mut impl Rng,
) -> Result<Genome, GaError> {
    if parent_a.len() != parent_b.len() {
        return Err(GaError::LengthMismatch { expected: parent_a.len(), got: parent_b.len() });
    }
    let genes = parent_a
        .genes
        .iter()
        .zip(&parent_b.genes)
        .map(|(&a, &b)| if rng.gen_bool(crossover_rate) { b } else { a })
        .collect();
    Ok(Genome::new(genes))
}

/// Mutates each gene independently with probability `mutation_rate`; a
/// mutated gene is redrawn near the elite's gene (Gaussian, sigma =
/// `elite_sigma_frac` of the range, clamped) with probability
/// `elite_bias_rate`, else uniformly on the range.
pub fn mutate(
    child: &Genome,
    elite: &Genome,
    specs: &[GeneSpec],
    config: &GaConfig,
    rng: &mut impl Rng,
) -> Result<Genome, GaError> {
    if child.len() != specs.len() {
        return Err(GaError::LengthMismatch { expected: specs.len(), got: child.len() });
    }
    if elite.len() != specs.len() {
        return Err(GaError::LengthMismatch { expected: specs.len(), got: elite.len() });
    }
    let genes = child
        .genes
        .iter()
        .zip(&elite.genes)
        .zip(specs)
        .map(|((&gene, &elite_gene), spec)| {
            if !rng.gen_bool(config.mutation_rate) {
                return gene;
            }
            if rng.gen_bool(config.elite_bias_rate) {
                let sigma = config.elite_sigma_frac * spec.range();
                let normal = Normal::new(elite_gene, sigma).expect("sigma is positive");
                spec.clamp(normal.sample(rng))
            } else {
                rng.gen_range(spec.low..=spec.high)
            }
        })
        .collect();
    Ok(Genome::new(genes))
}

fn best_index(population: &[Individual]) -> usize {
    let mut best = 0;
    for (index, individual) in population.iter().enumerate() {
        if individual.fitness_or_zero() > population[best].fitness_or_zero() {
            best = index;
        }
    }
    best
}

fn evaluate_pending<O: FitnessOracle>(
    oracle: &O,
    population: &mut [Individual],
    diagnostics: &mut GaDiagnostics,
    evaluations: &mut usize,
) {
    let pending: Vec<usize> = population
        .iter()
        .enumerate()
        .filter(|(_, individual)| individual.fitness.is_none())
        .map(|(index, _)| index)
        .collect();
    let results = {
        let population = &*population;
        exec::run_indexed(pending.len(), |k| {
            let individual = &population[pending[k]];
            oracle.evaluate(&individual.genome, individual.eval_seed)
        })
    };
    for (&index, &raw) in pending.iter().zip(&results) {
        let fitness = if !raw.is_finite() {
            diagnostics.nonfinite_fitness += 1;
            0.0
        } else if raw < 0.0 {
            diagnostics.negative_fitness += 1;
            0.0
        } else {
            raw
        };
        population[index].fitness = Some(fitness);
    }
    *evaluations += pending.len();
}

/// Runs the configured number of generations and records each one.
///
/// All randomness derives from `config.rng_seed`: the master ChaCha stream
/// drives initialization and breeding, and every individual carries an
/// `eval_seed` drawn from that stream at creation time.
pub fn evolve<O: FitnessOracle>(
    oracle: &O,
    specs: &[GeneSpec],
    config: &GaConfig,
) -> Result<EvolveOutcome, GaError> {
    config.validate()?;
    validate_specs(specs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut diagnostics = GaDiagnostics::default();
    let mut evaluations = 0usize;
    let mut population = initialize_population(specs, config.population_size_at(0), &mut rng)?;
    let mut records = Vec::with_capacity(config.generations);

    for generation in 0..config.generations {
        evaluate_pending(oracle, &mut population, &mut diagnostics, &mut evaluations);
        let best = population[best_index(&population)].clone();
        records.push(GenerationRecord {
            generation,
            best: best.clone(),
            population_snapshot: population.clone(),
            evaluations_so_far: evaluations,
        });
        if generation + 1 == config.generations {
            break;
        }

        let next_size = config.population_size_at(generation + 1);
        let mut next = Vec::with_capacity(next_size);
        let mut elite = best.clone();
        if config.reevaluate_elite {
            elite.fitness = None;
            elite.eval_seed = rng.gen();
        }
        next.push(elite);
        while next.len() < next_size {
            let parent_a = select_parent(&population, &mut rng, &mut diagnostics).genome.clone();
            let parent_b = select_parent(&population, &mut rng, &mut diagnostics).genome.clone();
            let child = crossover(&parent_a, &parent_b, config.crossover_rate, &mut rng)?;
            let child = mutate(&child, &best.genome, specs, config, &mut rng)?;
            next.push(Individual::unevaluated(child, rng.gen()));
        }
        population = next;
    }

    Ok(EvolveOutcome { records, diagnostics })
}
