//! The outer evolutionary loop with lifetime learning.
//!
//! Every individual, including the initial population, learns a brain for its
//! body before it is evaluated. Two switches select the variant:
//!
//! - [`BrainMode`]: offspring brains come from a uniform crossover of both
//!   parents (`Sexual`) or from the fitter parent alone (`Asexual`). Bodies
//!   always recombine.
//! - [`Inheritance`]: the learned brain is written back into the inheritable
//!   genotype (`Lamarckian`) or discarded after evaluation (`Darwinian`).
//!
//! Randomness is split into independent streams keyed by run seed,
//! generation and purpose, so results do not depend on thread scheduling.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::brain::{gaussian_mutate_brain, uniform_crossover_brain, BrainGenotype, BrainMutationParams};
use crate::cppn::{crossover_cppn, mutate_cppn, random_cppn, CppnGenome, CppnInitParams, CppnMutationParams, InnovationTracker};
use crate::error::{Error, Result};
use crate::learner::{learn_brain, LearnerConfig, LearnerGenerationRecord};
use crate::morphology::{decode_body, BodyPhenotype};
use crate::sim::SurrogateParams;
use crate::tasks::{Task, TaskEvaluator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BrainMode {
    Asexual,
    Sexual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Inheritance {
    Darwinian,
    Lamarckian,
}

impl BrainMode {
    pub fn name(self) -> &'static str {
        match self {
            BrainMode::Asexual => "asexual",
            BrainMode::Sexual => "sexual",
        }
    }
}

impl Inheritance {
    pub fn name(self) -> &'static str {
        match self {
            Inheritance::Darwinian => "darwinian",
            Inheritance::Lamarckian => "lamarckian",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolutionConfig {
    pub population_size: usize,
    pub offspring_per_gen: usize,
    /// Generations including the initial population.
    pub generations: usize,
    pub brain_mode: BrainMode,
    pub inheritance: Inheritance,
    pub seed: u64,
    pub task: Task,
    pub surrogate: SurrogateParams,
    pub learner: LearnerConfig,
    pub cppn_init: CppnInitParams,
    pub cppn_mutation: CppnMutationParams,
    pub brain_mutation: BrainMutationParams,
    /// Initial brain weights are uniform in `[-r, r]`.
    pub brain_init_range: f64,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        EvolutionConfig {
            population_size: 50,
            offspring_per_gen: 25,
            generations: 30,
            brain_mode: BrainMode::Sexual,
            inheritance: Inheritance::Darwinian,
            seed: 0,
            task: Task::default(),
            surrogate: SurrogateParams::default(),
            learner: LearnerConfig::default(),
            cppn_init: CppnInitParams::default(),
            cppn_mutation: CppnMutationParams::default(),
            brain_mutation: BrainMutationParams::default(),
            brain_init_range: 1.0,
        }
    }
}

fn probability(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be in [0,1], got {p}")))
    }
}

fn non_negative(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")))
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population_size == 0 || self.offspring_per_gen == 0 || self.generations == 0 {
            return Err(Error::Config(
                "population_size, offspring_per_gen and generations must be >= 1".into(),
            ));
        }
        self.task.validate()?;
        self.surrogate.validate()?;
        self.learner.validate()?;
        let m = &self.cppn_mutation;
        probability("cppn_mutation.weight_perturb_prob", m.weight_perturb_prob)?;
        probability("cppn_mutation.weight_reset_prob", m.weight_reset_prob)?;
        probability("cppn_mutation.add_connection_prob", m.add_connection_prob)?;
        probability("cppn_mutation.add_node_prob", m.add_node_prob)?;
        if m.add_connection_prob + m.add_node_prob > 1.0 {
            return Err(Error::Config("add_connection_prob + add_node_prob must be <= 1".into()));
        }
        non_negative("cppn_mutation.weight_sigma", m.weight_sigma)?;
        non_negative("cppn_init.weight_range", self.cppn_init.weight_range)?;
        probability("brain_mutation.probability", self.brain_mutation.probability)?;
        non_negative("brain_mutation.sigma", self.brain_mutation.sigma)?;
        non_negative("brain_init_range", self.brain_init_range)?;
        Ok(())
    }

    /// Individuals created and evaluated over the run.
    pub fn evaluation_budget(&self) -> usize {
        self.population_size + self.offspring_per_gen * self.generations.saturating_sub(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub id: u64,
    pub born: usize,
    /// Body parents; `None` for the initial population.
    pub parents: Option<(u64, u64)>,
    /// Parents whose brain genotype was inherited.
    pub brain_parents: Vec<u64>,
    pub body_genome: CppnGenome,
    pub body: BodyPhenotype,
    /// The inheritable brain.
    pub brain_genotype: BrainGenotype,
    /// The brain found by learning; used for evaluation.
    pub learned_brain: BrainGenotype,
    pub fitness: f64,
    pub assessments: usize,
}

/// Binary tournament with replacement. The first draw wins ties.
pub fn binary_tournament<'a, R: Rng + ?Sized>(population: &'a [Individual], rng: &mut R) -> &'a Individual {
    assert!(!population.is_empty(), "tournament on an empty population");
    let a = &population[rng.random_range(0..population.len())];
    let b = &population[rng.random_range(0..population.len())];
    if b.fitness > a.fitness {
        b
    } else {
        a
    }
}

/// Offspring genotypes before learning.
#[derive(Debug, Clone)]
pub struct Offspring {
    pub body_genome: CppnGenome,
    pub brain_genotype: BrainGenotype,
    /// The recombined (sexual) or copied (asexual) brain, before mutation.
    pub brain_base: BrainGenotype,
    pub brain_parents: Vec<u64>,
}

pub fn reproduce<R: Rng + ?Sized>(
    a: &Individual,
    b: &Individual,
    config: &EvolutionConfig,
    tracker: &mut InnovationTracker,
    rng: &mut R,
) -> Offspring {
    let crossed = crossover_cppn(&a.body_genome, &b.body_genome, a.fitness, b.fitness, rng);
    let body_genome = mutate_cppn(&crossed, rng, tracker, &config.cppn_mutation);
    let (brain_base, brain_parents) = match config.brain_mode {
        BrainMode::Sexual => (
            uniform_crossover_brain(&a.brain_genotype, &b.brain_genotype, rng),
            vec![a.id, b.id],
        ),
        BrainMode::Asexual => {
            let fitter = if b.fitness > a.fitness { b } else { a };
            (fitter.brain_genotype.clone(), vec![fitter.id])
        }
    };
    let brain_genotype = gaussian_mutate_brain(&brain_base, rng, &config.brain_mutation);
    Offspring {
        body_genome,
        brain_genotype,
        brain_base,
        brain_parents,
    }
}

/// `(mu + lambda)` truncation. Ties go to the older individual, then the
/// lower id.
pub fn survivor_selection(current: Vec<Individual>, offspring: Vec<Individual>, population_size: usize) -> Vec<Individual> {
    let mut pool: Vec<Individual> = current.into_iter().chain(offspring).collect();
    pool.sort_by(|x, y| {
        y.fitness
            .total_cmp(&x.fitness)
            .then(x.born.cmp(&y.born))
            .then(x.id.cmp(&y.id))
    });
    pool.truncate(population_size);
    pool
}

/// Hooks into a running evolution. All methods default to no-ops.
pub trait EvolutionObserver {
    /// A new individual's genotypes exist, before learning.
    fn on_birth(&mut self, _generation: usize, _id: u64, _parents: Option<(&Individual, &Individual)>, _offspring: &Offspring) {}
    /// Learning and evaluation finished. `inherited` is the genotype the
    /// learner started from.
    fn on_evaluated(&mut self, _individual: &Individual, _inherited: &BrainGenotype) {}
    fn on_generation(&mut self, _generation: usize, _population: &[Individual]) {}
}

pub struct NoObserver;

impl EvolutionObserver for NoObserver {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: usize,
    pub mean_fitness: f64,
    pub max_fitness: f64,
    pub min_fitness: f64,
    /// Cumulative evaluations at the end of the generation.
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberRecord {
    pub generation: usize,
    pub id: u64,
    pub born: usize,
    pub parent_a: Option<u64>,
    pub parent_b: Option<u64>,
    /// Brain parents joined with `;`.
    pub brain_parents: String,
    pub fitness: f64,
    pub assessments: usize,
    pub modules: usize,
    pub hinges: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningRecord {
    pub id: u64,
    pub learner_generation: usize,
    pub best: f64,
    pub mean: f64,
    pub assessments: usize,
}

#[derive(Debug, Clone)]
pub struct RunLog {
    pub generations: Vec<GenerationRecord>,
    /// The population after each generation's selection.
    pub members: Vec<MemberRecord>,
    pub learning: Vec<LearningRecord>,
    pub final_population: Vec<Individual>,
    pub evaluations: usize,
    pub assessments: usize,
}

pub const GENERATIONS_CSV: &str = "generations.csv";
pub const MEMBERS_CSV: &str = "individuals.csv";
pub const LEARNING_CSV: &str = "learning.csv";

impl RunLog {
    /// The fittest individual of the final population.
    pub fn best(&self) -> &Individual {
        &self.final_population[0]
    }

    pub fn write_generations<W: Write>(&self, out: W) -> Result<()> {
        write_rows(out, &self.generations)
    }

    pub fn write_members<W: Write>(&self, out: W) -> Result<()> {
        write_rows(out, &self.members)
    }

    pub fn write_learning<W: Write>(&self, out: W) -> Result<()> {
        write_rows(out, &self.learning)
    }

    /// Writes the three CSV logs into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let open = |name: &str| -> Result<std::io::BufWriter<std::fs::File>> {
            let path = dir.join(name);
            let f = std::fs::File::create(&path).map_err(|e| Error::io(path, e))?;
            Ok(std::io::BufWriter::new(f))
        };
        self.write_generations(open(GENERATIONS_CSV)?)?;
        self.write_members(open(MEMBERS_CSV)?)?;
        self.write_learning(open(LEARNING_CSV)?)
    }
}

pub(crate) fn write_rows<W: Write, T: Serialize>(out: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::invalid(format!("csv: {e}")))?;
    }
    w.flush().map_err(|e| Error::invalid(format!("csv: {e}")))
}

/// Independent random stream for `(seed, generation, purpose)`.
fn stream(seed: u64, generation: usize, purpose: u64) -> ChaCha8Rng {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    ChaCha8Rng::seed_from_u64(mix(mix(mix(seed) ^ generation as u64) ^ purpose))
}

const GENOME_STREAM: u64 = u64::MAX;

struct Newborn {
    id: u64,
    parents: Option<(u64, u64)>,
    offspring: Offspring,
}

/// Learns, evaluates and (Lamarckian) writes back, in parallel.
fn develop<E: TaskEvaluator>(
    newborns: Vec<Newborn>,
    generation: usize,
    config: &EvolutionConfig,
    evaluator: &E,
) -> Vec<Result<(Individual, BrainGenotype, Vec<LearnerGenerationRecord>)>> {
    newborns
        .into_par_iter()
        .map(|n| {
            let wrap = |source: Error| Error::Individual {
                generation,
                individual: n.id,
                source: Box::new(source),
            };
            let body = decode_body(&n.offspring.body_genome);
            let inherited = n.offspring.brain_genotype;
            let mut rng = stream(config.seed, generation, n.id);
            let learned = learn_brain(&body, &inherited, |g| evaluator.evaluate(&body, g), &config.learner, &mut rng).map_err(wrap)?;
            let fitness = evaluator.evaluate(&body, &learned.best).map_err(wrap)?;
            if fitness.is_nan() {
                return Err(wrap(Error::Numeric("fitness is NaN".into())));
            }
            let brain_genotype = match config.inheritance {
                Inheritance::Darwinian => inherited.clone(),
                Inheritance::Lamarckian => learned.best.clone(),
            };
            let individual = Individual {
                id: n.id,
                born: generation,
                parents: n.parents,
                brain_parents: n.offspring.brain_parents,
                body_genome: n.offspring.body_genome,
                body,
                brain_genotype,
                learned_brain: learned.best,
                fitness,
                assessments: learned.assessments_used,
            };
            Ok((individual, inherited, learned.history))
        })
        .collect()
}

/// Runs the full loop and returns its log. Any individual's failure aborts
/// the run.
pub fn evolve<E: TaskEvaluator>(config: &EvolutionConfig, evaluator: &E, observer: &mut dyn EvolutionObserver) -> Result<RunLog> {
    config.validate()?;
    let mut tracker = InnovationTracker::new();
    let mut next_id = 0u64;
    let mut log = RunLog {
        generations: Vec::new(),
        members: Vec::new(),
        learning: Vec::new(),
        final_population: Vec::new(),
        evaluations: 0,
        assessments: 0,
    };

    let mut population: Vec<Individual> = Vec::new();
    for generation in 0..config.generations {
        let mut rng = stream(config.seed, generation, GENOME_STREAM);
        let mut newborns = Vec::new();
        if generation == 0 {
            for _ in 0..config.population_size {
                let brain = BrainGenotype::random(&mut rng, config.brain_init_range);
                let offspring = Offspring {
                    body_genome: random_cppn(&mut rng, &config.cppn_init),
                    brain_base: brain.clone(),
                    brain_genotype: brain,
                    brain_parents: Vec::new(),
                };
                observer.on_birth(generation, next_id, None, &offspring);
                newborns.push(Newborn { id: next_id, parents: None, offspring });
                next_id += 1;
            }
        } else {
            for _ in 0..config.offspring_per_gen {
                let a = binary_tournament(&population, &mut rng);
                let b = binary_tournament(&population, &mut rng);
                let offspring = reproduce(a, b, config, &mut tracker, &mut rng);
                observer.on_birth(generation, next_id, Some((a, b)), &offspring);
                newborns.push(Newborn {
                    id: next_id,
                    parents: Some((a.id, b.id)),
                    offspring,
                });
                next_id += 1;
            }
        }

        let mut developed = Vec::with_capacity(newborns.len());
        for result in develop(newborns, generation, config, evaluator) {
            let (individual, inherited, history) = result?;
            observer.on_evaluated(&individual, &inherited);
            log.evaluations += 1;
            log.assessments += individual.assessments;
            log.learning.extend(history.iter().map(|h| LearningRecord {
                id: individual.id,
                learner_generation: h.generation,
                best: h.best,
                mean: h.mean,
                assessments: h.assessments,
            }));
            developed.push(individual);
        }

        population = survivor_selection(population, developed, config.population_size);
        observer.on_generation(generation, &population);
        record_generation(&mut log, generation, &population);
    }
    log.final_population = population;
    Ok(log)
}

fn record_generation(log: &mut RunLog, generation: usize, population: &[Individual]) {
    let fitness = population.iter().map(|i| i.fitness);
    log.generations.push(GenerationRecord {
        generation,
        mean_fitness: fitness.clone().sum::<f64>() / population.len() as f64,
        max_fitness: fitness.clone().fold(f64::NEG_INFINITY, f64::max),
        min_fitness: fitness.fold(f64::INFINITY, f64::min),
        evaluations: log.evaluations,
    });
    log.members.extend(population.iter().map(|i| MemberRecord {
        generation,
        id: i.id,
        born: i.born,
        parent_a: i.parents.map(|p| p.0),
        parent_b: i.parents.map(|p| p.1),
        brain_parents: i.brain_parents.iter().map(u64::to_string).collect::<Vec<_>>().join(";"),
        fitness: i.fitness,
        assessments: i.assessments,
        modules: i.body.len(),
        hinges: i.body.hinges().count(),
    }));
}
