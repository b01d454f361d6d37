//! Run directories and experiment grids.
//!
//! A run directory holds everything needed to re-plot a run without
//! re-simulating it:
//!
//! | file | contents |
//! |---|---|
//! | `config.toml` | the resolved [`EvolutionConfig`] |
//! | `generations.csv` | per-generation mean/max/min fitness |
//! | `individuals.csv` | the population after every generation |
//! | `learning.csv` | per-individual learner progress |
//! | `best_body.json` | body of the final best individual |
//! | `best_brain.txt` | its learned brain |
//! | `best_trajectory.csv` | its trajectory on the run's task |
//! | `summary.json` | counters and the best fitness |
//! | `COMPLETE` | written last; completed runs are never touched again |

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::brain::BrainGenotype;
use crate::error::{Error, Result};
use crate::evolution::{evolve, write_rows, BrainMode, EvolutionConfig, EvolutionObserver, GenerationRecord, Individual, Inheritance, NoObserver, GENERATIONS_CSV};
use crate::morphology::BodyPhenotype;
use crate::tasks::{SimEvaluator, Task};

pub const CONFIG_FILE: &str = "config.toml";
pub const SUMMARY_FILE: &str = "summary.json";
pub const BEST_BODY_FILE: &str = "best_body.json";
pub const BEST_BRAIN_FILE: &str = "best_brain.txt";
pub const BEST_TRAJECTORY_FILE: &str = "best_trajectory.csv";
pub const COMPLETE_MARKER: &str = "COMPLETE";
pub const AGGREGATE_CSV: &str = "aggregate.csv";
pub const GRID_SUMMARY_CSV: &str = "runs.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub task: String,
    pub brain_mode: BrainMode,
    pub inheritance: Inheritance,
    pub evaluations: usize,
    pub assessments: usize,
    pub best_id: u64,
    pub best_fitness: f64,
}

pub fn read_config(path: &Path) -> Result<EvolutionConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let config: EvolutionConfig = toml::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
    config.validate()?;
    Ok(config)
}

pub fn is_complete(dir: &Path) -> bool {
    dir.join(COMPLETE_MARKER).is_file()
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Snapshots the population every `every` generations into `checkpoints/`.
struct Checkpointer {
    dir: PathBuf,
    every: usize,
    error: Option<Error>,
}

#[derive(Serialize)]
struct CheckpointMember<'a> {
    id: u64,
    born: usize,
    fitness: f64,
    body_genome: &'a crate::cppn::CppnGenome,
    brain_genotype: &'a [f64],
}

impl EvolutionObserver for Checkpointer {
    fn on_generation(&mut self, generation: usize, population: &[Individual]) {
        if self.error.is_some() || !(generation + 1).is_multiple_of(self.every) {
            return;
        }
        let members: Vec<_> = population
            .iter()
            .map(|i| CheckpointMember {
                id: i.id,
                born: i.born,
                fitness: i.fitness,
                body_genome: &i.body_genome,
                brain_genotype: i.brain_genotype.as_slice(),
            })
            .collect();
        let path = self.dir.join(format!("gen{generation:04}.json"));
        let body = serde_json::to_vec(&members).expect("checkpoint serializes");
        if let Err(e) = fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e)).and_then(|_| write_file(&path, &body)) {
            self.error = Some(e);
        }
    }
}

/// Runs one evolution and writes its run directory. Returns `Ok(None)` when
/// `dir` already holds a completed run.
///
/// `checkpoint_every = 0` disables population snapshots.
pub fn run_to_dir(config: &EvolutionConfig, dir: &Path, checkpoint_every: usize) -> Result<Option<RunSummary>> {
    config.validate()?;
    if is_complete(dir) {
        return Ok(None);
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let config_text = toml::to_string(config).map_err(|e| Error::Config(e.to_string()))?;
    write_file(&dir.join(CONFIG_FILE), config_text.as_bytes())?;

    let evaluator = SimEvaluator::new(config.task.clone(), config.surrogate);
    let log = if checkpoint_every > 0 {
        let mut cp = Checkpointer {
            dir: dir.join("checkpoints"),
            every: checkpoint_every,
            error: None,
        };
        let log = evolve(config, &evaluator, &mut cp)?;
        if let Some(e) = cp.error {
            return Err(e);
        }
        log
    } else {
        evolve(config, &evaluator, &mut NoObserver)?
    };
    log.save(dir)?;

    let best = log.best();
    write_file(&dir.join(BEST_BODY_FILE), best.body.to_json().as_bytes())?;
    write_file(&dir.join(BEST_BRAIN_FILE), best.learned_brain.to_text().as_bytes())?;
    evaluator
        .trajectory(&best.body, &best.learned_brain)?
        .save_csv(&dir.join(BEST_TRAJECTORY_FILE))?;

    let summary = RunSummary {
        seed: config.seed,
        task: config.task.name().to_string(),
        brain_mode: config.brain_mode,
        inheritance: config.inheritance,
        evaluations: log.evaluations,
        assessments: log.assessments,
        best_id: best.id,
        best_fitness: best.fitness,
    };
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write_file(&dir.join(SUMMARY_FILE), json.as_bytes())?;
    write_file(&dir.join(COMPLETE_MARKER), b"")?;
    Ok(Some(summary))
}

/// Reads the best individual's body and learned brain back from a run.
pub fn load_best(dir: &Path) -> Result<(BodyPhenotype, BrainGenotype)> {
    let body_path = dir.join(BEST_BODY_FILE);
    let brain_path = dir.join(BEST_BRAIN_FILE);
    let body_text = fs::read_to_string(&body_path).map_err(|e| Error::io(&body_path, e))?;
    let brain_text = fs::read_to_string(&brain_path).map_err(|e| Error::io(&brain_path, e))?;
    let body = BodyPhenotype::from_json(&body_text).map_err(|e| Error::parse(&body_path, e.to_string()))?;
    let brain = BrainGenotype::from_text(&brain_text).map_err(|e| Error::parse(&brain_path, e.to_string()))?;
    Ok((body, brain))
}

pub fn read_generations(path: &Path) -> Result<Vec<GenerationRecord>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
    reader
        .deserialize()
        .collect::<std::result::Result<Vec<GenerationRecord>, _>>()
        .map_err(|e| Error::parse(path, e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentGrid {
    pub tasks: Vec<Task>,
    pub brain_modes: Vec<BrainMode>,
    pub inheritances: Vec<Inheritance>,
    pub repetitions: usize,
    pub base_seed: u64,
    pub output_dir: PathBuf,
    /// Population snapshot interval in generations; 0 disables snapshots.
    pub checkpoint_every: usize,
    /// Template for every run; its task, modes and seed are overridden.
    pub evolution: EvolutionConfig,
}

impl Default for ExperimentGrid {
    fn default() -> Self {
        ExperimentGrid {
            tasks: vec![Task::default(), Task::Rotation(Default::default())],
            brain_modes: vec![BrainMode::Asexual, BrainMode::Sexual],
            inheritances: vec![Inheritance::Darwinian, Inheritance::Lamarckian],
            repetitions: 10,
            base_seed: 0,
            output_dir: PathBuf::from("runs"),
            checkpoint_every: 0,
            evolution: EvolutionConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub index: usize,
    pub task: Task,
    pub brain_mode: BrainMode,
    pub inheritance: Inheritance,
}

impl Cell {
    pub fn name(&self) -> String {
        format!("{}-{}-{}", self.task.name(), self.brain_mode.name(), self.inheritance.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannedRun {
    pub cell: Cell,
    pub repetition: usize,
    pub config: EvolutionConfig,
    pub dir: PathBuf,
}

impl ExperimentGrid {
    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let grid: ExperimentGrid = toml::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be >= 1".into()));
        }
        if self.tasks.is_empty() || self.brain_modes.is_empty() || self.inheritances.is_empty() {
            return Err(Error::Config("tasks, brain_modes and inheritances must be non-empty".into()));
        }
        for run in self.plan() {
            run.config.validate()?;
        }
        Ok(())
    }

    /// Cells in task, brain mode, inheritance order.
    pub fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        for task in &self.tasks {
            for &brain_mode in &self.brain_modes {
                for &inheritance in &self.inheritances {
                    cells.push(Cell {
                        index: cells.len(),
                        task: task.clone(),
                        brain_mode,
                        inheritance,
                    });
                }
            }
        }
        cells
    }

    pub fn run_seed(&self, cell: usize, repetition: usize) -> u64 {
        self.base_seed + (cell * self.repetitions + repetition) as u64
    }

    pub fn plan(&self) -> Vec<PlannedRun> {
        let mut runs = Vec::new();
        for cell in self.cells() {
            for repetition in 0..self.repetitions {
                let config = EvolutionConfig {
                    task: cell.task.clone(),
                    brain_mode: cell.brain_mode,
                    inheritance: cell.inheritance,
                    seed: self.run_seed(cell.index, repetition),
                    ..self.evolution.clone()
                };
                let dir = self.output_dir.join(cell.name()).join(format!("rep{repetition:02}"));
                runs.push(PlannedRun {
                    cell: cell.clone(),
                    repetition,
                    config,
                    dir,
                });
            }
        }
        runs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub generation: usize,
    pub runs: usize,
    pub mean_of_mean: f64,
    pub ci_of_mean: f64,
    pub mean_of_max: f64,
    pub ci_of_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub cell: String,
    pub task: String,
    pub brain_mode: BrainMode,
    pub inheritance: Inheritance,
    pub repetition: usize,
    pub seed: u64,
    pub final_max_fitness: f64,
    pub final_mean_fitness: f64,
}

/// Mean and `1.96 * SE` half-width. A single value has zero width.
pub fn mean_ci(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, 1.96 * (var / n).sqrt())
}

/// Per-generation statistics across repetitions. Runs are truncated to the
/// shortest one.
pub fn aggregate(runs: &[Vec<GenerationRecord>]) -> Vec<AggregateRow> {
    let generations = runs.iter().map(Vec::len).min().unwrap_or(0);
    (0..generations)
        .map(|g| {
            let means: Vec<f64> = runs.iter().map(|r| r[g].mean_fitness).collect();
            let maxes: Vec<f64> = runs.iter().map(|r| r[g].max_fitness).collect();
            let (mean_of_mean, ci_of_mean) = mean_ci(&means);
            let (mean_of_max, ci_of_max) = mean_ci(&maxes);
            AggregateRow {
                generation: runs[0][g].generation,
                runs: runs.len(),
                mean_of_mean,
                ci_of_mean,
                mean_of_max,
                ci_of_max,
            }
        })
        .collect()
}

pub fn read_aggregate(path: &Path) -> Result<Vec<AggregateRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
    reader
        .deserialize()
        .collect::<std::result::Result<Vec<AggregateRow>, _>>()
        .map_err(|e| Error::parse(path, e.to_string()))
}

pub fn read_run_rows(path: &Path) -> Result<Vec<RunRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
    reader
        .deserialize()
        .collect::<std::result::Result<Vec<RunRow>, _>>()
        .map_err(|e| Error::parse(path, e.to_string()))
}

#[derive(Debug, Clone)]
pub struct GridReport {
    pub executed: usize,
    pub skipped: usize,
    pub rows: Vec<RunRow>,
}

/// Runs every planned run not yet complete, then writes per-cell aggregates
/// and `runs.csv` into the output directory.
pub fn run_grid(grid: &ExperimentGrid) -> Result<GridReport> {
    grid.validate()?;
    fs::create_dir_all(&grid.output_dir).map_err(|e| Error::io(&grid.output_dir, e))?;
    let plan = grid.plan();
    let outcomes: Vec<Option<RunSummary>> = plan
        .par_iter()
        .map(|run| run_to_dir(&run.config, &run.dir, grid.checkpoint_every))
        .collect::<Result<_>>()?;
    let executed = outcomes.iter().filter(|o| o.is_some()).count();

    let mut per_cell: BTreeMap<usize, Vec<Vec<GenerationRecord>>> = BTreeMap::new();
    let mut rows = Vec::new();
    for run in &plan {
        let gens = read_generations(&run.dir.join(GENERATIONS_CSV))?;
        let last = gens
            .last()
            .ok_or_else(|| Error::parse(run.dir.join(GENERATIONS_CSV), "no generations"))?;
        rows.push(RunRow {
            cell: run.cell.name(),
            task: run.cell.task.name().to_string(),
            brain_mode: run.cell.brain_mode,
            inheritance: run.cell.inheritance,
            repetition: run.repetition,
            seed: run.config.seed,
            final_max_fitness: last.max_fitness,
            final_mean_fitness: last.mean_fitness,
        });
        per_cell.entry(run.cell.index).or_default().push(gens);
    }
    for cell in grid.cells() {
        let dir = grid.output_dir.join(cell.name());
        let path = dir.join(AGGREGATE_CSV);
        let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        write_rows(file, &aggregate(&per_cell[&cell.index]))?;
    }
    let path = grid.output_dir.join(GRID_SUMMARY_CSV);
    let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    write_rows(file, &rows)?;
    Ok(GridReport {
        executed,
        skipped: plan.len() - executed,
        rows,
    })
}
