//! Self-checks behind the CLI's `verify` verb.
//!
//! Each check recomputes a known value or property from first principles and
//! compares it with the library. Checks 8 and 10 run real (small) evolutions
//! and take minutes on one core; the others finish in about a second.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_4, PI};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::brain::{joint_gene_row, neighbour_column, BrainGenotype, CpgNetwork, GENE_COLS, GENE_ROWS, INITIAL_STATE};
use crate::error::Result;
use crate::evolution::{
    evolve, BrainMode, EvolutionConfig, EvolutionObserver, Individual, Inheritance, Offspring, GENERATIONS_CSV, LEARNING_CSV,
    MEMBERS_CSV,
};
use crate::experiment::{read_generations, run_grid, run_to_dir, ExperimentGrid, AGGREGATE_CSV};
use crate::learner::{revde_mutate_triplet, revde_optimize, LearnerConfig};
use crate::morphology::BodyPhenotype;
use crate::plot::plot_grid;
use crate::sim::{Pose, Sample, Trajectory};
use crate::tasks::{fitness_point_navigation, fitness_rotation, PointNavTask, SimEvaluator, Task};

#[derive(Debug, Clone)]
pub struct Check {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{verdict}] {:>2}. {}: {}", self.id, self.name, self.detail)
    }
}

fn check(id: u8, name: &'static str, result: Result<(bool, String)>) -> Check {
    let (passed, detail) = result.unwrap_or_else(|e| (false, format!("error: {e}")));
    Check { id, name, passed, detail }
}

/// Desk-scale evolution settings shared by the slow checks.
pub fn desk_config(task: Task, seed: u64) -> EvolutionConfig {
    EvolutionConfig {
        population_size: 10,
        offspring_per_gen: 5,
        generations: 10,
        task,
        seed,
        ..Default::default()
    }
}

fn samples(points: &[[f64; 2]], yaw: impl Fn(usize) -> f64) -> Trajectory {
    Trajectory {
        samples: points
            .iter()
            .enumerate()
            .map(|(i, &p)| Sample { t: i as f64 * 0.2, pose: Pose::new(p, yaw(i)) })
            .collect(),
        sample_rate: 5.0,
    }
}

pub fn worked_fitness_example() -> Check {
    check(1, "worked point-navigation example", (|| {
        let mut pts = Vec::new();
        for (a, b) in [([0.0, 0.0], [1.0, -1.0]), ([1.0, -1.0], [0.0, -2.0])] {
            for s in 0..20 {
                let f = s as f64 / 20.0;
                pts.push([a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])]);
            }
        }
        pts.extend([[0.0, -2.0]; 5]);
        let f = fitness_point_navigation(&samples(&pts, |_| 0.0), &PointNavTask::default())?;
        Ok(((f - 2.54).abs() <= 0.01, format!("fitness {f:.4} (target 2.54 +- 0.01)")))
    })())
}

pub fn revde_hand_check() -> Check {
    check(2, "RevDE triplet hand-check and inversion", (|| {
        let [v1, v2, v3] = revde_mutate_triplet(&[1.0], &[0.0], &[0.0], 0.5)?;
        let exact = (v1[0], v2[0], v3[0]) == (1.0, -0.5, 0.75);
        // The map is linear in (wi, wj, wk); build its 3x3 matrix from unit
        // vectors and invert it with Gaussian elimination.
        let f = 0.5;
        let mut m = [[0.0; 3]; 3];
        for (c, unit) in [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]].iter().enumerate() {
            let out = revde_mutate_triplet(&[unit[0]], &[unit[1]], &[unit[2]], f)?;
            for r in 0..3 {
                m[r][c] = out[r][0];
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let w: [f64; 3] = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
            let v = revde_mutate_triplet(&[w[0]], &[w[1]], &[w[2]], f)?;
            let back = solve3(m, [v[0][0], v[1][0], v[2][0]]);
            for k in 0..3 {
                worst = worst.max((back[k] - w[k]).abs());
            }
        }
        Ok((exact && worst <= 1e-12, format!("(v1,v2,v3) = ({}, {}, {}), inversion error {worst:.1e}", v1[0], v2[0], v3[0])))
    })())
}

#[allow(clippy::needless_range_loop)]
fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> [f64; 3] {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).expect("rows");
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..3 {
            let factor = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let tail: f64 = (row + 1..3).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    x
}

pub fn budget_arithmetic() -> Check {
    check(3, "evaluation and assessment budgets", (|| {
        let config = EvolutionConfig::default();
        let stub = |body: &BodyPhenotype, brain: &BrainGenotype| Ok(body.len() as f64 + brain.as_slice()[0]);
        let log = evolve(&config, &stub, &mut crate::evolution::NoObserver)?;
        let per_individual = log.assessments as f64 / log.evaluations as f64;
        let ok = log.evaluations == 775 && log.assessments == 775 * 280;
        Ok((ok, format!("{} evaluations, {per_individual} assessments per individual", log.evaluations)))
    })())
}

pub fn oscillator_fidelity() -> Check {
    check(4, "single oscillator tracks sin(t + pi/4)", (|| {
        let mut net = CpgNetwork::single(1.0);
        let dt = 0.001;
        let steps = (2.0 * PI / dt).ceil() as usize;
        let (mut err, mut drift): (f64, f64) = (0.0, 0.0);
        let e0 = 2.0 * INITIAL_STATE * INITIAL_STATE;
        for k in 1..=steps {
            net.advance(dt, 1)?;
            let (x, y) = net.state();
            err = err.max((x[0] - (k as f64 * dt + FRAC_PI_4).sin()).abs());
            drift = drift.max(((x[0] * x[0] + y[0] * y[0]) - e0).abs() / e0);
        }
        Ok((err < 2e-3 && drift < 0.01, format!("max |x - sin| = {err:.2e}, max energy drift {:.3}%", drift * 100.0)))
    })())
}

pub fn genotype_map_oracle() -> Check {
    check(5, "genotype map agrees with brute-force enumeration", {
        let mut next = 0;
        let mut mismatches = 0;
        for x in -10..=10 {
            for y in -10..=10 {
                if (x, y) == (0, 0) {
                    if joint_gene_row((0, 0)).is_ok() {
                        mismatches += 1;
                    }
                    continue;
                }
                if joint_gene_row((x, y)).ok() != Some(next) {
                    mismatches += 1;
                }
                next += 1;
            }
        }
        let mut ball: Vec<(i32, i32)> = Vec::new();
        for dx in -2i32..=2 {
            for dy in -2i32..=2 {
                if dx.abs() + dy.abs() <= 2 {
                    ball.push((dx, dy));
                }
            }
        }
        let mut col = 1;
        for &o in &ball {
            if o == (0, 0) {
                if neighbour_column(o, false).ok() != Some(0) || neighbour_column(o, true).ok() != Some(GENE_COLS - 1) {
                    mismatches += 1;
                }
                continue;
            }
            if neighbour_column(o, false).ok() != Some(col) {
                mismatches += 1;
            }
            col += 1;
        }
        for o in [(3, 0), (2, 1), (-1, -2), (0, 3)] {
            if neighbour_column(o, false).is_ok() {
                mismatches += 1;
            }
        }
        let ok = mismatches == 0 && next == GENE_ROWS && ball.len() == 13 && col == GENE_COLS - 1;
        Ok((ok, format!("{} cells, ball size {}, {mismatches} mismatches", next, ball.len())))
    })
}

pub fn rotation_oracle() -> Check {
    check(6, "rotation fitness on synthetic spins", (|| {
        let mut worst: f64 = 0.0;
        for k in 1..=4 {
            for sign in [1.0, -1.0] {
                let total = sign * 2.0 * PI * k as f64;
                let traj = samples(&[[0.0, 0.0]; 151], |i| total * i as f64 / 150.0);
                worst = worst.max((fitness_rotation(&traj)? - total).abs());
            }
        }
        Ok((worst < 1e-6, format!("max error {worst:.1e} over +-2pi k, k = 1..4")))
    })())
}

/// Asserts the inheritance and reproduction contracts while a run executes.
#[derive(Default)]
pub struct ContractObserver {
    pub brain_mode: Option<BrainMode>,
    pub inheritance: Option<Inheritance>,
    /// Inheritable genotype of every individual at creation.
    pub born_with: HashMap<u64, BrainGenotype>,
    pub violations: Vec<String>,
    pub births: usize,
    pub evaluated: usize,
    pub learning_changed: usize,
}

impl ContractObserver {
    pub fn new(brain_mode: BrainMode, inheritance: Inheritance) -> Self {
        ContractObserver {
            brain_mode: Some(brain_mode),
            inheritance: Some(inheritance),
            ..Default::default()
        }
    }

    fn expect_inheritable(&mut self, who: &Individual, when: &str) {
        let expected = match self.inheritance {
            Some(Inheritance::Lamarckian) => &who.learned_brain,
            _ => &self.born_with[&who.id],
        };
        if &who.brain_genotype != expected {
            self.violations.push(format!("{when}: individual {} has an unexpected inheritable brain", who.id));
        }
    }
}

impl EvolutionObserver for ContractObserver {
    fn on_birth(&mut self, _generation: usize, id: u64, parents: Option<(&Individual, &Individual)>, offspring: &Offspring) {
        self.births += 1;
        self.born_with.insert(id, offspring.brain_genotype.clone());
        let Some((a, b)) = parents else { return };
        self.expect_inheritable(a, "parent");
        self.expect_inheritable(b, "parent");
        match self.brain_mode {
            Some(BrainMode::Asexual) => {
                let fitter = if b.fitness > a.fitness { b } else { a };
                if offspring.brain_parents != [fitter.id] || offspring.brain_base != fitter.brain_genotype {
                    self.violations.push(format!("asexual child {id} does not copy its fitter parent's brain"));
                }
            }
            Some(BrainMode::Sexual) => {
                let mixed = offspring
                    .brain_base
                    .as_slice()
                    .iter()
                    .zip(a.brain_genotype.as_slice().iter().zip(b.brain_genotype.as_slice()))
                    .all(|(g, (x, y))| g == x || g == y);
                if !mixed || offspring.brain_parents != [a.id, b.id] {
                    self.violations.push(format!("sexual child {id} is not a gene-wise mix of its parents"));
                }
            }
            None => {}
        }
    }

    fn on_evaluated(&mut self, individual: &Individual, inherited: &BrainGenotype) {
        self.evaluated += 1;
        if inherited != &self.born_with[&individual.id] {
            self.violations.push(format!("learner of {} did not start from the created genotype", individual.id));
        }
        if &individual.learned_brain != inherited {
            self.learning_changed += 1;
        }
        self.expect_inheritable(individual, "after learning");
    }

    fn on_generation(&mut self, _generation: usize, population: &[Individual]) {
        for who in population {
            self.expect_inheritable(who, "survivor");
        }
    }
}

pub fn mode_contracts() -> Check {
    check(7, "Darwinian/Lamarckian and asexual/sexual contracts", (|| {
        let mut notes = Vec::new();
        let mut ok = true;
        let mut first_generation: Option<Vec<BrainGenotype>> = None;
        for brain_mode in [BrainMode::Asexual, BrainMode::Sexual] {
            for inheritance in [Inheritance::Darwinian, Inheritance::Lamarckian] {
                let config = EvolutionConfig {
                    population_size: 8,
                    offspring_per_gen: 4,
                    generations: 5,
                    brain_mode,
                    inheritance,
                    seed: 7,
                    learner: LearnerConfig { mu: 4, generations: 3, ..Default::default() },
                    ..Default::default()
                };
                let evaluator = SimEvaluator::new(Task::Rotation(Default::default()), config.surrogate);
                let mut obs = ContractObserver::new(brain_mode, inheritance);
                evolve(&config, &evaluator, &mut obs)?;
                let gen0: Vec<BrainGenotype> = (0..8).map(|id| obs.born_with[&id].clone()).collect();
                match &first_generation {
                    None => first_generation = Some(gen0),
                    Some(g) if g != &gen0 => {
                        ok = false;
                        notes.push("generation 0 differs between modes".to_string());
                    }
                    Some(_) => {}
                }
                ok &= obs.violations.is_empty() && obs.births == 24 && obs.learning_changed > 0;
                notes.push(format!(
                    "{}/{}: {} violations, {}/{} learned brains differ from inherited",
                    brain_mode.name(),
                    inheritance.name(),
                    obs.violations.len(),
                    obs.learning_changed,
                    obs.evaluated
                ));
            }
        }
        Ok((ok, notes.join("; ")))
    })())
}

pub fn determinism(scratch: &Path) -> Check {
    check(8, "identical seeds give byte-identical logs", (|| {
        let config = desk_config(Task::default(), 42);
        let (a, b) = (scratch.join("determinism-a"), scratch.join("determinism-b"));
        run_to_dir(&config, &a, 0)?;
        run_to_dir(&config, &b, 0)?;
        let mut same = true;
        for f in [GENERATIONS_CSV, MEMBERS_CSV, LEARNING_CSV, crate::experiment::BEST_TRAJECTORY_FILE] {
            let read = |d: &Path| std::fs::read(d.join(f)).map_err(|e| crate::Error::io(d.join(f), e));
            same &= read(&a)? == read(&b)?;
        }
        Ok((same, format!("compared 4 files from two seed-42 desk runs: {}", if same { "identical" } else { "differ" })))
    })())
}

pub fn learner_sanity() -> Check {
    check(9, "RevDE improves a quadratic in >= 95/100 runs", (|| {
        let config = LearnerConfig::default();
        let mut improved = 0;
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let target: Vec<f64> = (0..10).map(|_| rng.random_range(-2.0..2.0)).collect();
            let start: Vec<f64> = (0..10).map(|_| rng.random_range(-2.0..2.0)).collect();
            let objective = |g: &[f64]| Ok(-g.iter().zip(&target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>());
            let out = revde_optimize(&start, objective, &config, &mut rng)?;
            if out.best_performance > out.history[0].best {
                improved += 1;
            }
        }
        Ok((improved >= 95, format!("{improved}/100 runs improved")))
    })())
}

pub fn desk_grid(scratch: &Path) -> Check {
    check(10, "desk-scale grid completes with four non-decreasing curves per task", (|| {
        let start = std::time::Instant::now();
        let grid = ExperimentGrid {
            repetitions: 3,
            base_seed: 100,
            output_dir: scratch.join("desk-grid"),
            evolution: desk_config(Task::default(), 0),
            ..Default::default()
        };
        let report = run_grid(&grid)?;
        plot_grid(&grid.output_dir)?;
        let mut ok = report.rows.len() == 24;
        for run in grid.plan() {
            let gens = read_generations(&run.dir.join(GENERATIONS_CSV))?;
            ok &= gens.len() == 10 && gens.windows(2).all(|w| w[1].max_fitness >= w[0].max_fitness);
        }
        for cell in grid.cells() {
            ok &= grid.output_dir.join(cell.name()).join(AGGREGATE_CSV).is_file();
        }
        for task in ["point_navigation", "rotation"] {
            let svg = std::fs::read_to_string(grid.output_dir.join(format!("{task}_fitness_mean.svg")))
                .map_err(|e| crate::Error::io(&grid.output_dir, e))?;
            ok &= svg.matches(r#"class="series""#).count() == 4;
        }
        let elapsed = start.elapsed().as_secs_f64();
        ok &= elapsed < 1800.0;
        Ok((ok, format!("{} runs in {elapsed:.0} s", report.rows.len())))
    })())
}

/// Runs checks 1-9, and the desk grid as well when `full` is set. Slow checks
/// write into `scratch`.
pub fn run_all(scratch: &Path, full: bool) -> Vec<Check> {
    let mut checks = vec![
        worked_fitness_example(),
        revde_hand_check(),
        budget_arithmetic(),
        oscillator_fidelity(),
        genotype_map_oracle(),
        rotation_oracle(),
        mode_contracts(),
        determinism(scratch),
        learner_sanity(),
    ];
    if full {
        checks.push(desk_grid(scratch));
    }
    checks
}
