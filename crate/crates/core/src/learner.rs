//! Lifetime learning with reversible differential evolution (RevDE).
//!
//! Each generation draws `mu` random triplets from the population. Every
//! triplet yields three mutants through the invertible map
//!
//! ```text
//! v1 = wi + F (wj - wk)
//! v2 = wj + F (wk - v1)
//! v3 = wk + F (v1 - v2)
//! ```
//!
//! which are then crossed over coordinate-wise against `wi`, `wj`, `wk`
//! respectively. The `mu` best of incumbents and candidates survive.
//!
//! "Generations" counts the initial population as the first one, so a
//! learner with `mu = 10` and 10 generations spends `10 + 9 * 30 = 280`
//! assessments.

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::brain::{used_genes, BrainGenotype, GENE_COLS};
use crate::morphology::BodyPhenotype;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerConfig {
    /// Population size.
    pub mu: usize,
    pub generations: usize,
    /// Differential scale `F`.
    pub scale_factor: f64,
    /// Crossover probability `CR`.
    pub crossover_rate: f64,
    /// Standard deviation of the noise used to seed samples `2..mu`.
    pub init_sigma: f64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            mu: 10,
            generations: 10,
            scale_factor: 0.5,
            crossover_rate: 0.9,
            init_sigma: 0.5,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mu < 4 {
            return Err(Error::Config(format!("learner mu must be >= 4, got {}", self.mu)));
        }
        if !(self.scale_factor > 0.0 && self.scale_factor.is_finite()) {
            return Err(Error::Config(format!("learner F must be > 0, got {}", self.scale_factor)));
        }
        if !(0.0..=1.0).contains(&self.crossover_rate) {
            return Err(Error::Config(format!("learner CR must be in [0,1], got {}", self.crossover_rate)));
        }
        if !(self.init_sigma >= 0.0 && self.init_sigma.is_finite()) {
            return Err(Error::Config(format!("learner init_sigma must be >= 0, got {}", self.init_sigma)));
        }
        Ok(())
    }

    /// Assessments spent by one learning run: `mu + 3 mu (generations - 1)`.
    pub fn assessment_budget(&self) -> usize {
        self.mu + 3 * self.mu * self.generations.saturating_sub(1)
    }
}

pub fn revde_mutate_triplet(wi: &[f64], wj: &[f64], wk: &[f64], f: f64) -> Result<[Vec<f64>; 3]> {
    if wi.len() != wj.len() || wi.len() != wk.len() {
        return Err(Error::invalid(format!(
            "triplet dimensions differ: {}, {}, {}",
            wi.len(),
            wj.len(),
            wk.len()
        )));
    }
    let v1: Vec<f64> = (0..wi.len()).map(|d| wi[d] + f * (wj[d] - wk[d])).collect();
    let v2: Vec<f64> = (0..wi.len()).map(|d| wj[d] + f * (wk[d] - v1[d])).collect();
    let v3: Vec<f64> = (0..wi.len()).map(|d| wk[d] + f * (v1[d] - v2[d])).collect();
    Ok([v1, v2, v3])
}

/// Binomial crossover: each coordinate comes from `mutant` with probability
/// `cr`, otherwise from `target`.
pub fn revde_crossover<R: Rng + ?Sized>(target: &[f64], mutant: &[f64], cr: f64, rng: &mut R) -> Vec<f64> {
    assert_eq!(target.len(), mutant.len(), "crossover dimensions differ");
    target
        .iter()
        .zip(mutant)
        .map(|(&t, &m)| if rng.random_bool(cr) { m } else { t })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnerGenerationRecord {
    pub generation: usize,
    pub best: f64,
    pub mean: f64,
    /// Cumulative assessments at the end of this generation.
    pub assessments: usize,
}

#[derive(Debug, Clone)]
pub struct RevdeOutcome {
    pub best: Vec<f64>,
    pub best_performance: f64,
    pub assessments_used: usize,
    pub history: Vec<LearnerGenerationRecord>,
}

/// Maximizes `objective` starting from `start`.
///
/// Candidate assessments within a generation run in parallel; results are
/// collected in candidate order so the outcome only depends on `rng`.
pub fn revde_optimize<R, F>(start: &[f64], objective: F, config: &LearnerConfig, rng: &mut R) -> Result<RevdeOutcome>
where
    R: Rng + ?Sized,
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    revde_optimize_with(start, || (), |_, p| objective(p), config, rng)
}

/// `revde_optimize` with a per-worker scratch value built by `init`.
fn revde_optimize_with<R, S, I, F>(
    start: &[f64],
    init: I,
    objective: F,
    config: &LearnerConfig,
    rng: &mut R,
) -> Result<RevdeOutcome>
where
    R: Rng + ?Sized,
    I: Fn() -> S + Sync + Send,
    F: Fn(&mut S, &[f64]) -> Result<f64> + Sync,
{
    config.validate()?;
    let assess_all = |points: &[Vec<f64>]| -> Result<Vec<f64>> {
        points
            .par_iter()
            .map_init(&init, |scratch, p| {
                let v = objective(scratch, p)?;
                if v.is_nan() {
                    Err(Error::Numeric("assessment returned NaN".into()))
                } else {
                    Ok(v)
                }
            })
            .collect()
    };

    let noise = Normal::new(0.0, config.init_sigma).expect("validated sigma");
    let mut population = Vec::with_capacity(config.mu);
    population.push(start.to_vec());
    for _ in 1..config.mu {
        population.push(start.iter().map(|&w| w + noise.sample(rng)).collect());
    }
    let mut performance = assess_all(&population)?;
    let mut assessments = population.len();

    let first_best = argmax(&performance);
    let mut best = population[first_best].clone();
    let mut best_performance = performance[first_best];
    let mut history = vec![record(0, &performance, assessments)];

    for generation in 1..config.generations {
        let mut candidates = Vec::with_capacity(3 * config.mu);
        for _ in 0..config.mu {
            let picks = index::sample(rng, config.mu, 3);
            let (i, j, k) = (picks.index(0), picks.index(1), picks.index(2));
            let mutants = revde_mutate_triplet(&population[i], &population[j], &population[k], config.scale_factor)?;
            for (target, mutant) in [i, j, k].into_iter().zip(&mutants) {
                candidates.push(revde_crossover(&population[target], mutant, config.crossover_rate, rng));
            }
        }
        let candidate_perf = assess_all(&candidates)?;
        assessments += candidates.len();

        for (c, &p) in candidate_perf.iter().enumerate() {
            if p > best_performance {
                best_performance = p;
                best = candidates[c].clone();
            }
        }

        // Incumbents precede candidates so the stable sort keeps them on ties.
        let mut pool: Vec<(Vec<f64>, f64)> = population
            .into_iter()
            .zip(performance)
            .chain(candidates.into_iter().zip(candidate_perf))
            .collect();
        pool.sort_by(|a, b| b.1.total_cmp(&a.1));
        pool.truncate(config.mu);
        (population, performance) = pool.into_iter().unzip();

        history.push(record(generation, &performance, assessments));
    }

    Ok(RevdeOutcome {
        best,
        best_performance,
        assessments_used: assessments,
        history,
    })
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

fn record(generation: usize, performance: &[f64], assessments: usize) -> LearnerGenerationRecord {
    LearnerGenerationRecord {
        generation,
        best: performance.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean: performance.iter().sum::<f64>() / performance.len() as f64,
        assessments,
    }
}

#[derive(Debug, Clone)]
pub struct LearningOutcome {
    pub best: BrainGenotype,
    pub best_performance: f64,
    pub assessments_used: usize,
    pub history: Vec<LearnerGenerationRecord>,
}

/// Optimizes the genes `body` reads, with the body fixed. `assess` scores one
/// candidate brain; the inherited genotype is only read, and the returned
/// best keeps its unused genes.
pub fn learn_brain<R, F>(
    body: &BodyPhenotype,
    inherited: &BrainGenotype,
    assess: F,
    config: &LearnerConfig,
    rng: &mut R,
) -> Result<LearningOutcome>
where
    R: Rng + ?Sized,
    F: Fn(&BrainGenotype) -> Result<f64> + Sync,
{
    let genes = used_genes(body);
    let with_genes = |target: &mut BrainGenotype, values: &[f64]| {
        for (&g, &v) in genes.iter().zip(values) {
            target.set(g / GENE_COLS, g % GENE_COLS, v);
        }
    };
    let start: Vec<f64> = genes.iter().map(|&g| inherited.as_slice()[g]).collect();
    let outcome = revde_optimize_with(
        &start,
        || inherited.clone(),
        |scratch, values| {
            with_genes(scratch, values);
            assess(scratch)
        },
        config,
        rng,
    )?;
    let mut best = inherited.clone();
    with_genes(&mut best, &outcome.best);
    Ok(LearningOutcome {
        best,
        best_performance: outcome.best_performance,
        assessments_used: outcome.assessments_used,
        history: outcome.history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use crate::morphology::fixtures::plus_body;
    use std::sync::atomic::{AtomicUsize, Ordering};

    #[test]
    fn triplet_hand_values() {
        let [v1, v2, v3] = revde_mutate_triplet(&[1.0], &[0.0], &[0.0], 0.5).unwrap();
        assert_eq!((v1[0], v2[0], v3[0]), (1.0, -0.5, 0.75));
        let w = [0.3, -1.2, 4.0];
        let out = revde_mutate_triplet(&w, &w, &w, 1.7).unwrap();
        assert!(out.iter().all(|v| v == &w));
        assert!(revde_mutate_triplet(&[1.0], &[1.0, 2.0], &[0.0], 0.5).is_err());
    }

    #[test]
    fn triplet_map_is_invertible() {
        // Undo the three lines in reverse order.
        let f = 0.5;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let wi: Vec<f64> = (0..8).map(|_| rng.random_range(-3.0..3.0)).collect();
        let wj: Vec<f64> = (0..8).map(|_| rng.random_range(-3.0..3.0)).collect();
        let wk: Vec<f64> = (0..8).map(|_| rng.random_range(-3.0..3.0)).collect();
        let [v1, v2, v3] = revde_mutate_triplet(&wi, &wj, &wk, f).unwrap();
        for d in 0..8 {
            let k = v3[d] - f * (v1[d] - v2[d]);
            let j = v2[d] - f * (k - v1[d]);
            let i = v1[d] - f * (j - k);
            assert!((i - wi[d]).abs() < 1e-12 && (j - wj[d]).abs() < 1e-12 && (k - wk[d]).abs() < 1e-12);
        }
    }

    #[test]
    fn crossover_limits_and_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let target = vec![0.0; 6160];
        let mutant = vec![1.0; 6160];
        assert_eq!(revde_crossover(&target, &mutant, 1.0, &mut rng), mutant);
        assert_eq!(revde_crossover(&target, &mutant, 0.0, &mut rng), target);
        let mixed = revde_crossover(&target, &mutant, 0.9, &mut rng);
        let frac = mixed.iter().sum::<f64>() / 6160.0;
        assert!((0.87..=0.93).contains(&frac), "{frac}");
    }

    #[test]
    fn budget_matches_closed_form() {
        assert_eq!(LearnerConfig::default().assessment_budget(), 280);
        for (mu, gens) in [(4, 1), (4, 3), (7, 5), (10, 0), (10, 10)] {
            let config = LearnerConfig { mu, generations: gens, ..Default::default() };
            let calls = AtomicUsize::new(0);
            let out = revde_optimize(
                &[0.0; 5],
                |w| {
                    calls.fetch_add(1, Ordering::Relaxed);
                    Ok(-w.iter().map(|x| x * x).sum::<f64>())
                },
                &config,
                &mut ChaCha8Rng::seed_from_u64(3),
            )
            .unwrap();
            assert_eq!(out.assessments_used, config.assessment_budget());
            assert_eq!(calls.load(Ordering::Relaxed), config.assessment_budget());
        }
    }

    #[test]
    fn zero_generations_picks_best_initial_sample() {
        let config = LearnerConfig { generations: 0, ..Default::default() };
        let out = revde_optimize(&[0.0; 3], |w| Ok(w[0]), &config, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(out.assessments_used, 10);
        assert_eq!(out.history.len(), 1);
        assert_eq!(out.best_performance, out.history[0].best);
        assert_eq!(out.best[0], out.best_performance);
    }

    #[test]
    fn best_so_far_is_monotone() {
        let config = LearnerConfig { generations: 15, ..Default::default() };
        let target = [1.0, -2.0, 0.5, 3.0];
        let out = revde_optimize(
            &[0.0; 4],
            |w| Ok(-w.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum::<f64>()),
            &config,
            &mut ChaCha8Rng::seed_from_u64(9),
        )
        .unwrap();
        for pair in out.history.windows(2) {
            assert!(pair[1].best >= pair[0].best);
        }
        assert_eq!(out.best_performance, out.history.last().unwrap().best);
    }

    #[test]
    fn ties_keep_incumbents() {
        // Constant objective: every candidate ties, so the population never changes
        // and the verbatim start stays the best (first) sample.
        let config = LearnerConfig { generations: 4, ..Default::default() };
        let start = [0.25, 0.5];
        let out = revde_optimize(&start, |_| Ok(1.0), &config, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(out.best, start.to_vec());
    }

    #[test]
    fn inherited_genotype_is_untouched() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let inherited = BrainGenotype::random(&mut rng, 1.0);
        let copy = inherited.clone();
        let body = plus_body();
        let gene = used_genes(&body)[0];
        let config = LearnerConfig { mu: 4, generations: 3, ..Default::default() };
        let out = learn_brain(&body, &inherited, |g| Ok(g.as_slice()[gene]), &config, &mut rng).unwrap();
        assert_eq!(inherited, copy);
        assert_eq!(out.assessments_used, 4 + 12 * 2);
        assert!(out.best_performance >= inherited.as_slice()[gene]);
        assert_eq!(out.best.as_slice()[gene], out.best_performance);
    }

    #[test]
    fn unused_genes_are_never_touched() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let inherited = BrainGenotype::random(&mut rng, 1.0);
        let body = plus_body();
        let used = used_genes(&body);
        let unused_sum = |g: &BrainGenotype| -> f64 {
            g.as_slice().iter().enumerate().filter(|(k, _)| used.binary_search(k).is_err()).map(|(_, v)| v).sum()
        };
        let reference = unused_sum(&inherited);
        let config = LearnerConfig { mu: 4, generations: 3, ..Default::default() };
        let out = learn_brain(
            &body,
            &inherited,
            |g| {
                assert_eq!(unused_sum(g), reference);
                Ok(g.as_slice()[used[0]])
            },
            &config,
            &mut rng,
        )
        .unwrap();
        assert_eq!(unused_sum(&out.best), reference);
        assert!(used.len() >= 4 && used.len() < inherited.as_slice().len());
    }

    #[test]
    fn evaluator_errors_propagate() {
        let config = LearnerConfig::default();
        let err = revde_optimize(&[0.0], |_| Err(Error::Numeric("boom".into())), &config, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(err.is_err());
        let nan = revde_optimize(&[0.0], |_| Ok(f64::NAN), &config, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(nan.is_err());
    }

    #[test]
    fn config_validation() {
        assert!(LearnerConfig { mu: 3, ..Default::default() }.validate().is_err());
        assert!(LearnerConfig { scale_factor: 0.0, ..Default::default() }.validate().is_err());
        assert!(LearnerConfig { crossover_rate: 1.5, ..Default::default() }.validate().is_err());
        assert!(LearnerConfig::default().validate().is_ok());
    }
}
