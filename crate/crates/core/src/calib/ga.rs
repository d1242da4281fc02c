//! Real-coded genetic algorithm over a box: uniform initialization, k-way
//! tournament selection, blend (BLX-alpha) crossover, per-gene Gaussian
//! mutation, elitism, offspring clipped to the bounds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::CalibrationError;
use crate::scalar::{convert, Real};

/// GA tuning knobs (probabilities and fractions are scalar-type independent).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaOptions {
    pub population: usize,
    pub generations: usize,
    pub seed: u64,
    pub crossover_probability: f64,
    /// Per-gene mutation probability.
    pub mutation_probability: f64,
    /// Mutation standard deviation as a fraction of each gene's range.
    pub mutation_sigma_fraction: f64,
    /// Blend-crossover expansion factor.
    pub blx_alpha: f64,
    /// Tournament size.
    pub tournament: usize,
    /// Individuals copied unchanged into the next generation.
    pub elites: usize,
}

impl Default for GaOptions {
    fn default() -> Self {
        GaOptions {
            population: 100,
            generations: 200,
            seed: 0,
            crossover_probability: 0.9,
            mutation_probability: 0.1,
            mutation_sigma_fraction: 0.02,
            blx_alpha: 0.5,
            tournament: 3,
            elites: 2,
        }
    }
}

/// Result of a stochastic solve (GA or PSO).
#[derive(Debug, Clone)]
pub struct StochasticOutcome<T> {
    /// Best point ever evaluated.
    pub z: Vec<T>,
    pub cost: T,
    /// Generations / iterations executed.
    pub iterations: usize,
    pub evaluations: usize,
    /// Best-ever cost after each generation; non-increasing.
    pub best_history: Vec<T>,
}

fn evaluate_all<T, F>(objective: &F, pop: &[Vec<T>]) -> Result<Vec<T>, CalibrationError>
where
    T: Real,
    F: Fn(&[T]) -> Result<T, CalibrationError> + Sync,
{
    pop.par_iter().map(|z| objective(z)).collect()
}

/// Minimize `objective` over the box `[lower, upper]`. `seed_point`, when
/// given, replaces the first member of the initial population so the result
/// can never be worse than the starting calibration. Deterministic for a
/// fixed seed.
pub fn ga_minimize<T, F>(
    objective: &F,
    lower: &[T],
    upper: &[T],
    seed_point: Option<&[T]>,
    opts: &GaOptions,
) -> Result<StochasticOutcome<T>, CalibrationError>
where
    T: Real,
    F: Fn(&[T]) -> Result<T, CalibrationError> + Sync,
{
    let n = lower.len();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let std_normal = Normal::new(0.0f64, 1.0).expect("unit normal");
    let pop_size = opts.population.max(2);

    let uniform_in = |rng: &mut ChaCha8Rng, j: usize| -> T {
        let u: f64 = rng.gen_range(0.0..1.0);
        lower[j] + (upper[j] - lower[j]) * convert(u)
    };

    let mut population: Vec<Vec<T>> = (0..pop_size)
        .map(|i| {
            if i == 0 {
                if let Some(s) = seed_point {
                    return s.to_vec();
                }
            }
            (0..n).map(|j| uniform_in(&mut rng, j)).collect()
        })
        .collect();
    let mut costs = evaluate_all(objective, &population)?;
    let mut evaluations = pop_size;

    let mut best_idx = (0..pop_size)
        .min_by(|&a, &b| costs[a].partial_cmp(&costs[b]).unwrap())
        .unwrap();
    let mut best = population[best_idx].clone();
    let mut best_cost = costs[best_idx];
    let mut best_history = Vec::with_capacity(opts.generations);

    for _ in 0..opts.generations {
        // rank current generation for elitism
        let mut order: Vec<usize> = (0..pop_size).collect();
        order.sort_by(|&a, &b| costs[a].partial_cmp(&costs[b]).unwrap());

        let tournament = |rng: &mut ChaCha8Rng| -> usize {
            let mut winner = rng.gen_range(0..pop_size);
            for _ in 1..opts.tournament.max(1) {
                let challenger = rng.gen_range(0..pop_size);
                if costs[challenger] < costs[winner] {
                    winner = challenger;
                }
            }
            winner
        };

        let mut next: Vec<Vec<T>> = order
            .iter()
            .take(opts.elites.min(pop_size))
            .map(|&i| population[i].clone())
            .collect();
        while next.len() < pop_size {
            let pa = tournament(&mut rng);
            let pb = tournament(&mut rng);
            let mut child: Vec<T> = if rng.gen_bool(opts.crossover_probability) {
                (0..n)
                    .map(|j| {
                        let (a, b) = (population[pa][j], population[pb][j]);
                        let (lo, hi) = (a.min(b), a.max(b));
                        let d = (hi - lo) * convert(opts.blx_alpha);
                        let u: f64 = rng.gen_range(0.0..1.0);
                        lo - d + (hi + d - (lo - d)) * convert(u)
                    })
                    .collect()
            } else {
                population[pa].clone()
            };
            for j in 0..n {
                if rng.gen_bool(opts.mutation_probability) {
                    let sigma = (upper[j] - lower[j]) * convert(opts.mutation_sigma_fraction);
                    child[j] += sigma * convert(std_normal.sample(&mut rng));
                }
                child[j] = child[j].max(lower[j]).min(upper[j]);
            }
            next.push(child);
        }

        population = next;
        costs = evaluate_all(objective, &population)?;
        evaluations += pop_size;

        best_idx = (0..pop_size)
            .min_by(|&a, &b| costs[a].partial_cmp(&costs[b]).unwrap())
            .unwrap();
        if costs[best_idx] < best_cost {
            best_cost = costs[best_idx];
            best = population[best_idx].clone();
        }
        best_history.push(best_cost);
    }

    Ok(StochasticOutcome {
        z: best,
        cost: best_cost,
        iterations: opts.generations,
        evaluations,
        best_history,
    })
}
