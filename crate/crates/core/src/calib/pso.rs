//! Particle swarm optimization over a box: global-best topology, constriction
//! coefficients, per-dimension velocity clamping, positions clipped to the
//! bounds with the velocity zeroed at the face.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::ga::StochasticOutcome;
use super::CalibrationError;
use crate::scalar::{convert, Real};

/// PSO tuning knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsoOptions {
    pub particles: usize,
    pub iterations: usize,
    pub seed: u64,
    /// Inertia weight.
    pub inertia: f64,
    /// Attraction toward each particle's own best.
    pub cognitive: f64,
    /// Attraction toward the swarm best.
    pub social: f64,
    /// Per-dimension velocity clamp as a fraction of the range.
    pub velocity_clamp_fraction: f64,
}

impl Default for PsoOptions {
    fn default() -> Self {
        PsoOptions {
            particles: 200,
            iterations: 300,
            seed: 0,
            inertia: 0.729,
            cognitive: 1.49445,
            social: 1.49445,
            velocity_clamp_fraction: 0.2,
        }
    }
}

/// Minimize `objective` over the box `[lower, upper]`. `seed_point`, when
/// given, replaces the first particle. Deterministic for a fixed seed.
pub fn pso_minimize<T, F>(
    objective: &F,
    lower: &[T],
    upper: &[T],
    seed_point: Option<&[T]>,
    opts: &PsoOptions,
) -> Result<StochasticOutcome<T>, CalibrationError>
where
    T: Real,
    F: Fn(&[T]) -> Result<T, CalibrationError> + Sync,
{
    let n = lower.len();
    let count = opts.particles.max(2);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let vmax: Vec<T> = (0..n)
        .map(|j| (upper[j] - lower[j]) * convert(opts.velocity_clamp_fraction))
        .collect();

    let mut positions: Vec<Vec<T>> = (0..count)
        .map(|i| {
            if i == 0 {
                if let Some(s) = seed_point {
                    return s.to_vec();
                }
            }
            (0..n)
                .map(|j| {
                    let u: f64 = rng.gen_range(0.0..1.0);
                    lower[j] + (upper[j] - lower[j]) * convert(u)
                })
                .collect()
        })
        .collect();
    let mut velocities: Vec<Vec<T>> = vec![vec![T::zero(); n]; count];

    let mut costs: Vec<T> = positions
        .par_iter()
        .map(|z| objective(z))
        .collect::<Result<_, _>>()?;
    let mut evaluations = count;

    let mut personal_best = positions.clone();
    let mut personal_best_cost = costs.clone();
    let mut gbest_idx = (0..count)
        .min_by(|&a, &b| costs[a].partial_cmp(&costs[b]).unwrap())
        .unwrap();
    let mut global_best = positions[gbest_idx].clone();
    let mut global_best_cost = costs[gbest_idx];
    let mut best_history = Vec::with_capacity(opts.iterations);

    let (w, c1, c2): (T, T, T) = (
        convert(opts.inertia),
        convert(opts.cognitive),
        convert(opts.social),
    );

    for _ in 0..opts.iterations {
        for i in 0..count {
            for j in 0..n {
                let r1: T = convert(rng.gen_range(0.0f64..1.0));
                let r2: T = convert(rng.gen_range(0.0f64..1.0));
                let mut v = w * velocities[i][j]
                    + c1 * r1 * (personal_best[i][j] - positions[i][j])
                    + c2 * r2 * (global_best[j] - positions[i][j]);
                v = v.max(-vmax[j]).min(vmax[j]);
                let mut x = positions[i][j] + v;
                if x < lower[j] {
                    x = lower[j];
                    v = T::zero();
                } else if x > upper[j] {
                    x = upper[j];
                    v = T::zero();
                }
                velocities[i][j] = v;
                positions[i][j] = x;
            }
        }
        costs = positions
            .par_iter()
            .map(|z| objective(z))
            .collect::<Result<_, _>>()?;
        evaluations += count;
        for i in 0..count {
            if costs[i] < personal_best_cost[i] {
                personal_best_cost[i] = costs[i];
                personal_best[i] = positions[i].clone();
            }
        }
        gbest_idx = (0..count)
            .min_by(|&a, &b| {
                personal_best_cost[a]
                    .partial_cmp(&personal_best_cost[b])
                    .unwrap()
            })
            .unwrap();
        if personal_best_cost[gbest_idx] < global_best_cost {
            global_best_cost = personal_best_cost[gbest_idx];
            global_best = personal_best[gbest_idx].clone();
        }
        best_history.push(global_best_cost);
    }

    Ok(StochasticOutcome {
        z: global_best,
        cost: global_best_cost,
        iterations: opts.iterations,
        evaluations,
        best_history,
    })
}
