//! Box-constrained minimization by a logarithmic barrier: minimize
//! `f(z) - mu * sum_j [ln(z_j - lb_j) + ln(ub_j - z_j)]` with quasi-Newton
//! (BFGS) inner iterations and a backtracking line search, shrinking `mu`
//! geometrically. Every iterate stays strictly inside the box.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{CalibrationError, SolveStatus};
use crate::scalar::{convert, Real};

/// Interior-point tuning knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IpOptions<T> {
    /// Initial barrier weight; `None` scales it from the initial cost.
    pub mu_initial: Option<T>,
    /// Barrier shrink factor per outer iteration.
    pub mu_shrink: T,
    /// Outer loop stops once `mu` falls below this.
    pub mu_min: T,
    /// Inner quasi-Newton iteration cap per barrier stage.
    pub inner_max_iterations: usize,
    /// Inner stop tolerance on the barrier gradient infinity norm.
    pub gradient_tolerance: T,
    /// Central-difference step as a fraction of each parameter's magnitude.
    pub fd_relative_step: T,
    /// Armijo sufficient-decrease constant.
    pub armijo: T,
    /// Line-search backtracking factor.
    pub backtrack: T,
    /// Maximum backtracking halvings per line search.
    pub max_backtracks: usize,
    /// Fraction of the distance to the nearest bound a step may take.
    pub boundary_fraction: T,
}

impl<T: Real> Default for IpOptions<T> {
    fn default() -> Self {
        IpOptions {
            mu_initial: None,
            mu_shrink: convert(0.2),
            mu_min: convert(1e-9),
            inner_max_iterations: 60,
            gradient_tolerance: convert(1e-9),
            fd_relative_step: convert(1e-6),
            armijo: convert(1e-4),
            backtrack: convert(0.5),
            max_backtracks: 50,
            boundary_fraction: convert(0.995),
        }
    }
}

/// Solve outcome, including the accepted iterate history (all strictly
/// interior).
#[derive(Debug, Clone)]
pub struct IpOutcome<T> {
    pub z: Vec<T>,
    /// Objective value (without the barrier term) at `z`.
    pub cost: T,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub evaluations: usize,
    pub status: SolveStatus,
    /// Every accepted iterate, in order.
    pub iterates: Vec<Vec<T>>,
    /// Line searches that ran out of backtracks.
    pub line_search_failures: usize,
}

struct Barrier<'a, T> {
    lower: &'a [T],
    upper: &'a [T],
    mu: T,
}

impl<T: Real> Barrier<'_, T> {
    fn value(&self, z: &[T]) -> Option<T> {
        let mut b = T::zero();
        for j in 0..z.len() {
            let dl = z[j] - self.lower[j];
            let du = self.upper[j] - z[j];
            if dl <= T::zero() || du <= T::zero() {
                return None;
            }
            b -= self.mu * (dl.ln() + du.ln());
        }
        Some(b)
    }

    fn gradient(&self, z: &[T], g: &mut [T]) {
        for j in 0..z.len() {
            g[j] -= self.mu * (T::one() / (z[j] - self.lower[j]) - T::one() / (self.upper[j] - z[j]));
        }
    }
}

/// Central-difference gradient of the objective, columns in parallel.
fn objective_gradient<T, F>(
    objective: &F,
    z: &[T],
    rel_step: T,
) -> Result<(Vec<T>, usize), CalibrationError>
where
    T: Real,
    F: Fn(&[T]) -> Result<T, CalibrationError> + Sync,
{
    let n = z.len();
    let g: Vec<T> = (0..n)
        .into_par_iter()
        .map(|j| -> Result<T, CalibrationError> {
            let h = z[j].abs().max(convert(1e-3)) * rel_step;
            let mut zp = z.to_vec();
            zp[j] += h;
            let mut zm = z.to_vec();
            zm[j] -= h;
            Ok((objective(&zp)? - objective(&zm)?) / (h + h))
        })
        .collect::<Result<_, _>>()?;
    Ok((g, 2 * n))
}

/// Largest step along `d` keeping `z` strictly interior.
fn max_feasible_step<T: Real>(z: &[T], d: &[T], lower: &[T], upper: &[T], fraction: T) -> T {
    let mut alpha = T::one() / fraction; // so the default cap is exactly 1 after scaling
    for j in 0..z.len() {
        if d[j] > T::zero() {
            alpha = alpha.min((upper[j] - z[j]) / d[j]);
        } else if d[j] < T::zero() {
            alpha = alpha.min((lower[j] - z[j]) / d[j]);
        }
    }
    fraction * alpha
}

/// Minimize `objective` over the box `[lower, upper]` from the strictly
/// interior start `z0`.
pub fn interior_point_minimize<T, F>(
    objective: &F,
    z0: &[T],
    lower: &[T],
    upper: &[T],
    opts: &IpOptions<T>,
) -> Result<IpOutcome<T>, CalibrationError>
where
    T: Real,
    F: Fn(&[T]) -> Result<T, CalibrationError> + Sync,
{
    let n = z0.len();
    let mut z = z0.to_vec();
    // nudge a start on the boundary inward; the barrier needs strict interiority
    for j in 0..n {
        let margin = (upper[j] - lower[j]) * convert(1e-9);
        z[j] = z[j].max(lower[j] + margin).min(upper[j] - margin);
    }

    let mut evaluations = 1usize;
    let f0 = objective(&z)?;
    let mut mu = opts.mu_initial.unwrap_or_else(|| {
        (T::one() + f0) * convert::<T>(1e-2) / convert::<T>(2.0 * n as f64)
    });

    let mut iterates: Vec<Vec<T>> = vec![z.clone()];
    let mut outer = 0usize;
    let mut inner_total = 0usize;
    let mut line_search_failures = 0usize;
    let mut last_stage_exhausted = false;

    while mu >= opts.mu_min {
        outer += 1;
        let barrier = Barrier { lower, upper, mu };
        let mut h_inv = DMatrix::<T>::identity(n, n);
        let (mut grad, ev) = {
            let (mut g, ev) = objective_gradient(objective, &z, opts.fd_relative_step)?;
            barrier.gradient(&z, &mut g);
            (DVector::from_vec(g), ev)
        };
        evaluations += ev;
        let mut phi = objective(&z)? + barrier.value(&z).expect("iterate interior");
        evaluations += 1;

        last_stage_exhausted = true;
        for _ in 0..opts.inner_max_iterations {
            if grad.amax() <= opts.gradient_tolerance.max(mu) {
                last_stage_exhausted = false;
                break;
            }
            inner_total += 1;
            let mut dir = -(&h_inv * &grad);
            let mut slope = dir.dot(&grad);
            if slope >= T::zero() {
                // lost positive-definiteness; restart from steepest descent
                h_inv = DMatrix::identity(n, n);
                dir = -grad.clone();
                slope = dir.dot(&grad);
            }
            let dir_slice: Vec<T> = dir.iter().copied().collect();
            let alpha_max =
                max_feasible_step(&z, &dir_slice, lower, upper, opts.boundary_fraction);
            let mut alpha = alpha_max.min(T::one());
            let mut accepted = false;
            for _ in 0..opts.max_backtracks {
                let mut cand = z.clone();
                for j in 0..n {
                    cand[j] += alpha * dir_slice[j];
                }
                if let Some(b) = barrier.value(&cand) {
                    let f = objective(&cand)?;
                    evaluations += 1;
                    let phi_cand = f + b;
                    if phi_cand <= phi + opts.armijo * alpha * slope {
                        // BFGS update on the accepted move
                        let (g_new_raw, ev) =
                            objective_gradient(objective, &cand, opts.fd_relative_step)?;
                        evaluations += ev;
                        let mut g_new = g_new_raw;
                        barrier.gradient(&cand, &mut g_new);
                        let g_new = DVector::from_vec(g_new);
                        let s = DVector::from_iterator(n, (0..n).map(|j| cand[j] - z[j]));
                        let y = &g_new - &grad;
                        let sy = s.dot(&y);
                        if sy > convert::<T>(1e-14) * s.norm() * y.norm() {
                            let rho = T::one() / sy;
                            let i = DMatrix::<T>::identity(n, n);
                            let left = &i - &s * y.transpose() * rho;
                            let right = &i - &y * s.transpose() * rho;
                            h_inv = &left * &h_inv * &right + &s * s.transpose() * rho;
                        }
                        z = cand;
                        phi = phi_cand;
                        grad = g_new;
                        iterates.push(z.clone());
                        accepted = true;
                        break;
                    }
                }
                alpha *= opts.backtrack;
            }
            if !accepted {
                line_search_failures += 1;
                // the line search cannot make progress at this barrier weight
                last_stage_exhausted = false;
                break;
            }
        }
        mu *= opts.mu_shrink;
    }
    let status = if last_stage_exhausted {
        SolveStatus::MaxIterations
    } else {
        SolveStatus::Converged
    };

    let cost = objective(&z)?;
    evaluations += 1;
    Ok(IpOutcome {
        z,
        cost,
        outer_iterations: outer,
        inner_iterations: inner_total,
        evaluations,
        status,
        iterates,
        line_search_failures,
    })
}
