//! Levenberg-Marquardt over a black-box residual function with forward
//! finite-difference Jacobians and box-bound projection.

use nalgebra::{Cholesky, DMatrix, DVector};
use rayon::prelude::*;

use super::{CalibrationError, SolveStatus};
use crate::scalar::{convert, Real};

/// LM tuning knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions<T> {
    pub max_iterations: usize,
    /// Initial damping factor.
    pub initial_damping: T,
    /// Damping multiplier on an accepted step.
    pub damping_decrease: T,
    /// Damping multiplier on a rejected step.
    pub damping_increase: T,
    /// Stop when an accepted step reduces the cost by less than this fraction.
    pub cost_tolerance: T,
    /// Stop when the gradient infinity norm falls below this.
    pub gradient_tolerance: T,
    /// Forward-difference step as a fraction of each parameter's magnitude.
    pub fd_relative_step: T,
    /// Damping retries when the normal matrix is singular.
    pub singular_retries: usize,
}

impl<T: Real> Default for LmOptions<T> {
    fn default() -> Self {
        LmOptions {
            max_iterations: 60,
            initial_damping: convert(1e-3),
            damping_decrease: convert(0.5),
            damping_increase: convert(2.0),
            cost_tolerance: convert(1e-12),
            gradient_tolerance: convert(1e-12),
            fd_relative_step: convert(1e-6),
            singular_retries: 10,
        }
    }
}

/// Solve outcome.
#[derive(Debug, Clone)]
pub struct LmOutcome<T> {
    pub z: Vec<T>,
    /// Squared residual norm at `z`.
    pub cost: T,
    pub iterations: usize,
    pub evaluations: usize,
    pub status: SolveStatus,
    /// Damping at exit.
    pub damping: T,
}

fn squared_norm<T: Real>(r: &[T]) -> T {
    r.iter().fold(T::zero(), |a, v| a + *v * *v)
}

fn fd_step<T: Real>(z: T, rel: T) -> T {
    let scale = z.abs().max(convert(1e-3));
    scale * rel
}

/// Forward-difference Jacobian accumulated into the normal matrix `J^T J` and
/// gradient `J^T r`; columns evaluated in parallel.
fn normal_equations<T, F>(
    residual: &F,
    z: &[T],
    r0: &[T],
    rel_step: T,
) -> Result<(DMatrix<T>, DVector<T>, usize), CalibrationError>
where
    T: Real,
    F: Fn(&[T]) -> Result<Vec<T>, CalibrationError> + Sync,
{
    let n = z.len();
    let cols: Vec<Vec<T>> = (0..n)
        .into_par_iter()
        .map(|j| -> Result<Vec<T>, CalibrationError> {
            let h = fd_step(z[j], rel_step);
            let mut zj = z.to_vec();
            zj[j] += h;
            let rj = residual(&zj)?;
            Ok(rj
                .iter()
                .zip(r0)
                .map(|(a, b)| (*a - *b) / h)
                .collect())
        })
        .collect::<Result<_, _>>()?;
    let mut jtj = DMatrix::<T>::zeros(n, n);
    let mut jtr = DVector::<T>::zeros(n);
    for i in 0..n {
        for j in i..n {
            let mut acc = T::zero();
            for k in 0..r0.len() {
                acc += cols[i][k] * cols[j][k];
            }
            jtj[(i, j)] = acc;
            jtj[(j, i)] = acc;
        }
        let mut acc = T::zero();
        for k in 0..r0.len() {
            acc += cols[i][k] * r0[k];
        }
        jtr[i] = acc;
    }
    Ok((jtj, jtr, n))
}

/// Solve `(J^T J + damping * diag(J^T J)) step = -J^T r`, raising the damping
/// on singularity.
fn damped_solve<T: Real>(
    jtj: &DMatrix<T>,
    jtr: &DVector<T>,
    damping: &mut T,
    retries: usize,
) -> Result<DVector<T>, CalibrationError> {
    for _ in 0..=retries {
        let mut m = jtj.clone();
        for i in 0..m.nrows() {
            let d = jtj[(i, i)];
            // keep the damping meaningful even for a zero diagonal entry
            let floor: T = convert(1e-30);
            m[(i, i)] = d + *damping * d.max(floor);
        }
        if let Some(chol) = Cholesky::new(m) {
            return Ok(chol.solve(&(-jtr)));
        }
        *damping *= convert::<T>(10.0);
    }
    Err(CalibrationError::SingularNormalMatrix { retries })
}

fn project<T: Real>(z: &mut [T], bounds: Option<(&[T], &[T])>) {
    if let Some((lo, hi)) = bounds {
        for j in 0..z.len() {
            z[j] = z[j].max(lo[j]).min(hi[j]);
        }
    }
}

/// One LM step: build the normal equations at `z`, solve with the given
/// damping, project onto the bounds, and accept or reject by cost. Returns
/// the next iterate (unchanged on rejection) and the updated damping.
pub fn lm_step_generic<T, F>(
    residual: &F,
    z: &[T],
    damping: T,
    bounds: Option<(&[T], &[T])>,
    opts: &LmOptions<T>,
) -> Result<(Vec<T>, T), CalibrationError>
where
    T: Real,
    F: Fn(&[T]) -> Result<Vec<T>, CalibrationError> + Sync,
{
    let r0 = residual(z)?;
    let cost = squared_norm(&r0);
    let (jtj, jtr, _) = normal_equations(residual, z, &r0, opts.fd_relative_step)?;
    let mut damping = damping;
    let step = damped_solve(&jtj, &jtr, &mut damping, opts.singular_retries)?;
    let mut candidate = z.to_vec();
    for j in 0..candidate.len() {
        candidate[j] += step[j];
    }
    project(&mut candidate, bounds);
    let cost_next = squared_norm(&residual(&candidate)?);
    if cost_next < cost {
        Ok((candidate, damping * opts.damping_decrease))
    } else {
        Ok((z.to_vec(), damping * opts.damping_increase))
    }
}

/// Minimize the squared norm of `residual` from `z0`, iterates projected onto
/// the bounds.
pub fn lm_minimize<T, F>(
    residual: &F,
    z0: &[T],
    bounds: Option<(&[T], &[T])>,
    opts: &LmOptions<T>,
) -> Result<LmOutcome<T>, CalibrationError>
where
    T: Real,
    F: Fn(&[T]) -> Result<Vec<T>, CalibrationError> + Sync,
{
    let n = z0.len();
    let mut z = z0.to_vec();
    project(&mut z, bounds);
    let mut r = residual(&z)?;
    let mut cost = squared_norm(&r);
    let mut damping = opts.initial_damping;
    let mut evaluations = 1usize;
    let mut status = SolveStatus::MaxIterations;
    let mut iterations = 0usize;

    for iter in 0..opts.max_iterations {
        iterations = iter;
        let (jtj, jtr, _) = normal_equations(residual, &z, &r, opts.fd_relative_step)?;
        evaluations += n;
        if jtr.amax() <= opts.gradient_tolerance * (T::one() + cost) {
            status = SolveStatus::Converged;
            break;
        }
        // retry with stiffer damping until a step is accepted or damping blows up
        let mut accepted = false;
        loop {
            let step = damped_solve(&jtj, &jtr, &mut damping, opts.singular_retries)?;
            let mut candidate = z.clone();
            for j in 0..n {
                candidate[j] += step[j];
            }
            project(&mut candidate, bounds);
            let r_next = residual(&candidate)?;
            evaluations += 1;
            let cost_next = squared_norm(&r_next);
            if cost_next < cost {
                let improvement = (cost - cost_next) / cost.max(convert(1e-300));
                z = candidate;
                r = r_next;
                cost = cost_next;
                damping *= opts.damping_decrease;
                accepted = true;
                if improvement <= opts.cost_tolerance {
                    status = SolveStatus::Converged;
                }
                break;
            }
            damping *= opts.damping_increase;
            if damping > convert(1e14) {
                // no descent left at any damping: treat as converged
                status = SolveStatus::Converged;
                break;
            }
        }
        if status == SolveStatus::Converged {
            break;
        }
        if !accepted {
            break;
        }
    }

    Ok(LmOutcome {
        z,
        cost,
        iterations,
        evaluations,
        status,
        damping,
    })
}
