//! Bounded nonlinear least-squares calibration of the twelve kinematic
//! parameters: find the parameter vector minimizing the summed squared pose
//! error between model-integrated odometry and ground truth over a dataset of
//! recordings, with four optimizer backends (Levenberg-Marquardt, log-barrier
//! interior point, real-coded genetic algorithm, particle swarm).

mod ga;
mod interior_point;
mod lm;
mod pso;

pub use ga::{ga_minimize, GaOptions};
pub use interior_point::{interior_point_minimize, IpOptions, IpOutcome};
pub use lm::{lm_minimize, lm_step_generic, LmOptions, LmOutcome};
pub use pso::{pso_minimize, PsoOptions};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::kinematics::{FrameKinematics, KinematicParams, KinematicsError, Pose2, WHEEL_COUNT};
use crate::odometry::{step_cached, OdometryError, OdometryState};
use crate::scalar::{angle_diff, convert, Real};
use crate::sim::{
    make_calibration_dataset_with, Dataset, DisturbanceConfig, Recording, SimError,
};
use crate::trajectory::{TrajectoryKind, TrajectorySpec};

/// Dimension of the calibration parameter vector.
pub const PARAM_DIM: usize = 12;

/// Errors from cost evaluation and the optimizers.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CalibrationError {
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    Odometry(#[from] OdometryError),
    #[error(transparent)]
    Sim(#[from] SimError),
    /// Cost evaluated at a physically invalid parameter vector.
    #[error("cost evaluation failed at z = {z:?}: {source}")]
    CostEvaluation {
        /// The offending parameter vector.
        z: Vec<f64>,
        source: KinematicsError,
    },
    /// Starting point violates the bounds.
    #[error("initial point component {index} outside bounds")]
    StartOutOfBounds { index: usize },
    /// Bounds are not elementwise increasing.
    #[error("bounds must satisfy lower < upper elementwise")]
    InvalidBounds,
    /// The damped normal matrix stayed singular through all retries.
    #[error("normal matrix singular after {retries} damping retries")]
    SingularNormalMatrix { retries: usize },
    /// Dataset has no recordings or a recording has no frames.
    #[error("dataset contains no usable recordings")]
    EmptyDataset,
    /// A per-kind cost weight is negative or non-finite.
    #[error("kind weights must be non-negative and finite")]
    InvalidWeights,
}

/// The 12-entry calibration vector, ordered
/// `(x_w1..x_w4, y_w1..y_w4, r_1..r_4)`, SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamVector<T>(pub [T; PARAM_DIM]);

impl<T: Real> ParamVector<T> {
    pub fn nominal() -> Self {
        Self::from_params(&KinematicParams::nominal())
    }

    pub fn from_params(p: &KinematicParams<T>) -> Self {
        let mut z = [T::zero(); PARAM_DIM];
        z[..WHEEL_COUNT].copy_from_slice(&p.wheel_x);
        z[WHEEL_COUNT..2 * WHEEL_COUNT].copy_from_slice(&p.wheel_y);
        z[2 * WHEEL_COUNT..].copy_from_slice(&p.wheel_radius);
        ParamVector(z)
    }

    pub fn to_params(&self) -> KinematicParams<T> {
        let z = &self.0;
        KinematicParams {
            wheel_x: [z[0], z[1], z[2], z[3]],
            wheel_y: [z[4], z[5], z[6], z[7]],
            wheel_radius: [z[8], z[9], z[10], z[11]],
        }
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn from_slice(s: &[T]) -> Self {
        let mut z = [T::zero(); PARAM_DIM];
        z.copy_from_slice(s);
        ParamVector(z)
    }

    /// Largest elementwise relative deviation from `other`.
    pub fn max_relative_deviation(&self, other: &ParamVector<T>) -> T {
        let mut worst = T::zero();
        for j in 0..PARAM_DIM {
            let denom = other.0[j].abs().max(convert(1e-12));
            worst = worst.max((self.0[j] - other.0[j]).abs() / denom);
        }
        worst
    }
}

/// Elementwise box bounds on the parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds<T> {
    pub lower: [T; PARAM_DIM],
    pub upper: [T; PARAM_DIM],
}

impl<T: Real> Bounds<T> {
    /// Symmetric relative bounds around a center: each component may vary by
    /// `fraction` of its magnitude. Negative entries bound correctly because
    /// lower/upper take the min/max of the two scaled values.
    pub fn around(center: &ParamVector<T>, fraction: T) -> Self {
        let mut lower = [T::zero(); PARAM_DIM];
        let mut upper = [T::zero(); PARAM_DIM];
        for j in 0..PARAM_DIM {
            let a = center.0[j] * (T::one() - fraction);
            let b = center.0[j] * (T::one() + fraction);
            lower[j] = a.min(b);
            upper[j] = a.max(b);
        }
        Bounds { lower, upper }
    }

    /// The default calibration bounds: nominal parameters plus/minus 5%.
    pub fn five_percent_of_nominal() -> Self {
        Self::around(&ParamVector::nominal(), convert(0.05))
    }

    pub fn validate(&self) -> Result<(), CalibrationError> {
        if (0..PARAM_DIM).any(|j| !(self.lower[j] < self.upper[j])) {
            return Err(CalibrationError::InvalidBounds);
        }
        Ok(())
    }

    pub fn contains(&self, z: &ParamVector<T>) -> bool {
        (0..PARAM_DIM).all(|j| z.0[j] >= self.lower[j] && z.0[j] <= self.upper[j])
    }

    pub fn contains_strictly(&self, z: &ParamVector<T>) -> bool {
        (0..PARAM_DIM).all(|j| z.0[j] > self.lower[j] && z.0[j] < self.upper[j])
    }

    pub fn clamp(&self, z: &mut [T]) {
        for j in 0..z.len() {
            z[j] = z[j].max(self.lower[j]).min(self.upper[j]);
        }
    }
}

/// Per-trajectory-kind weights on the cost; all-equal by default. Weighting
/// lets a user trade the joint fit against one motion family (the all-equal
/// joint fit is what can leave a single kind slightly worse off).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KindWeights(pub [f64; 6]);

impl Default for KindWeights {
    fn default() -> Self {
        KindWeights([1.0; 6])
    }
}

impl KindWeights {
    pub fn get(&self, kind: TrajectoryKind) -> f64 {
        let idx = TrajectoryKind::ALL
            .iter()
            .position(|k| *k == kind)
            .expect("canonical kind");
        self.0[idx]
    }

    pub fn set(&mut self, kind: TrajectoryKind, weight: f64) {
        let idx = TrajectoryKind::ALL
            .iter()
            .position(|k| *k == kind)
            .expect("canonical kind");
        self.0[idx] = weight;
    }

    pub fn validate(&self) -> Result<(), CalibrationError> {
        if self.0.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(CalibrationError::InvalidWeights);
        }
        Ok(())
    }
}

/// One recording preprocessed for repeated model evaluation: per-frame trig
/// cached, truth laid out flat. Building this once makes a full cost
/// evaluation two orders of magnitude cheaper than re-deriving it per call.
struct PreparedRecording<T> {
    frames: Vec<FrameKinematics<T>>,
    dt: Vec<T>,
    truth: Vec<Pose2<T>>,
    t0: T,
    kind: TrajectoryKind,
    /// Cost weight of this recording's kind.
    weight: T,
    /// sqrt(weight), applied to residual entries.
    sqrt_weight: T,
}

impl<T: Real> PreparedRecording<T> {
    fn new(rec: &Recording<T>, weight: f64) -> Result<Self, CalibrationError> {
        if rec.frames.is_empty() || rec.truth.len() != rec.frames.len() {
            return Err(CalibrationError::EmptyDataset);
        }
        for (i, pair) in rec.frames.windows(2).enumerate() {
            if !(pair[1].t > pair[0].t) {
                return Err(OdometryError::NonMonotoneTime { index: i + 1 }.into());
            }
        }
        Ok(PreparedRecording {
            frames: rec.frames.iter().map(FrameKinematics::from_frame).collect(),
            dt: rec.frames.windows(2).map(|w| w[1].t - w[0].t).collect(),
            truth: rec.truth.clone(),
            t0: rec.frames[0].t,
            kind: rec.meta.kind,
            weight: convert(weight),
            sqrt_weight: convert(weight.sqrt()),
        })
    }

    /// Integrate under `params` from the recording's own true start pose,
    /// visiting `(estimate, truth)` pairs for every step after the anchor.
    fn visit_errors(&self, params: &KinematicParams<T>, mut f: impl FnMut(T, T, T)) {
        let mut state = OdometryState::new(self.truth[0], self.t0);
        for (k, dt) in self.dt.iter().enumerate() {
            state = step_cached(params, &state, &self.frames[k], *dt);
            let tru = self.truth[k + 1];
            f(
                state.pose.x - tru.x,
                state.pose.y - tru.y,
                angle_diff(state.pose.theta, tru.theta),
            );
        }
    }

    fn cost(&self, params: &KinematicParams<T>) -> T {
        let mut c = T::zero();
        self.visit_errors(params, |ex, ey, eth| {
            c += ex * ex + ey * ey + eth * eth;
        });
        c * self.weight
    }
}

/// A dataset preprocessed for repeated cost evaluation; the objective the
/// optimizers minimize.
pub struct CostContext<T> {
    recordings: Vec<PreparedRecording<T>>,
}

impl<T: Real> CostContext<T> {
    pub fn new(dataset: &Dataset<T>) -> Result<Self, CalibrationError> {
        Self::with_weights(dataset, &KindWeights::default())
    }

    /// Cost context with per-trajectory-kind weights.
    pub fn with_weights(
        dataset: &Dataset<T>,
        weights: &KindWeights,
    ) -> Result<Self, CalibrationError> {
        weights.validate()?;
        if dataset.is_empty() {
            return Err(CalibrationError::EmptyDataset);
        }
        let recordings = dataset
            .recordings
            .iter()
            .map(|r| PreparedRecording::new(r, weights.get(r.meta.kind)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(CostContext { recordings })
    }

    fn checked_params(&self, z: &ParamVector<T>) -> Result<KinematicParams<T>, CalibrationError> {
        let params = z.to_params();
        params.validate().map_err(|source| {
            CalibrationError::CostEvaluation {
                z: z.0.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect(),
                source,
            }
        })?;
        Ok(params)
    }

    /// Summed squared pose error of the model under `z` against ground truth,
    /// every recording re-integrated from its own true start pose. Heading
    /// errors are wrapped before squaring.
    pub fn cost(&self, z: &ParamVector<T>) -> Result<T, CalibrationError> {
        let params = self.checked_params(z)?;
        // parallel across recordings, reduced in index order so the result is
        // independent of scheduling
        let per: Vec<T> = self
            .recordings
            .par_iter()
            .map(|r| r.cost(&params))
            .collect();
        Ok(per.into_iter().fold(T::zero(), |a, b| a + b))
    }

    /// Stacked per-step residual vector `(e_x, e_y, e_theta)` over all
    /// recordings and steps; `cost` equals its squared norm.
    pub fn residuals(&self, z: &ParamVector<T>) -> Result<Vec<T>, CalibrationError> {
        let params = self.checked_params(z)?;
        let per: Vec<Vec<T>> = self
            .recordings
            .par_iter()
            .map(|r| {
                let mut out = Vec::with_capacity(3 * r.dt.len());
                let w = r.sqrt_weight;
                r.visit_errors(&params, |ex, ey, eth| {
                    out.push(w * ex);
                    out.push(w * ey);
                    out.push(w * eth);
                });
                out
            })
            .collect();
        Ok(per.concat())
    }

    /// Number of stacked residual entries.
    pub fn residual_len(&self) -> usize {
        self.recordings.iter().map(|r| 3 * r.dt.len()).sum()
    }
}

/// Summed squared pose error of the model under `z` over the dataset.
pub fn cost<T: Real>(z: &ParamVector<T>, dataset: &Dataset<T>) -> Result<T, CalibrationError> {
    CostContext::new(dataset)?.cost(z)
}

/// One Levenberg-Marquardt step on the dataset cost with the default
/// five-percent bounds; returns the (possibly unchanged) next iterate and the
/// updated damping.
pub fn lm_step<T: Real>(
    z: &ParamVector<T>,
    dataset: &Dataset<T>,
    damping: T,
) -> Result<(ParamVector<T>, T), CalibrationError> {
    let ctx = CostContext::new(dataset)?;
    let bounds = Bounds::five_percent_of_nominal();
    let (next, new_damping) = lm_step_generic(
        &|s: &[T]| ctx.residuals(&ParamVector::from_slice(s)),
        z.as_slice(),
        damping,
        Some((&bounds.lower, &bounds.upper)),
        &LmOptions::default(),
    )?;
    Ok((ParamVector::from_slice(&next), new_damping))
}

/// Per-trajectory maxima and means of the absolute pose errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats<T> {
    pub kind: TrajectoryKind,
    pub e_x_max: T,
    pub e_x_avg: T,
    pub e_y_max: T,
    pub e_y_avg: T,
    pub e_theta_max: T,
    pub e_theta_avg: T,
}

/// Error table under `z`: per trajectory kind, the maximum and mean absolute
/// per-step errors over all recordings of that kind. The anchored first
/// sample of each recording carries no error and is excluded.
pub fn error_table<T: Real>(
    dataset: &Dataset<T>,
    z: &ParamVector<T>,
) -> Result<Vec<ErrorStats<T>>, CalibrationError> {
    let ctx = CostContext::new(dataset)?;
    let params = ctx.checked_params(z)?;
    let mut out = Vec::new();
    for kind in TrajectoryKind::ALL {
        let recs: Vec<&PreparedRecording<T>> = ctx
            .recordings
            .iter()
            .filter(|r| r.kind == kind)
            .collect();
        if recs.is_empty() {
            continue;
        }
        let mut max = [T::zero(); 3];
        let mut sum = [T::zero(); 3];
        let mut count = 0usize;
        for r in recs {
            r.visit_errors(&params, |ex, ey, eth| {
                let abs = [ex.abs(), ey.abs(), eth.abs()];
                for a in 0..3 {
                    max[a] = max[a].max(abs[a]);
                    sum[a] += abs[a];
                }
                count += 1;
            });
        }
        let n = convert::<T>(count as f64);
        out.push(ErrorStats {
            kind,
            e_x_max: max[0],
            e_x_avg: sum[0] / n,
            e_y_max: max[1],
            e_y_avg: sum[1] / n,
            e_theta_max: max[2],
            e_theta_avg: sum[2] / n,
        });
    }
    Ok(out)
}

/// Optimizer family used by [`calibrate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Lm,
    InteriorPoint,
    Ga,
    Pso,
}

/// How a solve ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    /// Converged by its own tolerance.
    Converged,
    /// Stopped at the iteration cap without meeting the tolerance.
    MaxIterations,
    /// Ran its configured stochastic budget to completion.
    Budget,
}

/// Options for all four backends; only the selected method's block is used.
/// `kind_weights` applies to every backend's cost.
#[derive(Debug, Clone, Default)]
pub struct CalibrateOptions<T: Real> {
    pub lm: LmOptions<T>,
    pub interior_point: IpOptions<T>,
    pub ga: GaOptions,
    pub pso: PsoOptions,
    pub kind_weights: KindWeights,
}

/// Result of one calibration solve.
#[derive(Debug, Clone)]
pub struct CalibrationReport<T> {
    pub method: Method,
    pub status: SolveStatus,
    pub initial_cost: T,
    pub final_cost: T,
    pub solution: ParamVector<T>,
    pub iterations: usize,
    pub evaluations: usize,
    /// Error table at the starting point.
    pub errors_before: Vec<ErrorStats<T>>,
    /// Error table at the solution.
    pub errors_after: Vec<ErrorStats<T>>,
    /// Wall-clock solve time; informational, not part of any file format.
    pub wall_time: std::time::Duration,
}

/// Solve the bounded calibration problem with the chosen backend.
///
/// The solution is always inside the bounds and never costs more than the
/// starting point (the start is kept if a backend fails to improve on it).
/// LM and interior point are deterministic; GA and PSO are deterministic
/// given their seeds.
pub fn calibrate<T: Real>(
    dataset: &Dataset<T>,
    z0: &ParamVector<T>,
    bounds: &Bounds<T>,
    method: Method,
    options: &CalibrateOptions<T>,
) -> Result<CalibrationReport<T>, CalibrationError> {
    bounds.validate()?;
    if let Some(j) = (0..PARAM_DIM).find(|&j| z0.0[j] < bounds.lower[j] || z0.0[j] > bounds.upper[j])
    {
        return Err(CalibrationError::StartOutOfBounds { index: j });
    }
    let started = std::time::Instant::now();
    let ctx = CostContext::with_weights(dataset, &options.kind_weights)?;
    let initial_cost = ctx.cost(z0)?;
    let objective = |s: &[T]| ctx.cost(&ParamVector::from_slice(s));

    let (mut solution, mut final_cost, status, iterations, evaluations) = match method {
        Method::Lm => {
            let out = lm_minimize(
                &|s: &[T]| ctx.residuals(&ParamVector::from_slice(s)),
                z0.as_slice(),
                Some((&bounds.lower, &bounds.upper)),
                &options.lm,
            )?;
            (out.z, out.cost, out.status, out.iterations, out.evaluations)
        }
        Method::InteriorPoint => {
            let out = interior_point_minimize(
                &objective,
                z0.as_slice(),
                &bounds.lower,
                &bounds.upper,
                &options.interior_point,
            )?;
            (
                out.z,
                out.cost,
                out.status,
                out.outer_iterations,
                out.evaluations,
            )
        }
        Method::Ga => {
            let out = ga_minimize(
                &objective,
                &bounds.lower,
                &bounds.upper,
                Some(z0.as_slice()),
                &options.ga,
            )?;
            (
                out.z,
                out.cost,
                SolveStatus::Budget,
                out.iterations,
                out.evaluations,
            )
        }
        Method::Pso => {
            let out = pso_minimize(
                &objective,
                &bounds.lower,
                &bounds.upper,
                Some(z0.as_slice()),
                &options.pso,
            )?;
            (
                out.z,
                out.cost,
                SolveStatus::Budget,
                out.iterations,
                out.evaluations,
            )
        }
    };

    if final_cost > initial_cost {
        solution = z0.as_slice().to_vec();
        final_cost = initial_cost;
    }
    let solution = ParamVector::from_slice(&solution);
    let errors_before = error_table(dataset, z0)?;
    let errors_after = error_table(dataset, &solution)?;
    Ok(CalibrationReport {
        method,
        status,
        initial_cost,
        final_cost,
        solution,
        iterations,
        evaluations,
        errors_before,
        errors_after,
        wall_time: started.elapsed(),
    })
}

/// The iterative field protocol: calibrate, reload the robot with the new
/// parameters, re-record the trajectory suite, and calibrate again, for
/// `rounds` rounds. Returns one report per round; on noiseless data the
/// per-round final cost is non-increasing.
#[allow(clippy::too_many_arguments)]
pub fn iterative_calibration<T: Real>(
    true_params: &KinematicParams<T>,
    specs: &[TrajectorySpec<T>],
    disturbance: &DisturbanceConfig<T>,
    z0: &ParamVector<T>,
    bounds: &Bounds<T>,
    method: Method,
    options: &CalibrateOptions<T>,
    rounds: usize,
) -> Result<Vec<CalibrationReport<T>>, CalibrationError> {
    let mut reports = Vec::with_capacity(rounds);
    let mut current = *z0;
    for _ in 0..rounds {
        let dataset = make_calibration_dataset_with(
            true_params,
            &current.to_params(),
            specs,
            disturbance,
        )?;
        let report = calibrate(&dataset, &current, bounds, method, options)?;
        current = report.solution;
        reports.push(report);
    }
    Ok(reports)
}

#[cfg(test)]
mod tests;
