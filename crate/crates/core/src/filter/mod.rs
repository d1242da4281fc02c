//! EKF and UKF pose estimators fusing dead-reckoning odometry (prediction)
//! with IMU yaw and visual-odometry pose measurements. Both filters share the
//! same process and measurement models, so they are interchangeable in the
//! estimation pipeline.
//!
//! The filter state is the planar pose `(x, y, theta)`; wheel rotation and
//! steering angles are measured directly by the servos and enter as control
//! input rather than estimated state.

mod ekf;
mod run;
mod ukf;

pub use ekf::{ekf_predict, ekf_update, process_jacobian, process_mean};
pub use run::{run_estimator, EstimateTrace, EstimatorConfig, FilterKind, TraceStep};
pub use ukf::{ukf_predict, ukf_sigma_points, ukf_update, SigmaPoints, UkfConfig};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::kinematics::{KinematicParams, KinematicsError, Pose2};
use crate::scalar::{convert, Real};

/// Errors from filter construction and stepping.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FilterError {
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    /// Covariance not positive semi-definite even after jitter.
    #[error("covariance is not positive semi-definite")]
    NonPsdCovariance,
    /// Measurement kind does not match the measurement model.
    #[error("measurement does not match the measurement model")]
    MeasurementMismatch,
    #[error("prediction dt must be positive")]
    NonPositiveDt,
    /// Sigma-point scaling invalid (`alpha` out of `(0, 1]` or `n + lambda = 0`).
    #[error("invalid unscented transform configuration: {what}")]
    InvalidUkfConfig { what: &'static str },
    /// An event channel is not in strictly increasing time order.
    #[error("{channel} events out of order at index {index}")]
    UnorderedEvents {
        channel: &'static str,
        index: usize,
    },
    /// Recording channels are inconsistent (e.g. truth not aligned to frames).
    #[error("recording channels inconsistent: {what}")]
    MalformedRecording { what: &'static str },
}

/// Gaussian state estimate: mean pose `(x, y, theta)` and 3x3 covariance.
///
/// The heading component is kept continuous (never wrapped) so prediction is
/// bit-identical to dead reckoning; innovations and outputs wrap instead.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianBelief<T: Real> {
    pub mean: Vector3<T>,
    pub cov: Matrix3<T>,
}

impl<T: Real> GaussianBelief<T> {
    pub fn new(mean: Vector3<T>, cov: Matrix3<T>) -> Self {
        GaussianBelief { mean, cov }
    }

    pub fn from_pose(pose: Pose2<T>, cov: Matrix3<T>) -> Self {
        GaussianBelief {
            mean: Vector3::new(pose.x, pose.y, pose.theta),
            cov,
        }
    }

    pub fn pose(&self) -> Pose2<T> {
        Pose2::new(self.mean[0], self.mean[1], self.mean[2])
    }

    /// Force exact symmetry (filters symmetrize after every update).
    pub fn symmetrize(&mut self) {
        let half: T = convert(0.5);
        self.cov = (self.cov + self.cov.transpose()) * half;
    }

    /// Smallest eigenvalue of the covariance; diagnostic for PSD checks.
    pub fn min_eigenvalue(&self) -> T {
        self.cov
            .symmetric_eigenvalues()
            .iter()
            .fold(T::max_value().unwrap(), |a, b| a.min(*b))
    }
}

/// Process model: the kinematic parameters driving the odometry prediction
/// plus the process noise intensity (covariance per second; a prediction over
/// `dt` adds `process_noise * dt`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProcessModel<T: Real> {
    pub params: KinematicParams<T>,
    pub process_noise: Matrix3<T>,
}

/// Measurement model: which channel and its noise covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeasurementModel<T: Real> {
    /// Scalar yaw measurement, `h(x) = theta`.
    ImuYaw { variance: T },
    /// Full pose measurement, `h(x) = x`.
    VoPose { covariance: Matrix3<T> },
}

/// One measurement sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Measurement<T> {
    ImuYaw(T),
    VoPose(Pose2<T>),
}

/// Result of a measurement update; `skipped` is set when the innovation
/// covariance was not invertible and the prior was kept.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateOutcome<T: Real> {
    pub belief: GaussianBelief<T>,
    pub skipped: bool,
}
