//! Extended Kalman filter: the odometry step as process model, linearized
//! analytically; Joseph-form covariance updates.

use nalgebra::{Matrix3, Vector3};

use super::{FilterError, GaussianBelief, Measurement, MeasurementModel, ProcessModel, UpdateOutcome};
use crate::kinematics::{FrameKinematics, WheelFrame};
use crate::scalar::{angle_diff, convert, Real};

/// The process function: one explicit-midpoint odometry step applied to a
/// state vector, heading kept continuous (not wrapped). Shared by the EKF
/// mean propagation, its finite-difference test oracle, and the UKF
/// sigma-point propagation.
pub fn process_mean<T: Real>(
    model: &ProcessModel<T>,
    state: &Vector3<T>,
    fk: &FrameKinematics<T>,
    dt: T,
) -> Vector3<T> {
    let half: T = convert(0.5);
    let omega = model.params.body_twist_cached(fk).omega;
    let mid_heading = state[2] + omega * dt * half;
    let rate = model.params.world_rate_cached(mid_heading, fk);
    Vector3::new(
        state[0] + rate.vx * dt,
        state[1] + rate.vy * dt,
        state[2] + omega * dt,
    )
}

/// Analytic Jacobian of [`process_mean`] with respect to the state: identity
/// plus the heading sensitivity of the rotated translation, evaluated at the
/// midpoint heading.
pub fn process_jacobian<T: Real>(
    model: &ProcessModel<T>,
    state: &Vector3<T>,
    fk: &FrameKinematics<T>,
    dt: T,
) -> Matrix3<T> {
    let half: T = convert(0.5);
    let omega = model.params.body_twist_cached(fk).omega;
    let mid_heading = state[2] + omega * dt * half;
    let rate = model.params.world_rate_cached(mid_heading, fk);
    let mut a = Matrix3::identity();
    a[(0, 2)] = -rate.vy * dt;
    a[(1, 2)] = rate.vx * dt;
    a
}

/// EKF prediction: propagate the mean by the odometry step, the covariance by
/// the analytic linearization, and add `process_noise * dt`.
pub fn ekf_predict<T: Real>(
    belief: &GaussianBelief<T>,
    frame: &WheelFrame<T>,
    dt: T,
    model: &ProcessModel<T>,
) -> Result<GaussianBelief<T>, FilterError> {
    model.params.validate()?;
    if !(dt > T::zero()) {
        return Err(FilterError::NonPositiveDt);
    }
    let fk = FrameKinematics::from_frame(frame);
    let mean = process_mean(model, &belief.mean, &fk, dt);
    let a = process_jacobian(model, &belief.mean, &fk, dt);
    let cov = a * belief.cov * a.transpose() + model.process_noise * dt;
    let mut next = GaussianBelief::new(mean, cov);
    next.symmetrize();
    Ok(next)
}

/// EKF measurement update with the Joseph-form covariance; heading
/// innovations are wrapped. A non-invertible innovation covariance skips the
/// update and flags it.
pub fn ekf_update<T: Real>(
    belief: &GaussianBelief<T>,
    z: &Measurement<T>,
    model: &MeasurementModel<T>,
) -> Result<UpdateOutcome<T>, FilterError> {
    match (z, model) {
        (Measurement::ImuYaw(yaw), MeasurementModel::ImuYaw { variance }) => {
            let p = &belief.cov;
            let s = p[(2, 2)] + *variance;
            if !(s > T::zero()) || !s.is_finite() {
                return Ok(UpdateOutcome {
                    belief: *belief,
                    skipped: true,
                });
            }
            let k = Vector3::new(p[(0, 2)] / s, p[(1, 2)] / s, p[(2, 2)] / s);
            let innovation = angle_diff(*yaw, belief.mean[2]);
            let mean = belief.mean + k * innovation;
            // Joseph form: (I - K C) P (I - K C)^T + K R K^T with C = [0 0 1]
            let mut ikc = Matrix3::identity();
            ikc[(0, 2)] = -k[0];
            ikc[(1, 2)] = -k[1];
            ikc[(2, 2)] = T::one() - k[2];
            let cov = ikc * p * ikc.transpose() + (k * k.transpose()) * *variance;
            let mut next = GaussianBelief::new(mean, cov);
            next.symmetrize();
            Ok(UpdateOutcome {
                belief: next,
                skipped: false,
            })
        }
        (Measurement::VoPose(pose), MeasurementModel::VoPose { covariance }) => {
            let p = &belief.cov;
            let s = p + covariance;
            let s_inv = match s.try_inverse() {
                Some(inv) if inv.iter().all(|v| v.is_finite()) => inv,
                _ => {
                    return Ok(UpdateOutcome {
                        belief: *belief,
                        skipped: true,
                    })
                }
            };
            let k = p * s_inv;
            let innovation = Vector3::new(
                pose.x - belief.mean[0],
                pose.y - belief.mean[1],
                angle_diff(pose.theta, belief.mean[2]),
            );
            let mean = belief.mean + k * innovation;
            let ikc = Matrix3::identity() - k;
            let cov = ikc * p * ikc.transpose() + k * covariance * k.transpose();
            let mut next = GaussianBelief::new(mean, cov);
            next.symmetrize();
            Ok(UpdateOutcome {
                belief: next,
                skipped: false,
            })
        }
        _ => Err(FilterError::MeasurementMismatch),
    }
}
