//! Unscented Kalman filter: 2n+1 sigma points propagated through the odometry
//! step, heading statistics handled circularly (weighted sin/cos mean, wrapped
//! deviations).

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::{FilterError, GaussianBelief, Measurement, MeasurementModel, ProcessModel, UpdateOutcome};
use crate::kinematics::{FrameKinematics, WheelFrame};
use crate::scalar::{angle_diff, convert, Real};

const N: usize = 3;
const POINTS: usize = 2 * N + 1;

/// Unscented transform scaling parameters; `lambda = alpha^2 (n + kappa) - n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UkfConfig<T> {
    pub alpha: T,
    pub beta: T,
    pub kappa: T,
}

impl<T: Real> Default for UkfConfig<T> {
    fn default() -> Self {
        UkfConfig {
            alpha: convert(0.001),
            beta: convert(2.0),
            kappa: T::zero(),
        }
    }
}

impl<T: Real> UkfConfig<T> {
    pub fn validate(&self) -> Result<(), FilterError> {
        if !(self.alpha > T::zero() && self.alpha <= T::one()) {
            return Err(FilterError::InvalidUkfConfig {
                what: "alpha must lie in (0, 1]",
            });
        }
        let scaled = self.scaled_spread();
        if scaled == T::zero() || !scaled.is_finite() {
            return Err(FilterError::InvalidUkfConfig {
                what: "n + lambda must be nonzero",
            });
        }
        Ok(())
    }

    /// `n + lambda = alpha^2 (n + kappa)`, computed in this product form to
    /// avoid the cancellation in `lambda + n`.
    fn scaled_spread(&self) -> T {
        self.alpha * self.alpha * (convert::<T>(N as f64) + self.kappa)
    }
}

/// Sigma points and their recombination weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaPoints<T: Real> {
    pub points: [Vector3<T>; POINTS],
    pub weights_mean: [T; POINTS],
    pub weights_cov: [T; POINTS],
}

/// Mean/covariance weights `(wm0, wc0, wi)` for the scaled transform.
///
/// `wi = 1/(2(n+lambda))` is nudged by at most a few ulps (in `f64`) so that
/// `2n * wi` and `1 - 2n * wi` are exactly representable; the stored mean
/// weights then sum to exactly one in real arithmetic instead of carrying the
/// ~1e-10 cancellation error the naive formulas leave at small `alpha`.
fn weights<T: Real>(config: &UkfConfig<T>) -> (T, T, T) {
    let alpha = config.alpha.to_f64().unwrap_or(1.0);
    let kappa = config.kappa.to_f64().unwrap_or(0.0);
    let beta = config.beta.to_f64().unwrap_or(2.0);
    let x = alpha * alpha * (N as f64 + kappa); // n + lambda
    let two_n = (2 * N) as f64;
    let raw = 1.0 / (2.0 * x);
    let mut wi = raw;
    let mut candidate = raw;
    for k in 0..=8 {
        let s = two_n * candidate;
        let product_exact = two_n.mul_add(candidate, -s) == 0.0;
        let complement_exact = (1.0 - s) + s == 1.0;
        if product_exact && complement_exact {
            wi = candidate;
            break;
        }
        candidate = if k % 2 == 0 {
            step_ulps(raw, (k / 2 + 1) as i64)
        } else {
            step_ulps(raw, -((k / 2 + 1) as i64))
        };
    }
    let wm0 = 1.0 - two_n * wi;
    let wc0 = wm0 + (1.0 - alpha * alpha + beta);
    (convert(wm0), convert(wc0), convert(wi))
}

fn step_ulps(x: f64, n: i64) -> f64 {
    let mut y = x;
    for _ in 0..n.abs() {
        y = if n > 0 { y.next_up() } else { y.next_down() };
    }
    y
}

/// Generate the 2n+1 sigma points `mean`, `mean ± columns of
/// sqrt((n+lambda) P)` with their recombination weights. A failed Cholesky is
/// retried once with `1e-12 I` jitter.
pub fn ukf_sigma_points<T: Real>(
    belief: &GaussianBelief<T>,
    config: &UkfConfig<T>,
) -> Result<SigmaPoints<T>, FilterError> {
    config.validate()?;
    let scale = config.scaled_spread();
    let jitter: T = convert(1e-12);
    let chol = nalgebra::Cholesky::new(belief.cov * scale)
        .or_else(|| nalgebra::Cholesky::new((belief.cov + Matrix3::identity() * jitter) * scale))
        .ok_or(FilterError::NonPsdCovariance)?;
    let l = chol.l();
    let mut points = [belief.mean; POINTS];
    for i in 0..N {
        let col = l.column(i);
        points[1 + i] = belief.mean + col;
        points[1 + N + i] = belief.mean - col;
    }
    let (wm0, wc0, wi) = weights(config);
    let mut weights_mean = [wi; POINTS];
    let mut weights_cov = [wi; POINTS];
    weights_mean[0] = wm0;
    weights_cov[0] = wc0;
    Ok(SigmaPoints {
        points,
        weights_mean,
        weights_cov,
    })
}

/// Weighted state mean with a circular heading component. The heading mean is
/// computed relative to the center point's heading so it stays on the same
/// continuous branch instead of collapsing to `[-pi, pi)`.
fn recombine_mean<T: Real>(points: &[Vector3<T>; POINTS], wm: &[T; POINTS]) -> Vector3<T> {
    let reference = points[0][2];
    let mut x = T::zero();
    let mut y = T::zero();
    let mut sin = T::zero();
    let mut cos = T::zero();
    for (p, w) in points.iter().zip(wm) {
        x += *w * p[0];
        y += *w * p[1];
        let (s, c) = (p[2] - reference).sin_cos();
        sin += *w * s;
        cos += *w * c;
    }
    Vector3::new(x, y, reference + sin.atan2(cos))
}

fn deviation<T: Real>(p: &Vector3<T>, mean: &Vector3<T>) -> Vector3<T> {
    Vector3::new(p[0] - mean[0], p[1] - mean[1], angle_diff(p[2], mean[2]))
}

/// UKF prediction: propagate every sigma point through the odometry step and
/// recombine, adding `process_noise * dt`.
pub fn ukf_predict<T: Real>(
    belief: &GaussianBelief<T>,
    frame: &WheelFrame<T>,
    dt: T,
    model: &ProcessModel<T>,
    config: &UkfConfig<T>,
) -> Result<GaussianBelief<T>, FilterError> {
    model.params.validate()?;
    if !(dt > T::zero()) {
        return Err(FilterError::NonPositiveDt);
    }
    let fk = FrameKinematics::from_frame(frame);
    let sp = ukf_sigma_points(belief, config)?;
    let mut propagated = sp.points;
    for p in &mut propagated {
        *p = super::ekf::process_mean(model, p, &fk, dt);
    }
    let mean = recombine_mean(&propagated, &sp.weights_mean);
    let mut cov = model.process_noise * dt;
    for (p, w) in propagated.iter().zip(&sp.weights_cov) {
        let d = deviation(p, &mean);
        cov += d * d.transpose() * *w;
    }
    let mut next = GaussianBelief::new(mean, cov);
    next.symmetrize();
    Ok(next)
}

/// UKF measurement update: measurement statistics from the sigma points,
/// gain from the cross covariance. A non-invertible innovation covariance
/// skips the update and flags it.
pub fn ukf_update<T: Real>(
    belief: &GaussianBelief<T>,
    z: &Measurement<T>,
    model: &MeasurementModel<T>,
    config: &UkfConfig<T>,
) -> Result<UpdateOutcome<T>, FilterError> {
    let sp = ukf_sigma_points(belief, config)?;
    match (z, model) {
        (Measurement::ImuYaw(yaw), MeasurementModel::ImuYaw { variance }) => {
            // circular measurement mean relative to the center point
            let reference = sp.points[0][2];
            let mut sin = T::zero();
            let mut cos = T::zero();
            for (p, w) in sp.points.iter().zip(&sp.weights_mean) {
                let (s, c) = (p[2] - reference).sin_cos();
                sin += *w * s;
                cos += *w * c;
            }
            let z_mean = reference + sin.atan2(cos);
            let mut pzz = *variance;
            let mut pxz = Vector3::zeros();
            for (p, w) in sp.points.iter().zip(&sp.weights_cov) {
                let dz = angle_diff(p[2], z_mean);
                pzz += *w * dz * dz;
                pxz += deviation(p, &belief.mean) * dz * *w;
            }
            if !(pzz > T::zero()) || !pzz.is_finite() {
                return Ok(UpdateOutcome {
                    belief: *belief,
                    skipped: true,
                });
            }
            let k = pxz / pzz;
            let mean = belief.mean + k * angle_diff(*yaw, z_mean);
            let cov = belief.cov - k * k.transpose() * pzz;
            let mut next = GaussianBelief::new(mean, cov);
            next.symmetrize();
            Ok(UpdateOutcome {
                belief: next,
                skipped: false,
            })
        }
        (Measurement::VoPose(pose), MeasurementModel::VoPose { covariance }) => {
            let z_mean = recombine_mean(&sp.points, &sp.weights_mean);
            let mut pzz = *covariance;
            let mut pxz = Matrix3::zeros();
            for (p, w) in sp.points.iter().zip(&sp.weights_cov) {
                let dz = deviation(p, &z_mean);
                let dx = deviation(p, &belief.mean);
                pzz += dz * dz.transpose() * *w;
                pxz += dx * dz.transpose() * *w;
            }
            let pzz_inv = match pzz.try_inverse() {
                Some(inv) if inv.iter().all(|v| v.is_finite()) => inv,
                _ => {
                    return Ok(UpdateOutcome {
                        belief: *belief,
                        skipped: true,
                    })
                }
            };
            let k = pxz * pzz_inv;
            let innovation = Vector3::new(
                pose.x - z_mean[0],
                pose.y - z_mean[1],
                angle_diff(pose.theta, z_mean[2]),
            );
            let mean = belief.mean + k * innovation;
            let cov = belief.cov - k * pzz * k.transpose();
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::{ekf_predict, ekf_update};
    use crate::kinematics::{wheels_from_body_twist, KinematicParams, Pose2, Twist2};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn neumaier_sum(values: &[f64]) -> f64 {
        let mut sum = 0.0;
        let mut comp = 0.0;
        for &v in values {
            let t = sum + v;
            if sum.abs() >= v.abs() {
                comp += (sum - t) + v;
            } else {
                comp += (v - t) + sum;
            }
            sum = t;
        }
        sum + comp
    }

    fn random_psd(rng: &mut impl Rng, scale: f64) -> Matrix3<f64> {
        let a = Matrix3::from_fn(|_, _| rng.gen_range(-1.0..1.0) * scale);
        a * a.transpose() + Matrix3::identity() * (1e-6 * scale * scale)
    }

    #[test]
    fn canonical_weights_sum_to_one_exactly() {
        let config = UkfConfig::<f64>::default();
        let belief = GaussianBelief::from_pose(Pose2::origin(), Matrix3::identity());
        let sp = ukf_sigma_points(&belief, &config).unwrap();
        let total = neumaier_sum(&sp.weights_mean);
        assert!(
            (total - 1.0).abs() < 1e-12,
            "sum of mean weights off by {:e}",
            total - 1.0
        );
        // lambda = 1e-6 * 3 - 3: the center weight is huge and negative
        assert!(sp.weights_mean[0] < -9.0e5);
        let x = 1e-6 * 3.0;
        assert!((sp.weights_mean[1] - 1.0 / (2.0 * x)).abs() / (1.0 / (2.0 * x)) < 1e-12);
        assert!(
            (sp.weights_cov[0] - (sp.weights_mean[0] + 1.0 - 1e-6 + 2.0)).abs() < 1e-9
        );
    }

    #[test]
    fn identity_covariance_gives_axis_points() {
        let config = UkfConfig {
            alpha: 1.0,
            beta: 2.0,
            kappa: 0.0,
        };
        // n + lambda = n for alpha = 1, kappa = 0
        let belief = GaussianBelief::from_pose(Pose2::origin(), Matrix3::identity());
        let sp = ukf_sigma_points(&belief, &config).unwrap();
        assert_eq!(sp.points[0], Vector3::zeros());
        let r = 3.0f64.sqrt();
        for i in 0..3 {
            assert!((sp.points[1 + i][i] - r).abs() < 1e-12);
            assert!((sp.points[4 + i][i] + r).abs() < 1e-12);
        }
    }

    #[test]
    fn sigma_points_reconstruct_mean_and_covariance() {
        let config = UkfConfig::<f64>::default();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..100 {
            let p = random_psd(&mut rng, 0.5);
            let belief = GaussianBelief::new(Vector3::zeros(), p);
            let sp = ukf_sigma_points(&belief, &config).unwrap();
            let mut mean = Vector3::zeros();
            for (pt, w) in sp.points.iter().zip(&sp.weights_mean) {
                mean += pt * *w;
            }
            let mut cov = Matrix3::zeros();
            for (pt, w) in sp.points.iter().zip(&sp.weights_cov) {
                let d = pt - mean;
                cov += d * d.transpose() * *w;
            }
            assert!(mean.amax() < 1e-10, "mean residual {}", mean.amax());
            assert!(
                (cov - p).amax() < 1e-10,
                "covariance residual {}",
                (cov - p).amax()
            );
        }
    }

    #[test]
    fn linear_process_matches_ekf() {
        let model = ProcessModel {
            params: KinematicParams::nominal(),
            process_noise: Matrix3::identity() * 1e-4,
        };
        let config = UkfConfig::default();
        let cov = random_psd(&mut ChaCha8Rng::seed_from_u64(5), 0.3);
        let belief = GaussianBelief::from_pose(Pose2::new(0.4, -0.2, 0.3), cov);
        // zero twist: the process map is the identity
        let frame = crate::kinematics::WheelFrame::zeroed(0.0);
        let u = ukf_predict(&belief, &frame, 0.5, &model, &config).unwrap();
        let e = ekf_predict(&belief, &frame, 0.5, &model).unwrap();
        assert!((u.mean - e.mean).amax() < 1e-9);
        assert!((u.cov - e.cov).amax() < 1e-9);
    }

    #[test]
    fn deterministic_limit_matches_process_mean() {
        let model = ProcessModel {
            params: KinematicParams::nominal(),
            process_noise: Matrix3::zeros(),
        };
        let config = UkfConfig::default();
        let cmd = wheels_from_body_twist(&model.params, &Twist2::new(0.1, 0.05, 0.0), None).unwrap();
        let mut frame = crate::kinematics::WheelFrame::zeroed(0.0);
        frame.speed = cmd.speed;
        frame.steer = cmd.steer;
        for i in 0..4 {
            frame.wheel_rate[i] = cmd.speed[i] / model.params.wheel_radius[i];
        }
        let belief = GaussianBelief::from_pose(
            Pose2::new(0.1, 0.2, 0.7),
            Matrix3::identity() * 1e-14,
        );
        let next = ukf_predict(&belief, &frame, 0.1, &model, &config).unwrap();
        let fk = FrameKinematics::from_frame(&frame);
        let expected = super::super::ekf::process_mean(&model, &belief.mean, &fk, 0.1);
        assert!((next.mean - expected).amax() < 1e-9);
    }

    #[test]
    fn covariance_stays_symmetric_psd_over_random_beliefs() {
        let model = ProcessModel {
            params: KinematicParams::nominal(),
            process_noise: Matrix3::identity() * 1e-6,
        };
        let config = UkfConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..100 {
            let cov = random_psd(&mut rng, 0.2);
            let belief = GaussianBelief::new(
                Vector3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-3.0..3.0),
                ),
                cov,
            );
            let cmd = wheels_from_body_twist(
                &model.params,
                &Twist2::new(rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2), rng.gen_range(-0.8..0.8)),
                None,
            )
            .unwrap();
            let mut frame = crate::kinematics::WheelFrame::zeroed(0.0);
            frame.speed = cmd.speed;
            frame.steer = cmd.steer;
            for i in 0..4 {
                frame.wheel_rate[i] = cmd.speed[i] / model.params.wheel_radius[i];
            }
            let next = ukf_predict(&belief, &frame, 0.02, &model, &config).unwrap();
            let asym = (next.cov - next.cov.transpose()).amax();
            assert!(asym < 1e-12, "asymmetry {asym}");
            assert!(next.min_eigenvalue() > -1e-10);
        }
    }

    #[test]
    fn linear_measurement_matches_ekf() {
        let config = UkfConfig::<f64>::default();
        let cov = random_psd(&mut ChaCha8Rng::seed_from_u64(13), 0.4);
        let belief = GaussianBelief::from_pose(Pose2::new(0.2, -0.4, 0.5), cov);
        let z = Measurement::VoPose(Pose2::new(0.3, -0.2, 0.4));
        let model = MeasurementModel::VoPose {
            covariance: Matrix3::identity() * 0.01,
        };
        let u = ukf_update(&belief, &z, &model, &config).unwrap();
        let e = ekf_update(&belief, &z, &model).unwrap();
        assert!(!u.skipped && !e.skipped);
        assert!((u.belief.mean - e.belief.mean).amax() < 1e-9);
        assert!((u.belief.cov - e.belief.cov).amax() < 1e-9);
    }

    #[test]
    fn zero_innovation_shrinks_heading_variance() {
        let config = UkfConfig::<f64>::default();
        let belief = GaussianBelief::from_pose(
            Pose2::new(0.0, 0.0, 0.8),
            Matrix3::identity() * 0.2,
        );
        let out = ukf_update(
            &belief,
            &Measurement::ImuYaw(0.8),
            &MeasurementModel::ImuYaw { variance: 0.05 },
            &config,
        )
        .unwrap();
        assert!((out.belief.mean[2] - 0.8).abs() < 1e-9);
        assert!(out.belief.cov[(2, 2)] < belief.cov[(2, 2)]);
    }

    #[test]
    fn scalar_hand_case_matches_kalman_arithmetic() {
        let config = UkfConfig::<f64>::default();
        let mut cov = Matrix3::zeros();
        cov[(2, 2)] = 1.0;
        let belief = GaussianBelief::from_pose(Pose2::origin(), cov);
        let out = ukf_update(
            &belief,
            &Measurement::ImuYaw(1.0),
            &MeasurementModel::ImuYaw { variance: 1.0 },
            &config,
        )
        .unwrap();
        assert!((out.belief.mean[2] - 0.5).abs() < 1e-9);
        assert!((out.belief.cov[(2, 2)] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn invalid_config_rejected() {
        let c = UkfConfig::<f64> {
            alpha: 0.0,
            ..UkfConfig::default()
        };
        assert!(c.validate().is_err());
        let c = UkfConfig::<f64> {
            alpha: 1.5,
            ..UkfConfig::default()
        };
        assert!(c.validate().is_err());
        // n + kappa = 0
        let c = UkfConfig::<f64> {
            kappa: -3.0,
            ..UkfConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
