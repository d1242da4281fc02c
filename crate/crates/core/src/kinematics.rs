//! Wheel-level kinematics of a four-wheel independent-steer / independent-drive
//! (4WIS4WID) robot.
//!
//! Each wheel `i` sits at `(wheel_x[i], wheel_y[i])` in the robot frame, has
//! radius `wheel_radius[i]`, a steering angle `steer[i]` and a contact-point
//! speed `speed[i]`. Rigid-body rolling ties the wheel velocities to the body
//! twist `(vx, vy, omega)`:
//!
//! ```text
//! speed_i * cos(steer_i) = vx - wheel_y_i * omega
//! speed_i * sin(steer_i) = vy + wheel_x_i * omega
//! ```
//!
//! Stacking the eight constraints and premultiplying by the pseudoinverse of
//! the position matrix yields the forward map implemented here:
//!
//! ```text
//! vx    = sum_i cos(steer_i) * speed_i / 4
//! vy    = sum_i sin(steer_i) * speed_i / 4
//! omega = sum_i K_i * speed_i,
//! K_i   = (-wheel_y_i cos(steer_i) + wheel_x_i sin(steer_i)) / (4 wheel_x_i^2 + 4 wheel_y_i^2)
//! ```
//!
//! For the symmetric nominal geometry this closed form *is* the least-squares
//! solution of the stacked system; with per-wheel positions it is the model
//! that calibration fits.

use serde::{Deserialize, Serialize};

use crate::scalar::{convert, wrap_angle, Real};

/// Number of wheels.
pub const WHEEL_COUNT: usize = 4;

/// Errors raised by kinematic parameter validation and the mapping operations.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum KinematicsError {
    /// A wheel radius is zero, negative, or not finite.
    #[error("wheel {index} radius must be positive and finite")]
    InvalidRadius {
        /// Wheel index (0-based).
        index: usize,
    },
    /// A wheel position coincides with the robot origin (the `K_i` denominator
    /// `4 x^2 + 4 y^2` vanishes) or is not finite.
    #[error("wheel {index} position must be finite and nonzero")]
    InvalidWheelPosition {
        /// Wheel index (0-based).
        index: usize,
    },
    /// A non-finite value was passed where a finite one is required.
    #[error("non-finite {what}")]
    NonFinite {
        /// Which input was non-finite.
        what: &'static str,
    },
}

/// Geometric calibration parameters: wheel positions and radii.
///
/// Wheel indices follow the quadrant sign convention of the robot frame
/// (x forward, y left): wheel 0 front-left `(+,+)`, wheel 1 rear-left `(-,+)`,
/// wheel 2 rear-right `(-,-)`, wheel 3 front-right `(+,-)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KinematicParams<T> {
    /// Signed x position of each wheel in the robot frame (m).
    pub wheel_x: [T; WHEEL_COUNT],
    /// Signed y position of each wheel in the robot frame (m).
    pub wheel_y: [T; WHEEL_COUNT],
    /// Radius of each wheel (m).
    pub wheel_radius: [T; WHEEL_COUNT],
}

impl<T: Real> KinematicParams<T> {
    /// Nominal CAD geometry: half-dimensions 112.5 mm, wheel radius 25.4 mm,
    /// quadrant sign pattern described on the type.
    pub fn nominal() -> Self {
        let a: T = convert(0.1125);
        let r: T = convert(0.0254);
        KinematicParams {
            wheel_x: [a, -a, -a, a],
            wheel_y: [a, a, -a, -a],
            wheel_radius: [r; WHEEL_COUNT],
        }
    }

    /// Check the type invariants: positive finite radii, nonzero finite wheel
    /// positions.
    pub fn validate(&self) -> Result<(), KinematicsError> {
        for i in 0..WHEEL_COUNT {
            let r = self.wheel_radius[i];
            if !(r.is_finite() && r > T::zero()) {
                return Err(KinematicsError::InvalidRadius { index: i });
            }
            let (x, y) = (self.wheel_x[i], self.wheel_y[i]);
            if !(x.is_finite() && y.is_finite()) || (x * x + y * y) == T::zero() {
                return Err(KinematicsError::InvalidWheelPosition { index: i });
            }
        }
        Ok(())
    }
}

/// Planar body twist `(vx, vy, omega)`.
///
/// Frame depends on context: body frame out of [`body_twist_from_wheels`],
/// world frame out of [`pose_derivative`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Twist2<T> {
    /// Linear velocity along x (m/s).
    pub vx: T,
    /// Linear velocity along y (m/s).
    pub vy: T,
    /// Angular velocity about z (rad/s).
    pub omega: T,
}

impl<T: Real> Twist2<T> {
    pub fn new(vx: T, vy: T, omega: T) -> Self {
        Twist2 { vx, vy, omega }
    }

    pub fn is_finite(&self) -> bool {
        self.vx.is_finite() && self.vy.is_finite() && self.omega.is_finite()
    }
}

/// Planar pose `(x, y, theta)`; `theta` is stored wrapped to `[-pi, pi)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2<T> {
    /// World-frame x (m).
    pub x: T,
    /// World-frame y (m).
    pub y: T,
    /// Heading (rad), wrapped to `[-pi, pi)`.
    pub theta: T,
}

impl<T: Real> Pose2<T> {
    /// Build a pose, wrapping `theta` into `[-pi, pi)`.
    pub fn new(x: T, y: T, theta: T) -> Self {
        Pose2 {
            x,
            y,
            theta: wrap_angle(theta),
        }
    }

    pub fn origin() -> Self {
        Pose2 {
            x: T::zero(),
            y: T::zero(),
            theta: T::zero(),
        }
    }
}

/// One timestamped sample of the four wheel drives and steering axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WheelFrame<T> {
    /// Sample time (s).
    pub t: T,
    /// Contact-point linear speed of each wheel (m/s).
    pub speed: [T; WHEEL_COUNT],
    /// Steering angle of each wheel (rad), in `[-pi, pi)`.
    pub steer: [T; WHEEL_COUNT],
    /// Wheel angular speed (rad/s); `wheel_rate[i] * radius_i == speed[i]`
    /// under the radii the frame was recorded with.
    pub wheel_rate: [T; WHEEL_COUNT],
    /// Steering angular rate (rad/s).
    pub steer_rate: [T; WHEEL_COUNT],
}

impl<T: Real> WheelFrame<T> {
    /// Frame with all channels zero at time `t`.
    pub fn zeroed(t: T) -> Self {
        WheelFrame {
            t,
            speed: [T::zero(); WHEEL_COUNT],
            steer: [T::zero(); WHEEL_COUNT],
            wheel_rate: [T::zero(); WHEEL_COUNT],
            steer_rate: [T::zero(); WHEEL_COUNT],
        }
    }

    /// Check `wheel_rate * radius == speed` against the given radii.
    pub fn rate_consistent_with(&self, params: &KinematicParams<T>, tol: T) -> bool {
        (0..WHEEL_COUNT)
            .all(|i| (self.wheel_rate[i] * params.wheel_radius[i] - self.speed[i]).abs() <= tol)
    }
}

/// Per-wheel speed and steering command, the output of the inverse map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WheelCommand<T> {
    /// Contact-point speeds (m/s), always non-negative.
    pub speed: [T; WHEEL_COUNT],
    /// Steering angles (rad) in `[-pi, pi)`.
    pub steer: [T; WHEEL_COUNT],
}

/// Steering trig and wheel rates of one frame, precomputed once so repeated
/// model evaluations (odometry inside the calibration cost) avoid recomputing
/// per-wheel `sin`/`cos`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameKinematics<T> {
    /// Wheel angular speeds (rad/s).
    pub wheel_rate: [T; WHEEL_COUNT],
    /// `cos(steer_i)`.
    pub cos_steer: [T; WHEEL_COUNT],
    /// `sin(steer_i)`.
    pub sin_steer: [T; WHEEL_COUNT],
}

impl<T: Real> FrameKinematics<T> {
    pub fn from_frame(frame: &WheelFrame<T>) -> Self {
        let mut cos_steer = [T::zero(); WHEEL_COUNT];
        let mut sin_steer = [T::zero(); WHEEL_COUNT];
        for i in 0..WHEEL_COUNT {
            let (s, c) = frame.steer[i].sin_cos();
            cos_steer[i] = c;
            sin_steer[i] = s;
        }
        FrameKinematics {
            wheel_rate: frame.wheel_rate,
            cos_steer,
            sin_steer,
        }
    }
}

impl<T: Real> KinematicParams<T> {
    /// Body twist implied by a cached frame, taking wheel speeds as
    /// `wheel_rate * radius` so the radii stay on the data path.
    #[inline]
    pub(crate) fn body_twist_cached(&self, fk: &FrameKinematics<T>) -> Twist2<T> {
        let quarter: T = convert(0.25);
        let mut vx = T::zero();
        let mut vy = T::zero();
        let mut omega = T::zero();
        for i in 0..WHEEL_COUNT {
            let v = fk.wheel_rate[i] * self.wheel_radius[i];
            let (x, y) = (self.wheel_x[i], self.wheel_y[i]);
            let denom = convert::<T>(4.0) * (x * x + y * y);
            let k = (-y * fk.cos_steer[i] + x * fk.sin_steer[i]) / denom;
            vx += fk.cos_steer[i] * v;
            vy += fk.sin_steer[i] * v;
            omega += k * v;
        }
        Twist2::new(vx * quarter, vy * quarter, omega)
    }

    /// World-frame pose rate at the given heading for a cached frame.
    ///
    /// The heading rate of the model does not depend on the heading itself,
    /// so this is the body twist rotated by `heading`.
    #[inline]
    pub(crate) fn world_rate_cached(&self, heading: T, fk: &FrameKinematics<T>) -> Twist2<T> {
        let body = self.body_twist_cached(fk);
        let (s, c) = heading.sin_cos();
        Twist2::new(
            body.vx * c - body.vy * s,
            body.vx * s + body.vy * c,
            body.omega,
        )
    }
}

/// Forward kinematics: body twist from per-wheel speeds and steering angles.
///
/// For the symmetric nominal geometry the result equals the least-squares
/// solution of the stacked rigid-body constraint system.
pub fn body_twist_from_wheels<T: Real>(
    params: &KinematicParams<T>,
    speeds: &[T; WHEEL_COUNT],
    steers: &[T; WHEEL_COUNT],
) -> Result<Twist2<T>, KinematicsError> {
    params.validate()?;
    for i in 0..WHEEL_COUNT {
        if !speeds[i].is_finite() {
            return Err(KinematicsError::NonFinite { what: "wheel speed" });
        }
        if !steers[i].is_finite() {
            return Err(KinematicsError::NonFinite {
                what: "steering angle",
            });
        }
    }
    let quarter: T = convert(0.25);
    let mut vx = T::zero();
    let mut vy = T::zero();
    let mut omega = T::zero();
    for i in 0..WHEEL_COUNT {
        let (s, c) = steers[i].sin_cos();
        let (x, y) = (params.wheel_x[i], params.wheel_y[i]);
        let denom = convert::<T>(4.0) * (x * x + y * y);
        let k = (-y * c + x * s) / denom;
        vx += c * speeds[i];
        vy += s * speeds[i];
        omega += k * speeds[i];
    }
    Ok(Twist2::new(vx * quarter, vy * quarter, omega))
}

/// Inverse kinematics: wheel speeds and steering angles realizing a body twist.
///
/// Per wheel: `v_xi = vx - y_i*omega`, `v_yi = vy + x_i*omega`,
/// `speed = hypot(v_xi, v_yi)`, `steer = atan2(v_yi, v_xi)`.
///
/// A wheel with exactly zero velocity has no defined steering direction; it
/// keeps `prev_steer` when given, else 0, so command sequences stay continuous
/// through standstill.
pub fn wheels_from_body_twist<T: Real>(
    params: &KinematicParams<T>,
    twist: &Twist2<T>,
    prev_steer: Option<&[T; WHEEL_COUNT]>,
) -> Result<WheelCommand<T>, KinematicsError> {
    params.validate()?;
    if !twist.is_finite() {
        return Err(KinematicsError::NonFinite { what: "body twist" });
    }
    let mut speed = [T::zero(); WHEEL_COUNT];
    let mut steer = [T::zero(); WHEEL_COUNT];
    for i in 0..WHEEL_COUNT {
        let vxi = twist.vx - params.wheel_y[i] * twist.omega;
        let vyi = twist.vy + params.wheel_x[i] * twist.omega;
        let v = vxi.hypot(vyi);
        speed[i] = v;
        steer[i] = if v == T::zero() {
            prev_steer.map_or(T::zero(), |p| p[i])
        } else {
            wrap_angle(vyi.atan2(vxi))
        };
    }
    Ok(WheelCommand { speed, steer })
}

/// World-frame pose rate `(dx, dy, dtheta)` of the kinematic model: the body
/// twist implied by the frame (with wheel speeds taken as
/// `wheel_rate * radius`), rotated by the pose heading.
pub fn pose_derivative<T: Real>(
    params: &KinematicParams<T>,
    pose: &Pose2<T>,
    frame: &WheelFrame<T>,
) -> Result<Twist2<T>, KinematicsError> {
    params.validate()?;
    for i in 0..WHEEL_COUNT {
        if !(frame.wheel_rate[i].is_finite() && frame.steer[i].is_finite()) {
            return Err(KinematicsError::NonFinite { what: "wheel frame" });
        }
    }
    let fk = FrameKinematics::from_frame(frame);
    Ok(params.world_rate_cached(pose.theta, &fk))
}
