//! Dead-reckoning pose integration: advances the pose by the kinematic model
//! over a sequence of wheel frames with an explicit-midpoint (RK2) step.
//!
//! Wheel speeds enter as `wheel_rate * radius` so the wheel radii stay on the
//! calibration data path. The heading is integrated continuously (never
//! wrapped) internally; poses are wrapped at output.

use crate::kinematics::{
    FrameKinematics, KinematicParams, KinematicsError, Pose2, WheelFrame, WHEEL_COUNT,
};
use crate::scalar::{convert, wrap_angle, Real};

/// Errors from odometry integration.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OdometryError {
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    /// Timestamps must be strictly increasing.
    #[error("non-monotone timestamp at frame {index}")]
    NonMonotoneTime {
        /// Index of the offending frame.
        index: usize,
    },
    /// Step size must be positive.
    #[error("step dt must be positive")]
    NonPositiveDt,
}

/// Integrator state: pose, accumulated wheel rotation angles, time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdometryState<T> {
    /// Current pose; `theta` wrapped to `[-pi, pi)`.
    pub pose: Pose2<T>,
    /// Continuous (unwrapped) heading used for integration.
    pub heading: T,
    /// Accumulated wheel rotation angles (rad), never wrapped.
    pub wheel_angle: [T; WHEEL_COUNT],
    /// State time (s).
    pub t: T,
}

impl<T: Real> OdometryState<T> {
    /// Start a state at `pose` and time `t`.
    pub fn new(pose: Pose2<T>, t: T) -> Self {
        let pose = Pose2::new(pose.x, pose.y, pose.theta);
        OdometryState {
            heading: pose.theta,
            pose,
            wheel_angle: [T::zero(); WHEEL_COUNT],
            t,
        }
    }
}

/// One explicit-midpoint step, assuming `params` already validated and the
/// frame trig precomputed. Hot path for calibration cost evaluation.
#[inline]
pub(crate) fn step_cached<T: Real>(
    params: &KinematicParams<T>,
    state: &OdometryState<T>,
    fk: &FrameKinematics<T>,
    dt: T,
) -> OdometryState<T> {
    let half: T = convert(0.5);
    // the model's heading rate does not depend on the heading, so the first
    // stage only needs omega
    let omega = params.body_twist_cached(fk).omega;
    let mid_heading = state.heading + omega * dt * half;
    let rate = params.world_rate_cached(mid_heading, fk);
    let heading = state.heading + omega * dt;
    let mut wheel_angle = state.wheel_angle;
    for i in 0..WHEEL_COUNT {
        wheel_angle[i] += fk.wheel_rate[i] * dt;
    }
    OdometryState {
        pose: Pose2::new(
            state.pose.x + rate.vx * dt,
            state.pose.y + rate.vy * dt,
            wrap_angle(heading),
        ),
        heading,
        wheel_angle,
        t: state.t + dt,
    }
}

/// Advance the state by one frame held constant over `dt` (explicit-midpoint
/// update: heading advanced half a step before the translation is evaluated).
pub fn step<T: Real>(
    params: &KinematicParams<T>,
    state: &OdometryState<T>,
    frame: &WheelFrame<T>,
    dt: T,
) -> Result<OdometryState<T>, OdometryError> {
    params.validate()?;
    if !(dt > T::zero()) {
        return Err(OdometryError::NonPositiveDt);
    }
    let fk = FrameKinematics::from_frame(frame);
    Ok(step_cached(params, state, &fk, dt))
}

/// Integrate a whole recording: returns one pose per input frame, the first
/// equal to `initial`. Frame `k`'s command is held over `[t_k, t_{k+1})`.
pub fn integrate_recording<T: Real>(
    params: &KinematicParams<T>,
    frames: &[WheelFrame<T>],
    initial: Pose2<T>,
) -> Result<Vec<Pose2<T>>, OdometryError> {
    params.validate()?;
    if frames.is_empty() {
        return Ok(Vec::new());
    }
    for (i, pair) in frames.windows(2).enumerate() {
        if !(pair[1].t > pair[0].t) {
            return Err(OdometryError::NonMonotoneTime { index: i + 1 });
        }
    }
    let mut out = Vec::with_capacity(frames.len());
    let mut state = OdometryState::new(initial, frames[0].t);
    out.push(state.pose);
    for k in 0..frames.len() - 1 {
        let dt = frames[k + 1].t - frames[k].t;
        let fk = FrameKinematics::from_frame(&frames[k]);
        state = step_cached(params, &state, &fk, dt);
        out.push(state.pose);
    }
    Ok(out)
}
