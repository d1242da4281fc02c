//! Reference trajectories for odometry calibration: straight lines along both
//! robot axes, circles in both directions, and in-place rotations in both
//! directions, all with quintic displacement profiles so velocity and
//! acceleration vanish at the endpoints (minimal slippage excitation).

use serde::{Deserialize, Serialize};

use crate::kinematics::{Pose2, Twist2};
use crate::scalar::{convert, Real};

/// The six canonical calibration trajectory kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryKind {
    /// Straight line along the robot/world x axis.
    LineX,
    /// Straight line along the robot/world y axis.
    LineY,
    /// Circle traversed counterclockwise, heading held fixed.
    CircleCcw,
    /// Circle traversed clockwise, heading held fixed.
    CircleCw,
    /// In-place rotation, counterclockwise.
    SpinCcw,
    /// In-place rotation, clockwise.
    SpinCw,
}

impl TrajectoryKind {
    /// All six kinds in canonical order.
    pub const ALL: [TrajectoryKind; 6] = [
        TrajectoryKind::LineX,
        TrajectoryKind::LineY,
        TrajectoryKind::CircleCcw,
        TrajectoryKind::CircleCw,
        TrajectoryKind::SpinCcw,
        TrajectoryKind::SpinCw,
    ];

    /// Stable snake_case name used in file formats and tables.
    pub fn name(&self) -> &'static str {
        match self {
            TrajectoryKind::LineX => "line_x",
            TrajectoryKind::LineY => "line_y",
            TrajectoryKind::CircleCcw => "circle_ccw",
            TrajectoryKind::CircleCw => "circle_cw",
            TrajectoryKind::SpinCcw => "spin_ccw",
            TrajectoryKind::SpinCw => "spin_cw",
        }
    }

    pub fn is_circle(&self) -> bool {
        matches!(self, TrajectoryKind::CircleCcw | TrajectoryKind::CircleCw)
    }

    pub fn is_spin(&self) -> bool {
        matches!(self, TrajectoryKind::SpinCcw | TrajectoryKind::SpinCw)
    }
}

/// Errors from trajectory generation.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrajectoryError {
    /// Profile evaluated outside `[0, duration]`.
    #[error("time {t} outside the profile interval [0, {duration}]")]
    TimeOutOfRange {
        /// Requested time (s).
        t: f64,
        /// Profile duration (s).
        duration: f64,
    },
    /// A spec field violates its invariant.
    #[error("invalid trajectory spec: {what}")]
    InvalidSpec {
        /// Which invariant failed.
        what: &'static str,
    },
}

/// Parameters of one reference trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySpec<T> {
    /// Which of the six canonical motions.
    pub kind: TrajectoryKind,
    /// Total displacement: path length (m) for lines, swept arc angle (rad)
    /// for circles, total rotation (rad) for spins. The CW kinds traverse in
    /// the negative direction; `displacement` stays positive.
    pub displacement: T,
    /// Circle radius (m); ignored for lines and spins.
    pub radius: T,
    /// Total duration (s).
    pub duration: T,
    /// Nominal sample period (s); the actual grid divides `duration` evenly.
    pub sample_dt: T,
}

impl<T: Real> TrajectorySpec<T> {
    pub fn validate(&self) -> Result<(), TrajectoryError> {
        if !(self.duration > T::zero()) {
            return Err(TrajectoryError::InvalidSpec {
                what: "duration must be positive",
            });
        }
        if !(self.sample_dt > T::zero()) {
            return Err(TrajectoryError::InvalidSpec {
                what: "sample_dt must be positive",
            });
        }
        if self.kind.is_circle() && !(self.radius > T::zero()) {
            return Err(TrajectoryError::InvalidSpec {
                what: "circle radius must be positive",
            });
        }
        Ok(())
    }

    /// Sample times: `duration` divided into an even grid of the step closest
    /// to `sample_dt`, endpoints included.
    pub fn sample_times(&self) -> Vec<T> {
        let n = (self.duration / self.sample_dt)
            .round()
            .to_usize()
            .unwrap_or(1)
            .max(1);
        let dt = self.duration / convert::<T>(n as f64);
        (0..=n)
            .map(|k| {
                if k == n {
                    self.duration
                } else {
                    convert::<T>(k as f64) * dt
                }
            })
            .collect()
    }
}

/// Quintic displacement profile `s(t) = total * (10 tau^3 - 15 tau^4 + 6 tau^5)`
/// with `tau = t/duration`; returns `(position, velocity, acceleration)`.
///
/// Position runs from 0 to `total`; velocity and acceleration are zero at both
/// endpoints.
pub fn quintic_profile<T: Real>(
    total: T,
    duration: T,
    t: T,
) -> Result<(T, T, T), TrajectoryError> {
    if !(duration > T::zero()) {
        return Err(TrajectoryError::InvalidSpec {
            what: "duration must be positive",
        });
    }
    if t < T::zero() || t > duration {
        return Err(TrajectoryError::TimeOutOfRange {
            t: t.to_f64().unwrap_or(f64::NAN),
            duration: duration.to_f64().unwrap_or(f64::NAN),
        });
    }
    let tau = t / duration;
    let (c10, c15, c6, c30, c60, c180, c120) = (
        convert::<T>(10.0),
        convert::<T>(15.0),
        convert::<T>(6.0),
        convert::<T>(30.0),
        convert::<T>(60.0),
        convert::<T>(180.0),
        convert::<T>(120.0),
    );
    let t2 = tau * tau;
    let t3 = t2 * tau;
    let t4 = t3 * tau;
    let t5 = t4 * tau;
    let pos = total * (c10 * t3 - c15 * t4 + c6 * t5);
    let vel = total * (c30 * t2 - c60 * t3 + c30 * t4) / duration;
    let acc = total * (c60 * tau - c180 * t2 + c120 * t3) / (duration * duration);
    Ok((pos, vel, acc))
}

/// Reference body twist at time `t` for the given spec.
///
/// Lines translate along one axis; circles keep the heading fixed (zero
/// angular rate) while the velocity vector sweeps the circle; spins rotate in
/// place. All speeds follow the quintic profile derivative.
pub fn reference_twist<T: Real>(
    spec: &TrajectorySpec<T>,
    t: T,
) -> Result<Twist2<T>, TrajectoryError> {
    spec.validate()?;
    let zero = T::zero();
    Ok(match spec.kind {
        TrajectoryKind::LineX => {
            let (_, v, _) = quintic_profile(spec.displacement, spec.duration, t)?;
            Twist2::new(v, zero, zero)
        }
        TrajectoryKind::LineY => {
            let (_, v, _) = quintic_profile(spec.displacement, spec.duration, t)?;
            Twist2::new(zero, v, zero)
        }
        TrajectoryKind::CircleCcw | TrajectoryKind::CircleCw => {
            let (phi, phidot, _) = quintic_profile(spec.displacement, spec.duration, t)?;
            let (s, c) = phi.sin_cos();
            let v = spec.radius * phidot;
            // CW mirrors the CCW circle about the x axis
            let sy = if spec.kind == TrajectoryKind::CircleCw {
                -T::one()
            } else {
                T::one()
            };
            Twist2::new(v * c, sy * v * s, zero)
        }
        TrajectoryKind::SpinCcw | TrajectoryKind::SpinCw => {
            let (_, w, _) = quintic_profile(spec.displacement, spec.duration, t)?;
            let sign = if spec.kind == TrajectoryKind::SpinCw {
                -T::one()
            } else {
                T::one()
            };
            Twist2::new(zero, zero, sign * w)
        }
    })
}

/// Sampled reference twists `(t, twist)` on the spec's time grid.
pub fn reference_twists<T: Real>(
    spec: &TrajectorySpec<T>,
) -> Result<Vec<(T, Twist2<T>)>, TrajectoryError> {
    spec.validate()?;
    spec.sample_times()
        .into_iter()
        .map(|t| Ok((t, reference_twist(spec, t)?)))
        .collect()
}

/// Analytic reference pose at time `t` (the exact integral of the reference
/// twist), starting from the origin.
pub fn reference_pose<T: Real>(
    spec: &TrajectorySpec<T>,
    t: T,
) -> Result<Pose2<T>, TrajectoryError> {
    spec.validate()?;
    let zero = T::zero();
    Ok(match spec.kind {
        TrajectoryKind::LineX => {
            let (s, _, _) = quintic_profile(spec.displacement, spec.duration, t)?;
            Pose2::new(s, zero, zero)
        }
        TrajectoryKind::LineY => {
            let (s, _, _) = quintic_profile(spec.displacement, spec.duration, t)?;
            Pose2::new(zero, s, zero)
        }
        TrajectoryKind::CircleCcw | TrajectoryKind::CircleCw => {
            let (phi, _, _) = quintic_profile(spec.displacement, spec.duration, t)?;
            let sy = if spec.kind == TrajectoryKind::CircleCw {
                -T::one()
            } else {
                T::one()
            };
            Pose2::new(
                spec.radius * phi.sin(),
                sy * spec.radius * (T::one() - phi.cos()),
                zero,
            )
        }
        TrajectoryKind::SpinCcw | TrajectoryKind::SpinCw => {
            let (s, _, _) = quintic_profile(spec.displacement, spec.duration, t)?;
            let sign = if spec.kind == TrajectoryKind::SpinCw {
                -T::one()
            } else {
                T::one()
            };
            Pose2::new(zero, zero, sign * s)
        }
    })
}

/// Default calibration suite: 1 m lines, full-revolution 0.5 m circles, one
/// full in-place revolution, sampled at 100 Hz, with durations keeping peak
/// speeds under 0.15 m/s.
pub fn default_calibration_specs<T: Real>() -> [TrajectorySpec<T>; 6] {
    let line = |kind| TrajectorySpec {
        kind,
        displacement: T::one(),
        radius: convert(0.5),
        duration: convert(13.0),
        sample_dt: convert(0.01),
    };
    let circle = |kind| TrajectorySpec {
        kind,
        displacement: T::two_pi(),
        radius: convert(0.5),
        duration: convert(40.0),
        sample_dt: convert(0.01),
    };
    let spin = |kind| TrajectorySpec {
        kind,
        displacement: T::two_pi(),
        radius: convert(0.5),
        duration: convert(13.0),
        sample_dt: convert(0.01),
    };
    [
        line(TrajectoryKind::LineX),
        line(TrajectoryKind::LineY),
        circle(TrajectoryKind::CircleCcw),
        circle(TrajectoryKind::CircleCw),
        spin(TrajectoryKind::SpinCcw),
        spin(TrajectoryKind::SpinCw),
    ]
}
