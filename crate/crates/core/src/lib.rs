//! Pose-estimation toolkit for a four-wheel independent-steer /
//! independent-drive (4WIS4WID) mobile robot: kinematic modeling,
//! dead-reckoning odometry, bounded least-squares calibration of the kinematic
//! parameters with four optimizer families, and EKF/UKF fusion of wheel
//! odometry with IMU yaw and visual-odometry pose measurements. A built-in
//! sensor simulator generates the synthetic datasets everything is validated
//! against.
//!
//! All numeric modules are generic over the scalar type ([`scalar::Real`],
//! `f32` or `f64`); the aliases at the crate root fix `f64`, which is what the
//! CLI and the file formats use.

// `!(x > y)` is used deliberately on floats so NaN falls into the rejecting
// branch; indexed loops over the fixed-size wheel arrays are the house style.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod calib;
pub mod filter;
pub mod kinematics;
pub mod odometry;
pub mod scalar;
pub mod sim;
pub mod trajectory;

pub use kinematics::{
    body_twist_from_wheels, pose_derivative, wheels_from_body_twist, KinematicParams,
    KinematicsError, Pose2, Twist2, WheelCommand, WheelFrame, WHEEL_COUNT,
};
pub use scalar::{wrap_angle, Real};

/// Planar pose with the default `f64` scalar.
pub type Pose2D = Pose2<f64>;
/// Body twist with the default `f64` scalar.
pub type BodyTwist = Twist2<f64>;
