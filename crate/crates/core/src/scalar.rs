//! Scalar abstraction: every numeric module in this crate is generic over the
//! floating-point type so the same code runs in `f32` and `f64`.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating-point scalar the toolkit is generic over (`f32` or `f64`).
///
/// `Send + Sync` lets cost evaluation and population fitness run on rayon.
pub trait Real: RealField + FromPrimitive + ToPrimitive + Copy + Send + Sync {}

impl<T> Real for T where T: RealField + FromPrimitive + ToPrimitive + Copy + Send + Sync {}

/// Convert an `f64` constant into the working scalar type.
#[inline]
pub fn convert<T: Real>(x: f64) -> T {
    nalgebra::convert(x)
}

/// Wrap an angle to the half-open interval `[-pi, pi)`.
///
/// Values already in range are returned unchanged (bit-exact); `pi` itself
/// maps to `-pi`.
pub fn wrap_angle<T: Real>(angle: T) -> T {
    if angle >= -T::pi() && angle < T::pi() {
        return angle;
    }
    let two_pi = T::two_pi();
    let turns = (angle + T::pi()) / two_pi;
    let frac = turns - turns.floor();
    let wrapped = frac * two_pi - T::pi();
    // floor rounding can land exactly on +pi for inputs a hair below a wrap
    // boundary; fold it back so the output interval stays half-open
    if wrapped >= T::pi() {
        wrapped - two_pi
    } else {
        wrapped
    }
}

/// Difference `a - b` wrapped to `[-pi, pi)`.
#[inline]
pub fn angle_diff<T: Real>(a: T, b: T) -> T {
    wrap_angle(a - b)
}
