//! Synthetic data generation: executes reference trajectories through the true
//! kinematics under injected disturbances and produces the ground-truth,
//! encoder, IMU, and visual-odometry channels a physical experiment would
//! record.
//!
//! Disturbance model:
//! - per-wheel longitudinal slip scales the true contact velocity while the
//!   encoders keep reporting the commanded rotation;
//! - gravity drift (wall runs) adds a world-frame velocity bias that grows
//!   linearly in time along -x;
//! - IMU yaw and VO pose channels carry seeded Gaussian noise.
//!
//! Commands additionally carry a small deterministic per-wheel steering
//! excitation (distinct low frequencies per wheel). Without it the six
//! calibration trajectories drive every wheel with the same steering
//! time-signature, which leaves several combinations of the twelve kinematic
//! parameters unobservable; the excitation gives each wheel its own signature
//! while barely perturbing the paths.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::kinematics::{
    wheels_from_body_twist, FrameKinematics, KinematicParams, KinematicsError, Pose2, WheelFrame,
    WHEEL_COUNT,
};
use crate::odometry::{step_cached, OdometryState};
use crate::scalar::{angle_diff, convert, wrap_angle, Real};
use crate::trajectory::{
    default_calibration_specs, reference_twists, TrajectoryError, TrajectoryKind, TrajectorySpec,
};

/// Repetitions of each trajectory kind in a full calibration dataset.
pub const REPETITIONS: usize = 5;

/// Per-wheel steering excitation frequencies (Hz).
const EXCITATION_HZ: [f64; WHEEL_COUNT] = [0.23, 0.31, 0.41, 0.53];

/// Errors from recording synthesis.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error("invalid disturbance config: {what}")]
    InvalidConfig { what: &'static str },
}

/// Non-systematic disturbance and sensor-synthesis configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DisturbanceConfig<T> {
    /// IMU yaw noise standard deviation (rad).
    pub imu_yaw_sigma: T,
    /// Constant IMU yaw bias (rad).
    pub imu_yaw_bias: T,
    /// VO position noise standard deviation per axis (m).
    pub vo_pos_sigma: T,
    /// VO yaw noise standard deviation (rad).
    pub vo_yaw_sigma: T,
    /// Per-wheel longitudinal slip in `[0, 1)`: the true contact velocity is
    /// `(1 - slip) *` the commanded one.
    pub slip_ratio: [T; WHEEL_COUNT],
    /// Downward (-x) acceleration bias integrated into the true motion
    /// (m/s^2); nonzero only for wall runs.
    pub gravity_drift: T,
    /// IMU sample rate (Hz); samples snap to the command grid.
    pub imu_rate_hz: T,
    /// VO sample rate (Hz); samples snap to the command grid.
    pub vo_rate_hz: T,
    /// Amplitude (rad) of the deterministic per-wheel steering excitation.
    pub steer_excitation: T,
    /// Seed for all noise channels.
    pub rng_seed: u64,
}

impl<T: Real> Default for DisturbanceConfig<T> {
    fn default() -> Self {
        DisturbanceConfig {
            imu_yaw_sigma: T::zero(),
            imu_yaw_bias: T::zero(),
            vo_pos_sigma: T::zero(),
            vo_yaw_sigma: T::zero(),
            slip_ratio: [T::zero(); WHEEL_COUNT],
            gravity_drift: T::zero(),
            imu_rate_hz: convert(100.0),
            vo_rate_hz: convert(30.0),
            steer_excitation: convert(0.03),
            rng_seed: 0,
        }
    }
}

impl<T: Real> DisturbanceConfig<T> {
    pub fn validate(&self) -> Result<(), SimError> {
        let nonneg = [
            self.imu_yaw_sigma,
            self.vo_pos_sigma,
            self.vo_yaw_sigma,
        ];
        if nonneg.iter().any(|s| *s < T::zero() || !s.is_finite()) {
            return Err(SimError::InvalidConfig {
                what: "noise sigmas must be non-negative",
            });
        }
        if self
            .slip_ratio
            .iter()
            .any(|s| *s < T::zero() || *s >= T::one())
        {
            return Err(SimError::InvalidConfig {
                what: "slip ratios must lie in [0, 1)",
            });
        }
        if !(self.imu_rate_hz > T::zero()) || !(self.vo_rate_hz > T::zero()) {
            return Err(SimError::InvalidConfig {
                what: "sensor rates must be positive",
            });
        }
        Ok(())
    }
}

/// Metadata identifying one recording inside a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordingMeta {
    /// Trajectory kind executed.
    pub kind: TrajectoryKind,
    /// Repetition index within its kind.
    pub repetition: u32,
    /// Noise seed this recording was generated with.
    pub seed: u64,
}

/// One trajectory execution: wheel frames plus synchronized ground truth and
/// sensor channels. Truth is aligned 1:1 with the frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recording<T> {
    pub frames: Vec<WheelFrame<T>>,
    pub truth: Vec<Pose2<T>>,
    /// IMU yaw samples `(t, yaw)`.
    pub imu_yaw: Vec<(T, T)>,
    /// VO pose samples `(t, pose)`.
    pub vo_pose: Vec<(T, Pose2<T>)>,
    pub meta: RecordingMeta,
}

/// A set of recordings (30 for a full calibration dataset).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Dataset<T> {
    pub recordings: Vec<Recording<T>>,
}

impl<T> Dataset<T> {
    pub fn len(&self) -> usize {
        self.recordings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.recordings.is_empty()
    }

    /// Recordings of one trajectory kind.
    pub fn of_kind(&self, kind: TrajectoryKind) -> impl Iterator<Item = &Recording<T>> {
        self.recordings.iter().filter(move |r| r.meta.kind == kind)
    }
}

/// splitmix64; used to derive independent per-recording and per-channel seeds
/// from one master seed.
pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn channel_rng(seed: u64, channel: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(channel)))
}

/// Sensor sample indices on the frame grid for a channel of the given rate.
fn grid_samples<T: Real>(times: &[T], rate_hz: T) -> Vec<usize> {
    let mut out = Vec::new();
    let mut j = 0u64;
    loop {
        let t = convert::<T>(j as f64) / rate_hz;
        if t > *times.last().unwrap() + convert(1e-9) {
            break;
        }
        // frame grid is uniform; snap to the nearest index
        let dt = times[1] - times[0];
        let idx = (t / dt).round().to_usize().unwrap_or(0);
        if idx >= times.len() {
            break;
        }
        if out.last() != Some(&idx) {
            out.push(idx);
        }
        j += 1;
    }
    out
}

/// Simulate one recording with commands derived from the same parameters that
/// govern the true motion.
pub fn simulate_recording<T: Real>(
    true_params: &KinematicParams<T>,
    spec: &TrajectorySpec<T>,
    disturbance: &DisturbanceConfig<T>,
) -> Result<Recording<T>, SimError> {
    simulate_recording_with_commands(true_params, true_params, spec, disturbance)
}

/// Simulate one recording with wheel commands computed under `command_params`
/// (the calibration currently loaded on the robot) while the true motion obeys
/// `true_params`. Used by the iterative re-record/re-optimize protocol.
pub fn simulate_recording_with_commands<T: Real>(
    true_params: &KinematicParams<T>,
    command_params: &KinematicParams<T>,
    spec: &TrajectorySpec<T>,
    disturbance: &DisturbanceConfig<T>,
) -> Result<Recording<T>, SimError> {
    true_params.validate()?;
    command_params.validate()?;
    disturbance.validate()?;
    let twists = reference_twists(spec)?;
    let n = twists.len();

    // command synthesis: inverse kinematics under the command model, steering
    // excitation on top, encoder rates from the command-model radii
    let mut frames: Vec<WheelFrame<T>> = Vec::with_capacity(n);
    let mut prev_steer: Option<[T; WHEEL_COUNT]> = None;
    for (t, twist) in &twists {
        let cmd = wheels_from_body_twist(command_params, twist, prev_steer.as_ref())?;
        let mut steer = cmd.steer;
        if disturbance.steer_excitation != T::zero() {
            for i in 0..WHEEL_COUNT {
                let phase = T::two_pi() * convert::<T>(EXCITATION_HZ[i]) * *t;
                steer[i] = wrap_angle(steer[i] + disturbance.steer_excitation * phase.sin());
            }
        }
        prev_steer = Some(steer);
        let mut wheel_rate = [T::zero(); WHEEL_COUNT];
        let mut speed = [T::zero(); WHEEL_COUNT];
        for i in 0..WHEEL_COUNT {
            wheel_rate[i] = cmd.speed[i] / command_params.wheel_radius[i];
            // physical contact speed actually realized by the true radii
            speed[i] = wheel_rate[i] * true_params.wheel_radius[i];
        }
        frames.push(WheelFrame {
            t: *t,
            speed,
            steer,
            wheel_rate,
            steer_rate: [T::zero(); WHEEL_COUNT],
        });
    }
    for k in 1..n {
        let dt = frames[k].t - frames[k - 1].t;
        for i in 0..WHEEL_COUNT {
            frames[k].steer_rate[i] = angle_diff(frames[k].steer[i], frames[k - 1].steer[i]) / dt;
        }
    }

    // true motion: slip scales the realized contact velocity, gravity adds a
    // time-growing world-frame velocity bias (integrated exactly). The wheel-
    // driven part uses the same one-step midpoint update as the odometry
    // module, so undisturbed recordings are reproduced bit-exactly by
    // dead reckoning under the true parameters.
    let mut truth = Vec::with_capacity(n);
    let mut state = OdometryState::new(Pose2::origin(), frames[0].t);
    truth.push(state.pose);
    let half: T = convert(0.5);
    for k in 0..n - 1 {
        let dt = frames[k + 1].t - frames[k].t;
        let mut fk = FrameKinematics::from_frame(&frames[k]);
        for i in 0..WHEEL_COUNT {
            fk.wheel_rate[i] *= T::one() - disturbance.slip_ratio[i];
        }
        state = step_cached(true_params, &state, &fk, dt);
        if disturbance.gravity_drift != T::zero() {
            let (t0, t1) = (frames[k].t, frames[k + 1].t);
            state.pose.x -= disturbance.gravity_drift * half * (t1 * t1 - t0 * t0);
        }
        truth.push(state.pose);
    }

    // sensor channels on the frame grid
    let times: Vec<T> = frames.iter().map(|f| f.t).collect();
    let headings: Vec<T> = {
        // reconstruct continuous headings for the IMU (truth stores wrapped)
        let mut hs = Vec::with_capacity(n);
        let mut acc = T::zero();
        let mut prev = T::zero();
        for p in &truth {
            acc += angle_diff(p.theta, prev);
            prev = p.theta;
            hs.push(acc);
        }
        hs
    };
    let mut imu_rng = channel_rng(disturbance.rng_seed, 1);
    let std_normal = Normal::new(0.0f64, 1.0).expect("unit normal");
    let imu_yaw = grid_samples(&times, disturbance.imu_rate_hz)
        .into_iter()
        .map(|idx| {
            let noise: T = convert(std_normal.sample(&mut imu_rng));
            (
                times[idx],
                wrap_angle(headings[idx] + disturbance.imu_yaw_bias + disturbance.imu_yaw_sigma * noise),
            )
        })
        .collect();
    let mut vo_rng = channel_rng(disturbance.rng_seed, 2);
    let vo_pose = grid_samples(&times, disturbance.vo_rate_hz)
        .into_iter()
        .map(|idx| {
            let nx: T = convert(std_normal.sample(&mut vo_rng));
            let ny: T = convert(std_normal.sample(&mut vo_rng));
            let nth: T = convert(std_normal.sample(&mut vo_rng));
            let p = truth[idx];
            (
                times[idx],
                Pose2::new(
                    p.x + disturbance.vo_pos_sigma * nx,
                    p.y + disturbance.vo_pos_sigma * ny,
                    wrap_angle(p.theta + disturbance.vo_yaw_sigma * nth),
                ),
            )
        })
        .collect();

    Ok(Recording {
        frames,
        truth,
        imu_yaw,
        vo_pose,
        meta: RecordingMeta {
            kind: spec.kind,
            repetition: 0,
            seed: disturbance.rng_seed,
        },
    })
}

/// Full calibration dataset with the default trajectory suite: six kinds,
/// five repetitions each, distinct derived seeds.
pub fn make_calibration_dataset<T: Real>(
    true_params: &KinematicParams<T>,
    disturbance: &DisturbanceConfig<T>,
) -> Result<Dataset<T>, SimError> {
    make_calibration_dataset_with(
        true_params,
        true_params,
        &default_calibration_specs(),
        disturbance,
    )
}

/// Calibration dataset over custom trajectory specs, with commands computed
/// under `command_params`.
pub fn make_calibration_dataset_with<T: Real>(
    true_params: &KinematicParams<T>,
    command_params: &KinematicParams<T>,
    specs: &[TrajectorySpec<T>],
    disturbance: &DisturbanceConfig<T>,
) -> Result<Dataset<T>, SimError> {
    let mut recordings = Vec::with_capacity(specs.len() * REPETITIONS);
    for (si, spec) in specs.iter().enumerate() {
        for rep in 0..REPETITIONS {
            let mut d = *disturbance;
            d.rng_seed = splitmix64(
                disturbance
                    .rng_seed
                    .wrapping_add(((si * REPETITIONS + rep) as u64).wrapping_add(1)),
            );
            let mut rec = simulate_recording_with_commands(true_params, command_params, spec, &d)?;
            rec.meta.repetition = rep as u32;
            recordings.push(rec);
        }
    }
    Ok(Dataset { recordings })
}
