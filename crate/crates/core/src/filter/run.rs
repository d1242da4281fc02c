//! Time-ordered fusion of one recording: predict on every wheel frame, update
//! on every IMU/VO sample at its timestamp (ties resolved predict-first), with
//! per-step NEES diagnostics against the recording's ground truth.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use super::{
    ekf_predict, ekf_update, ukf_predict, ukf_update, FilterError, GaussianBelief, Measurement,
    MeasurementModel, ProcessModel, UkfConfig, UpdateOutcome,
};
use crate::kinematics::{KinematicParams, Pose2};
use crate::scalar::{angle_diff, convert, Real};
use crate::sim::{DisturbanceConfig, Recording};

/// Which estimator to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    /// Dead reckoning only; measurements ignored.
    OdomOnly,
    Ekf,
    Ukf,
}

impl FilterKind {
    pub fn name(&self) -> &'static str {
        match self {
            FilterKind::OdomOnly => "odom_only",
            FilterKind::Ekf => "ekf",
            FilterKind::Ukf => "ukf",
        }
    }
}

/// Noise configuration of the estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorConfig<T: Real> {
    /// Process noise intensity (covariance per second).
    pub process_noise: Matrix3<T>,
    /// IMU yaw measurement variance.
    pub imu_yaw_variance: T,
    /// VO pose measurement covariance.
    pub vo_covariance: Matrix3<T>,
    /// Initial state covariance.
    pub initial_covariance: Matrix3<T>,
    pub ukf: UkfConfig<T>,
}

impl<T: Real> Default for EstimatorConfig<T> {
    fn default() -> Self {
        let q: T = convert(1e-4);
        EstimatorConfig {
            process_noise: Matrix3::identity() * q,
            imu_yaw_variance: convert(1e-4),
            vo_covariance: Matrix3::from_diagonal(&nalgebra::Vector3::new(
                convert(2.5e-5),
                convert(2.5e-5),
                convert(1e-4),
            )),
            initial_covariance: Matrix3::identity() * convert::<T>(1e-6),
            ukf: UkfConfig::default(),
        }
    }
}

impl<T: Real> EstimatorConfig<T> {
    /// Measurement noise matched to the simulator's disturbance config (with
    /// small floors so zero-noise channels stay invertible).
    pub fn matched_to(disturbance: &DisturbanceConfig<T>) -> Self {
        let floor: T = convert(1e-12);
        let imu = (disturbance.imu_yaw_sigma * disturbance.imu_yaw_sigma).max(floor);
        let vp = (disturbance.vo_pos_sigma * disturbance.vo_pos_sigma).max(floor);
        let vy = (disturbance.vo_yaw_sigma * disturbance.vo_yaw_sigma).max(floor);
        EstimatorConfig {
            imu_yaw_variance: imu,
            vo_covariance: Matrix3::from_diagonal(&nalgebra::Vector3::new(vp, vp, vy)),
            ..EstimatorConfig::default()
        }
    }
}

/// One fused estimate aligned to a wheel-frame timestamp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceStep<T: Real> {
    pub t: T,
    pub estimate: Pose2<T>,
    pub truth: Pose2<T>,
    /// Estimate minus truth, heading wrapped.
    pub error: (T, T, T),
    /// Normalized estimation error squared against the filter covariance.
    pub nees: T,
    pub covariance: Matrix3<T>,
}

/// Output of [`run_estimator`]: one step per wheel frame.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateTrace<T: Real> {
    pub kind: FilterKind,
    pub steps: Vec<TraceStep<T>>,
    /// Updates skipped because the innovation covariance was not invertible.
    pub skipped_updates: usize,
}

impl<T: Real> EstimateTrace<T> {
    /// Euclidean position error of the final step.
    pub fn final_position_error(&self) -> T {
        self.steps
            .last()
            .map(|s| (s.error.0 * s.error.0 + s.error.1 * s.error.1).sqrt())
            .unwrap_or_else(T::zero)
    }
}

enum Event<T> {
    Imu(T, T),
    Vo(T, Pose2<T>),
}

impl<T: Copy> Event<T> {
    fn t(&self) -> T {
        match self {
            Event::Imu(t, _) => *t,
            Event::Vo(t, _) => *t,
        }
    }
}

fn check_sorted<T: Real>(
    times: impl Iterator<Item = T>,
    channel: &'static str,
) -> Result<(), FilterError> {
    let mut prev: Option<T> = None;
    for (i, t) in times.enumerate() {
        if let Some(p) = prev {
            if !(t > p) {
                return Err(FilterError::UnorderedEvents { channel, index: i });
            }
        }
        prev = Some(t);
    }
    Ok(())
}

/// Run one estimator over a recording, fusing the sensor channels in time
/// order. The belief starts at the recording's true start pose with the
/// configured initial covariance; the output is aligned to the frame
/// timestamps.
pub fn run_estimator<T: Real>(
    recording: &Recording<T>,
    params: &KinematicParams<T>,
    kind: FilterKind,
    config: &EstimatorConfig<T>,
) -> Result<EstimateTrace<T>, FilterError> {
    params.validate()?;
    if recording.frames.is_empty() || recording.truth.len() != recording.frames.len() {
        return Err(FilterError::MalformedRecording {
            what: "truth must align 1:1 with frames",
        });
    }
    check_sorted(recording.frames.iter().map(|f| f.t), "frame")?;
    check_sorted(recording.imu_yaw.iter().map(|s| s.0), "imu")?;
    check_sorted(recording.vo_pose.iter().map(|s| s.0), "vo")?;
    config.ukf.validate()?;

    let process = ProcessModel {
        params: *params,
        process_noise: config.process_noise,
    };
    let imu_model = MeasurementModel::ImuYaw {
        variance: config.imu_yaw_variance,
    };
    let vo_model = MeasurementModel::VoPose {
        covariance: config.vo_covariance,
    };

    // merge the measurement channels; IMU wins ties so fusion order is fixed
    let mut events: Vec<Event<T>> = Vec::with_capacity(recording.imu_yaw.len() + recording.vo_pose.len());
    {
        let mut i = 0;
        let mut v = 0;
        while i < recording.imu_yaw.len() || v < recording.vo_pose.len() {
            let take_imu = match (recording.imu_yaw.get(i), recording.vo_pose.get(v)) {
                (Some(a), Some(b)) => a.0 <= b.0,
                (Some(_), None) => true,
                _ => false,
            };
            if take_imu {
                let (t, y) = recording.imu_yaw[i];
                events.push(Event::Imu(t, y));
                i += 1;
            } else {
                let (t, p) = recording.vo_pose[v];
                events.push(Event::Vo(t, p));
                v += 1;
            }
        }
    }

    let mut belief = GaussianBelief::from_pose(recording.truth[0], config.initial_covariance);
    let mut skipped = 0usize;
    let mut next_event = 0usize;

    let predict = |belief: &GaussianBelief<T>,
                   frame_idx: usize,
                   dt: T|
     -> Result<GaussianBelief<T>, FilterError> {
        if !(dt > T::zero()) {
            return Ok(*belief);
        }
        let frame = &recording.frames[frame_idx];
        match kind {
            FilterKind::Ukf => ukf_predict(belief, frame, dt, &process, &config.ukf),
            _ => ekf_predict(belief, frame, dt, &process),
        }
    };
    let update = |belief: &GaussianBelief<T>, ev: &Event<T>| -> Result<UpdateOutcome<T>, FilterError> {
        let (z, model) = match ev {
            Event::Imu(_, y) => (Measurement::ImuYaw(*y), &imu_model),
            Event::Vo(_, p) => (Measurement::VoPose(*p), &vo_model),
        };
        match kind {
            FilterKind::Ukf => ukf_update(belief, &z, model, &config.ukf),
            FilterKind::Ekf => ekf_update(belief, &z, model),
            FilterKind::OdomOnly => Ok(UpdateOutcome {
                belief: *belief,
                skipped: false,
            }),
        }
    };

    let record = |belief: &GaussianBelief<T>, idx: usize, steps: &mut Vec<TraceStep<T>>| {
        let truth = recording.truth[idx];
        let est = belief.pose();
        let e = (
            est.x - truth.x,
            est.y - truth.y,
            angle_diff(est.theta, truth.theta),
        );
        let ev = nalgebra::Vector3::new(e.0, e.1, e.2);
        let nees = belief
            .cov
            .try_inverse()
            .map(|pinv| ev.dot(&(pinv * ev)))
            .unwrap_or_else(|| convert(f64::NAN));
        steps.push(TraceStep {
            t: recording.frames[idx].t,
            estimate: est,
            truth,
            error: e,
            nees,
            covariance: belief.cov,
        });
    };

    let mut steps = Vec::with_capacity(recording.frames.len());

    // measurements at or before the first frame time update the initial belief
    let t0 = recording.frames[0].t;
    while next_event < events.len() && events[next_event].t() <= t0 {
        if kind != FilterKind::OdomOnly {
            let out = update(&belief, &events[next_event])?;
            belief = out.belief;
            skipped += usize::from(out.skipped);
        }
        next_event += 1;
    }
    record(&belief, 0, &mut steps);

    for k in 0..recording.frames.len() - 1 {
        let target = recording.frames[k + 1].t;
        let mut t_cur = recording.frames[k].t;
        while next_event < events.len() && events[next_event].t() <= target {
            let ev_t = events[next_event].t();
            belief = predict(&belief, k, ev_t - t_cur)?;
            t_cur = ev_t;
            if kind != FilterKind::OdomOnly {
                let out = update(&belief, &events[next_event])?;
                belief = out.belief;
                skipped += usize::from(out.skipped);
            }
            next_event += 1;
        }
        belief = predict(&belief, k, target - t_cur)?;
        record(&belief, k + 1, &mut steps);
    }

    Ok(EstimateTrace {
        kind,
        steps,
        skipped_updates: skipped,
    })
}
