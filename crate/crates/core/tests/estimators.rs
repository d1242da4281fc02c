//! End-to-end estimator tests: fusion against the simulator's disturbance
//! scenarios, the closed-form Kalman filter oracle on a linear system, and
//! filter consistency (NEES) under matched noise.

use fourwis::filter::{
    ekf_predict, ekf_update, process_mean, run_estimator,
    EstimatorConfig, FilterKind, GaussianBelief, Measurement, MeasurementModel, ProcessModel,
};
use fourwis::kinematics::{FrameKinematics, KinematicParams, Pose2, WheelFrame};
use fourwis::odometry::integrate_recording;
use fourwis::sim::{simulate_recording, DisturbanceConfig, Recording, RecordingMeta};
use fourwis::trajectory::{default_calibration_specs, TrajectoryKind, TrajectorySpec};
use nalgebra::{Matrix3, Vector3};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn line_x_spec(duration: f64) -> TrajectorySpec<f64> {
    let mut s = default_calibration_specs::<f64>()[0];
    s.duration = duration;
    s
}

fn noisy_sensors(seed: u64) -> DisturbanceConfig<f64> {
    DisturbanceConfig {
        imu_yaw_sigma: 0.01,
        vo_pos_sigma: 0.005,
        vo_yaw_sigma: 0.01,
        rng_seed: seed,
        ..DisturbanceConfig::default()
    }
}

#[test]
fn zero_noise_all_filters_track_truth() {
    let params = KinematicParams::<f64>::nominal();
    let rec = simulate_recording(
        &params,
        &line_x_spec(6.0),
        &DisturbanceConfig {
            rng_seed: 1,
            ..DisturbanceConfig::default()
        },
    )
    .unwrap();
    let config = EstimatorConfig::matched_to(&DisturbanceConfig::default());
    for kind in [FilterKind::OdomOnly, FilterKind::Ekf, FilterKind::Ukf] {
        let trace = run_estimator(&rec, &params, kind, &config).unwrap();
        let worst = trace
            .steps
            .iter()
            .map(|s| (s.error.0.powi(2) + s.error.1.powi(2)).sqrt())
            .fold(0.0f64, f64::max);
        assert!(worst < 1e-3, "{kind:?} worst position error {worst}");
    }
}

#[test]
fn odom_only_equals_dead_reckoning_exactly() {
    let params = KinematicParams::<f64>::nominal();
    // spin covers multi-turn headings, line covers translation
    for spec_idx in [0usize, 4] {
        let mut spec = default_calibration_specs::<f64>()[spec_idx];
        spec.duration = 5.0;
        let rec = simulate_recording(&params, &spec, &noisy_sensors(3)).unwrap();
        let trace = run_estimator(
            &rec,
            &params,
            FilterKind::OdomOnly,
            &EstimatorConfig::default(),
        )
        .unwrap();
        let reference = integrate_recording(&params, &rec.frames, rec.truth[0]).unwrap();
        assert_eq!(trace.steps.len(), reference.len());
        for (step, pose) in trace.steps.iter().zip(&reference) {
            assert_eq!(step.estimate.x, pose.x);
            assert_eq!(step.estimate.y, pose.y);
            assert_eq!(step.estimate.theta, pose.theta);
        }
    }
}

#[test]
fn slip_line_x_fusion_beats_dead_reckoning() {
    let params = KinematicParams::<f64>::nominal();
    let mut disturbance = noisy_sensors(7);
    disturbance.slip_ratio = [0.1; 4];
    let rec = simulate_recording(&params, &line_x_spec(13.0), &disturbance).unwrap();
    let config = EstimatorConfig::matched_to(&disturbance);

    let odom = run_estimator(&rec, &params, FilterKind::OdomOnly, &config).unwrap();
    let ekf = run_estimator(&rec, &params, FilterKind::Ekf, &config).unwrap();
    let ukf = run_estimator(&rec, &params, FilterKind::Ukf, &config).unwrap();

    let e_odom = odom.final_position_error();
    let e_ekf = ekf.final_position_error();
    let e_ukf = ukf.final_position_error();
    // 10% slip on a 1 m line leaves dead reckoning ~0.1 m short
    assert!((e_odom - 0.1).abs() < 0.02, "odom error {e_odom}");
    assert!(e_ekf < 0.02, "ekf error {e_ekf}");
    assert!(e_ukf < 0.02, "ukf error {e_ukf}");
    assert!(e_ekf < e_odom && e_ukf < e_odom);
}

#[test]
fn gravity_line_y_fusion_compensates() {
    let params = KinematicParams::<f64>::nominal();
    let mut spec = default_calibration_specs::<f64>()[1];
    spec.duration = 13.0;
    let mut disturbance = noisy_sensors(9);
    disturbance.gravity_drift = 0.0012;
    let rec = simulate_recording(&params, &spec, &disturbance).unwrap();
    let config = EstimatorConfig::matched_to(&disturbance);

    let x_err = |kind: FilterKind| {
        let trace = run_estimator(&rec, &params, kind, &config).unwrap();
        trace.steps.last().unwrap().error.0.abs()
    };
    let odom = x_err(FilterKind::OdomOnly);
    let ekf = x_err(FilterKind::Ekf);
    let ukf = x_err(FilterKind::Ukf);
    assert!(odom > 0.05, "gravity drift should displace dead reckoning, got {odom}");
    assert!(ekf < odom && ukf < odom, "odom {odom}, ekf {ekf}, ukf {ukf}");
    assert!(ekf < 0.2 * odom && ukf < 0.2 * odom);
}

#[test]
fn boundary_measurement_ties_predict_first() {
    let params = KinematicParams::<f64>::nominal();
    let mut frames = Vec::new();
    for k in 0..3 {
        let mut f = WheelFrame::zeroed(0.1 * k as f64);
        f.wheel_rate = [4.0, 4.1, 3.9, 4.0];
        f.steer = [0.05, -0.02, 0.01, 0.0];
        for i in 0..4 {
            f.speed[i] = f.wheel_rate[i] * params.wheel_radius[i];
        }
        frames.push(f);
    }
    let truth = vec![Pose2::origin(); 3];
    let vo_value = Pose2::new(0.011, -0.002, 0.003);
    let rec = Recording {
        frames: frames.clone(),
        truth,
        imu_yaw: vec![],
        vo_pose: vec![(0.1, vo_value)], // exactly on the second frame boundary
        meta: RecordingMeta {
            kind: TrajectoryKind::LineX,
            repetition: 0,
            seed: 0,
        },
    };
    let config = EstimatorConfig::<f64>::default();
    let trace = run_estimator(&rec, &params, FilterKind::Ekf, &config).unwrap();

    // manual replay: predict over the full first interval, then update, then
    // the second interval; the zero-length leftover predict must be a no-op
    let model = ProcessModel {
        params,
        process_noise: config.process_noise,
    };
    let vo_model = MeasurementModel::VoPose {
        covariance: config.vo_covariance,
    };
    let mut belief = GaussianBelief::from_pose(rec.truth[0], config.initial_covariance);
    belief = ekf_predict(&belief, &frames[0], 0.1, &model).unwrap();
    belief = ekf_update(&belief, &Measurement::VoPose(vo_value), &vo_model)
        .unwrap()
        .belief;
    assert_eq!(trace.steps[1].estimate, belief.pose());
    assert_eq!(trace.steps[1].covariance, belief.cov);
    belief = ekf_predict(&belief, &frames[1], 0.1, &model).unwrap();
    assert_eq!(trace.steps[2].estimate, belief.pose());
}

#[test]
fn unordered_measurements_rejected() {
    let params = KinematicParams::<f64>::nominal();
    let rec = simulate_recording(
        &params,
        &line_x_spec(1.0),
        &DisturbanceConfig {
            rng_seed: 2,
            ..DisturbanceConfig::default()
        },
    )
    .unwrap();
    let mut bad = rec.clone();
    bad.imu_yaw = vec![(0.5, 0.0), (0.4, 0.0)];
    let err = run_estimator(
        &bad,
        &params,
        FilterKind::Ekf,
        &EstimatorConfig::default(),
    )
    .unwrap_err();
    assert!(matches!(
        err,
        fourwis::filter::FilterError::UnorderedEvents { channel: "imu", .. }
    ));
}

/// Plain textbook Kalman filter for the linear system (identity process), the
/// oracle for the EKF/UKF equivalence check. Kept independent of the filter
/// module's update algebra.
struct LinearKalman {
    x: Vector3<f64>,
    p: Matrix3<f64>,
}

impl LinearKalman {
    fn predict(&mut self, q: &Matrix3<f64>, dt: f64) {
        self.p += q * dt;
    }

    fn update_yaw(&mut self, z: f64, r: f64) {
        let h = Vector3::new(0.0, 0.0, 1.0);
        let s = (h.transpose() * self.p * h)[(0, 0)] + r;
        let k = self.p * h / s;
        self.x += k * (z - self.x[2]);
        self.p = (Matrix3::identity() - k * h.transpose()) * self.p;
    }

    fn update_pose(&mut self, z: &Vector3<f64>, r: &Matrix3<f64>) {
        let s = self.p + r;
        let k = self.p * s.try_inverse().unwrap();
        self.x += k * (z - self.x);
        self.p = (Matrix3::identity() - k) * self.p;
    }
}

#[test]
fn ekf_and_ukf_match_closed_form_kalman_on_linear_system() {
    // zero wheel commands make the process model the identity map, so the
    // whole system is linear-Gaussian
    let params = KinematicParams::<f64>::nominal();
    let dt = 0.01;
    let steps = 1000usize;
    let frames: Vec<WheelFrame<f64>> = (0..=steps)
        .map(|k| WheelFrame::zeroed(dt * k as f64))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut imu = Vec::new();
    let mut vo = Vec::new();
    for k in 1..=steps {
        let t = dt * k as f64;
        imu.push((t, 0.05 * normal.sample(&mut rng)));
        if k % 3 == 0 {
            vo.push((
                t,
                Pose2::new(
                    0.1 * normal.sample(&mut rng),
                    0.1 * normal.sample(&mut rng),
                    0.05 * normal.sample(&mut rng),
                ),
            ));
        }
    }
    let rec = Recording {
        truth: vec![Pose2::origin(); frames.len()],
        frames,
        imu_yaw: imu.clone(),
        vo_pose: vo.clone(),
        meta: RecordingMeta {
            kind: TrajectoryKind::LineX,
            repetition: 0,
            seed: 17,
        },
    };
    let config = EstimatorConfig::<f64>::default();
    let ekf = run_estimator(&rec, &params, FilterKind::Ekf, &config).unwrap();
    let ukf = run_estimator(&rec, &params, FilterKind::Ukf, &config).unwrap();

    // oracle replay with the same event schedule
    let mut kf = LinearKalman {
        x: Vector3::zeros(),
        p: config.initial_covariance,
    };
    let r_yaw = config.imu_yaw_variance;
    let mut imu_iter = imu.iter().peekable();
    let mut vo_iter = vo.iter().peekable();
    for k in 1..=steps {
        let t = dt * k as f64;
        kf.predict(&config.process_noise, dt);
        while imu_iter.peek().is_some_and(|(ti, _)| *ti <= t) {
            let (_, z) = imu_iter.next().unwrap();
            kf.update_yaw(*z, r_yaw);
        }
        while vo_iter.peek().is_some_and(|(tv, _)| *tv <= t) {
            let (_, z) = vo_iter.next().unwrap();
            kf.update_pose(&Vector3::new(z.x, z.y, z.theta), &config.vo_covariance);
        }
        for (name, trace) in [("ekf", &ekf), ("ukf", &ukf)] {
            let est = trace.steps[k].estimate;
            let d = Vector3::new(est.x, est.y, est.theta) - kf.x;
            assert!(
                d.amax() < 1e-9,
                "{name} deviates from the closed form at step {k}: {}",
                d.amax()
            );
            assert!(
                (trace.steps[k].covariance - kf.p).amax() < 1e-9,
                "{name} covariance deviates at step {k}"
            );
        }
    }
}

#[test]
fn monte_carlo_nees_stays_in_chi_square_band() {
    let params = KinematicParams::<f64>::nominal();
    let spec = line_x_spec(4.0);
    let base = simulate_recording(
        &params,
        &spec,
        &DisturbanceConfig {
            rng_seed: 5,
            ..DisturbanceConfig::default()
        },
    )
    .unwrap();
    let config = EstimatorConfig {
        initial_covariance: Matrix3::identity() * 1e-12,
        ..EstimatorConfig::matched_to(&noisy_sensors(0))
    };
    let model = ProcessModel {
        params,
        process_noise: config.process_noise,
    };
    let runs = 50usize;
    let n_frames = base.frames.len();
    let dt = base.frames[1].t - base.frames[0].t;

    let run_once = |kind: FilterKind, run_idx: u64| -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + run_idx);
        let normal = Normal::new(0.0, 1.0).unwrap();
        // truth generated by the filter's own process model plus matched noise
        let mut truth = vec![Pose2::origin(); n_frames];
        let mut state = Vector3::zeros();
        for k in 0..n_frames - 1 {
            let fk = FrameKinematics::from_frame(&base.frames[k]);
            state = process_mean(&model, &state, &fk, dt);
            for j in 0..3 {
                state[j] +=
                    (config.process_noise[(j, j)] * dt).sqrt() * normal.sample(&mut rng);
            }
            truth[k + 1] = Pose2::new(state[0], state[1], state[2]);
        }
        let mut imu = Vec::new();
        let mut vo = Vec::new();
        for k in (2..n_frames).step_by(2) {
            imu.push((
                base.frames[k].t,
                truth[k].theta + config.imu_yaw_variance.sqrt() * normal.sample(&mut rng),
            ));
        }
        for k in (3..n_frames).step_by(3) {
            vo.push((
                base.frames[k].t,
                Pose2::new(
                    truth[k].x + config.vo_covariance[(0, 0)].sqrt() * normal.sample(&mut rng),
                    truth[k].y + config.vo_covariance[(1, 1)].sqrt() * normal.sample(&mut rng),
                    truth[k].theta
                        + config.vo_covariance[(2, 2)].sqrt() * normal.sample(&mut rng),
                ),
            ));
        }
        let rec = Recording {
            frames: base.frames.clone(),
            truth,
            imu_yaw: imu,
            vo_pose: vo,
            meta: base.meta,
        };
        let trace = run_estimator(&rec, &params, kind, &config).unwrap();
        trace.steps.iter().skip(1).map(|s| s.nees).collect()
    };

    let chi = ChiSquared::new(3.0 * runs as f64).unwrap();
    let lo = chi.inverse_cdf(0.025) / runs as f64;
    let hi = chi.inverse_cdf(0.975) / runs as f64;

    for kind in [FilterKind::Ekf, FilterKind::Ukf] {
        let per_run: Vec<Vec<f64>> = (0..runs).map(|r| run_once(kind, r as u64)).collect();
        let steps = per_run[0].len();
        let mut grand = 0.0;
        for k in 0..steps {
            let avg: f64 = per_run.iter().map(|r| r[k]).sum::<f64>() / runs as f64;
            grand += avg;
        }
        grand /= steps as f64;
        assert!(
            grand > lo && grand < hi,
            "{kind:?} average NEES {grand} outside [{lo}, {hi}]"
        );
    }
}

#[test]
fn covariances_stay_symmetric_psd_over_ten_thousand_steps() {
    let params = KinematicParams::<f64>::nominal();
    // 100 s of gentle motion at 100 Hz
    let mut spec = line_x_spec(100.0);
    spec.displacement = 3.0;
    let mut disturbance = noisy_sensors(23);
    disturbance.slip_ratio = [0.03; 4];
    let rec = simulate_recording(&params, &spec, &disturbance).unwrap();
    assert!(rec.frames.len() > 10_000);
    let config = EstimatorConfig::matched_to(&disturbance);
    for kind in [FilterKind::Ekf, FilterKind::Ukf] {
        let trace = run_estimator(&rec, &params, kind, &config).unwrap();
        let mut worst_asym = 0.0f64;
        let mut worst_eig = f64::MAX;
        for s in &trace.steps {
            worst_asym = worst_asym.max((s.covariance - s.covariance.transpose()).amax());
            worst_eig = worst_eig.min(
                s.covariance
                    .symmetric_eigenvalues()
                    .iter()
                    .fold(f64::MAX, |a, b| a.min(*b)),
            );
        }
        assert!(worst_asym < 1e-12, "{kind:?} asymmetry {worst_asym:e}");
        assert!(worst_eig > -1e-10, "{kind:?} min eigenvalue {worst_eig:e}");
    }
}
