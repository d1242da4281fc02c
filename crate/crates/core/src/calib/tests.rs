use super::*;
use crate::odometry::integrate_recording;
use crate::sim::{make_calibration_dataset_with, simulate_recording, DisturbanceConfig};
use crate::trajectory::default_calibration_specs;
use nalgebra::DMatrix;

fn quick_specs(line_s: f64, circle_s: f64) -> [TrajectorySpec<f64>; 6] {
    let mut specs = default_calibration_specs::<f64>();
    for s in &mut specs {
        s.duration = if s.kind.is_circle() { circle_s } else { line_s };
    }
    specs
}

fn noiseless(seed: u64) -> DisturbanceConfig<f64> {
    DisturbanceConfig {
        rng_seed: seed,
        ..DisturbanceConfig::default()
    }
}

/// The acceptance-style injected mismatch: +3% r_1, -2% y_w2, +4% x_w3.
fn perturbed_truth() -> KinematicParams<f64> {
    let mut p = KinematicParams::nominal();
    p.wheel_radius[0] *= 1.03;
    p.wheel_y[1] *= 0.98;
    p.wheel_x[2] *= 1.04;
    p
}

#[test]
fn param_vector_round_trips() {
    let p = perturbed_truth();
    let z = ParamVector::from_params(&p);
    assert_eq!(z.to_params(), p);
    assert_eq!(z.0[8], p.wheel_radius[0]);
    assert_eq!(z.0[5], p.wheel_y[1]);
    assert_eq!(z.0[2], p.wheel_x[2]);
}

#[test]
fn bounds_handle_negative_entries() {
    let b = Bounds::<f64>::five_percent_of_nominal();
    b.validate().unwrap();
    let z = ParamVector::<f64>::nominal();
    assert!(b.contains_strictly(&z));
    // x_w2 is negative: lower must be the more negative scaled value
    assert!((b.lower[1] - (-0.1125 * 1.05)).abs() < 1e-15);
    assert!((b.upper[1] - (-0.1125 * 0.95)).abs() < 1e-15);
    // true perturbed parameters stay inside the default bounds
    assert!(b.contains(&ParamVector::from_params(&perturbed_truth())));
}

#[test]
fn cost_at_true_params_is_integrator_floor() {
    let p = KinematicParams::nominal();
    let ds = make_calibration_dataset_with(&p, &p, &quick_specs(4.0, 8.0), &noiseless(1)).unwrap();
    let c = cost(&ParamVector::from_params(&p), &ds).unwrap();
    assert!(c < 1e-6, "cost at truth {c}");
}

#[test]
fn cost_increases_monotonically_with_radius_error() {
    let p = KinematicParams::nominal();
    let specs = [quick_specs(4.0, 8.0)[0]];
    let ds = make_calibration_dataset_with(&p, &p, &specs, &noiseless(2)).unwrap();
    let ctx = CostContext::new(&ds).unwrap();
    let mut last = 0.0;
    for scale in [1.01, 1.02, 1.03] {
        let mut q = p;
        q.wheel_radius[0] *= scale;
        let c = ctx.cost(&ParamVector::from_params(&q)).unwrap();
        assert!(c > last, "cost {c} not increasing at scale {scale}");
        last = c;
    }
}

#[test]
fn single_step_recording_with_matching_truth_costs_zero() {
    let p = KinematicParams::nominal();
    let spec = TrajectorySpec {
        kind: TrajectoryKind::LineX,
        displacement: 0.0,
        radius: 0.5,
        duration: 0.01,
        sample_dt: 0.01,
    };
    let rec = simulate_recording(&p, &spec, &noiseless(3)).unwrap();
    assert_eq!(rec.frames.len(), 2);
    let ds = Dataset {
        recordings: vec![rec],
    };
    let c = cost(&ParamVector::from_params(&p), &ds).unwrap();
    assert_eq!(c, 0.0);
}

#[test]
fn cost_invariant_under_recording_permutation() {
    let p = perturbed_truth();
    let nominal = KinematicParams::nominal();
    let ds = make_calibration_dataset_with(&p, &p, &quick_specs(3.0, 6.0), &noiseless(4)).unwrap();
    let z = ParamVector::from_params(&nominal);
    let c1 = cost(&z, &ds).unwrap();
    let mut shuffled = ds.clone();
    shuffled.recordings.rotate_left(7);
    shuffled.recordings.swap(0, 11);
    let c2 = cost(&z, &shuffled).unwrap();
    assert!((c1 - c2).abs() <= 1e-12 * c1.max(1.0), "{c1} vs {c2}");
}

#[test]
fn residual_norm_equals_cost() {
    let p = perturbed_truth();
    let ds = make_calibration_dataset_with(
        &KinematicParams::nominal(),
        &KinematicParams::nominal(),
        &[quick_specs(3.0, 6.0)[2]],
        &noiseless(5),
    )
    .unwrap();
    let ctx = CostContext::new(&ds).unwrap();
    let z = ParamVector::from_params(&p);
    let r = ctx.residuals(&z).unwrap();
    assert_eq!(r.len(), ctx.residual_len());
    let norm: f64 = r.iter().map(|v| v * v).sum();
    let c = ctx.cost(&z).unwrap();
    assert!((norm - c).abs() <= 1e-12 * c.max(1.0));
}

#[test]
fn prepared_path_matches_integrate_recording_bitwise() {
    let truth_params = perturbed_truth();
    let eval_params = KinematicParams::nominal();
    let spec = quick_specs(3.0, 6.0)[3];
    let rec = simulate_recording(&truth_params, &spec, &noiseless(6)).unwrap();
    let trace = integrate_recording(&eval_params, &rec.frames, rec.truth[0]).unwrap();
    let prepared = PreparedRecording::new(&rec, 1.0).unwrap();
    let mut idx = 1;
    prepared.visit_errors(&eval_params, |ex, ey, eth| {
        let tru = rec.truth[idx];
        let est = trace[idx];
        assert_eq!(ex, est.x - tru.x);
        assert_eq!(ey, est.y - tru.y);
        assert_eq!(eth, crate::scalar::angle_diff(est.theta, tru.theta));
        idx += 1;
    });
    assert_eq!(idx, rec.frames.len());
}

#[test]
fn invalid_z_reported_with_offending_vector() {
    let p = KinematicParams::nominal();
    let ds =
        make_calibration_dataset_with(&p, &p, &[quick_specs(2.0, 4.0)[0]], &noiseless(7)).unwrap();
    let mut z = ParamVector::from_params(&p);
    z.0[9] = -0.01; // negative radius
    let err = cost(&z, &ds).unwrap_err();
    match err {
        CalibrationError::CostEvaluation { z: bad, .. } => {
            assert_eq!(bad.len(), PARAM_DIM);
            assert!((bad[9] + 0.01).abs() < 1e-15);
        }
        other => panic!("unexpected error {other:?}"),
    }
}

/// Conditioning of the stacked-residual Jacobian at nominal. Without the
/// per-wheel steering excitation the six trajectory kinds drive every wheel
/// with the same steering time-signature and several parameter combinations
/// become unobservable; with it the problem has full rank.
#[test]
fn steering_excitation_restores_identifiability() {
    let p = KinematicParams::nominal();
    let condition = |excitation: f64| -> (f64, f64) {
        let mut d = noiseless(8);
        d.steer_excitation = excitation;
        let ds = make_calibration_dataset_with(&p, &p, &quick_specs(4.0, 8.0), &d).unwrap();
        let ctx = CostContext::new(&ds).unwrap();
        let z0 = ParamVector::from_params(&p);
        let r0 = ctx.residuals(&z0).unwrap();
        let m = r0.len();
        let mut cols: Vec<Vec<f64>> = Vec::with_capacity(PARAM_DIM);
        for j in 0..PARAM_DIM {
            let h = 1e-6 * z0.0[j].abs().max(1e-3);
            let mut zj = z0;
            zj.0[j] += h;
            let rj = ctx.residuals(&zj).unwrap();
            cols.push((0..m).map(|k| (rj[k] - r0[k]) / h).collect());
        }
        let mut jtj = DMatrix::<f64>::zeros(PARAM_DIM, PARAM_DIM);
        for i in 0..PARAM_DIM {
            for j in i..PARAM_DIM {
                let acc: f64 = (0..m).map(|k| cols[i][k] * cols[j][k]).sum();
                jtj[(i, j)] = acc;
                jtj[(j, i)] = acc;
            }
        }
        let eig = jtj.symmetric_eigenvalues();
        let max = eig.iter().cloned().fold(f64::MIN, f64::max);
        let min = eig.iter().cloned().fold(f64::MAX, f64::min);
        (min.max(0.0).sqrt(), max.sqrt())
    };

    let (smin_off, smax_off) = condition(0.0);
    let (smin_on, smax_on) = condition(0.03);
    println!(
        "singular值 range: excitation off [{smin_off:.3e}, {smax_off:.3e}], on [{smin_on:.3e}, {smax_on:.3e}]"
    );
    assert!(
        smin_off / smax_off < 1e-7,
        "expected rank deficiency without excitation, got ratio {}",
        smin_off / smax_off
    );
    assert!(
        smin_on / smax_on > 1e-6,
        "expected full rank with excitation, got ratio {}",
        smin_on / smax_on
    );
}

#[test]
fn lm_recovers_injected_perturbation() {
    let truth = perturbed_truth();
    let ds = make_calibration_dataset_with(
        &truth,
        &truth,
        &quick_specs(4.0, 8.0),
        &noiseless(9),
    )
    .unwrap();
    let z0 = ParamVector::<f64>::nominal();
    let bounds = Bounds::five_percent_of_nominal();
    let report = calibrate(&ds, &z0, &bounds, Method::Lm, &CalibrateOptions::default()).unwrap();
    let z_true = ParamVector::from_params(&truth);
    let dev = report.solution.max_relative_deviation(&z_true);
    assert!(dev < 1e-3, "max relative deviation {dev}");
    assert!(report.final_cost <= report.initial_cost);
    assert!(bounds.contains(&report.solution));
}

#[test]
fn lm_stationary_start_stops_immediately() {
    let truth = KinematicParams::nominal();
    let ds = make_calibration_dataset_with(
        &truth,
        &truth,
        &[quick_specs(3.0, 6.0)[0], quick_specs(3.0, 6.0)[4]],
        &noiseless(10),
    )
    .unwrap();
    let z0 = ParamVector::from_params(&truth);
    let bounds = Bounds::five_percent_of_nominal();
    let report = calibrate(&ds, &z0, &bounds, Method::Lm, &CalibrateOptions::default()).unwrap();
    assert!(report.iterations <= 1, "iterations {}", report.iterations);
    assert_eq!(report.status, SolveStatus::Converged);
    assert_eq!(report.final_cost, report.initial_cost);
}

#[test]
fn calibrate_rejects_start_outside_bounds() {
    let p = KinematicParams::nominal();
    let ds =
        make_calibration_dataset_with(&p, &p, &[quick_specs(2.0, 4.0)[0]], &noiseless(11)).unwrap();
    let mut z0 = ParamVector::from_params(&p);
    z0.0[0] *= 1.2;
    let err = calibrate(
        &ds,
        &z0,
        &Bounds::five_percent_of_nominal(),
        Method::Lm,
        &CalibrateOptions::default(),
    )
    .unwrap_err();
    assert_eq!(err, CalibrationError::StartOutOfBounds { index: 0 });
}

#[test]
fn error_table_perfect_params_near_zero() {
    let p = KinematicParams::nominal();
    let ds = make_calibration_dataset_with(&p, &p, &quick_specs(3.0, 6.0), &noiseless(12)).unwrap();
    let table = error_table(&ds, &ParamVector::from_params(&p)).unwrap();
    assert_eq!(table.len(), 6);
    for row in table {
        assert!(row.e_x_max < 1e-4);
        assert!(row.e_y_max < 1e-4);
        assert!(row.e_theta_max < 1e-4);
    }
}

#[test]
fn error_table_constant_error_max_equals_avg() {
    // hand-built recording whose per-step error is constant after the anchor
    let p = KinematicParams::nominal();
    let mut frames = Vec::new();
    let mut truth = Vec::new();
    for k in 0..4 {
        frames.push(crate::kinematics::WheelFrame::zeroed(0.1 * k as f64));
        // truth drifts while the commands are zero: constant +0.02 m x offset
        truth.push(Pose2::new(if k == 0 { 0.0 } else { 0.02 }, 0.0, 0.0));
    }
    let rec = Recording {
        frames,
        truth,
        imu_yaw: vec![],
        vo_pose: vec![],
        meta: crate::sim::RecordingMeta {
            kind: TrajectoryKind::LineX,
            repetition: 0,
            seed: 0,
        },
    };
    let ds = Dataset {
        recordings: vec![rec],
    };
    let table = error_table(&ds, &ParamVector::from_params(&p)).unwrap();
    assert_eq!(table.len(), 1);
    assert_eq!(table[0].e_x_max, table[0].e_x_avg);
    assert!((table[0].e_x_max - 0.02).abs() < 1e-15);
}

#[test]
fn lm_step_on_dataset_moves_toward_truth() {
    let truth = perturbed_truth();
    let ds = make_calibration_dataset_with(
        &truth,
        &truth,
        &[quick_specs(3.0, 6.0)[0], quick_specs(3.0, 6.0)[2]],
        &noiseless(13),
    )
    .unwrap();
    let z0 = ParamVector::<f64>::nominal();
    let ctx = CostContext::new(&ds).unwrap();
    let c0 = ctx.cost(&z0).unwrap();
    let (z1, damping) = lm_step(&z0, &ds, 1e-3).unwrap();
    let c1 = ctx.cost(&z1).unwrap();
    assert!(c1 < c0, "step must descend: {c1} vs {c0}");
    assert!(damping < 1e-3, "accepted step halves the damping");
}

#[test]
fn kind_weights_scale_cost_contributions() {
    let truth = perturbed_truth();
    let nominal = KinematicParams::nominal();
    let ds =
        make_calibration_dataset_with(&truth, &truth, &quick_specs(2.0, 4.0), &noiseless(21))
            .unwrap();
    let z = ParamVector::from_params(&nominal);

    let total = CostContext::new(&ds).unwrap().cost(&z).unwrap();
    // zeroing one kind removes exactly its contribution
    let mut without_circles = KindWeights::default();
    without_circles.set(TrajectoryKind::CircleCcw, 0.0);
    without_circles.set(TrajectoryKind::CircleCw, 0.0);
    let partial = CostContext::with_weights(&ds, &without_circles)
        .unwrap()
        .cost(&z)
        .unwrap();
    let circles_only: f64 = ds
        .recordings
        .iter()
        .filter(|r| r.meta.kind.is_circle())
        .map(|r| {
            let single = Dataset {
                recordings: vec![r.clone()],
            };
            cost(&z, &single).unwrap()
        })
        .sum();
    assert!(
        (total - (partial + circles_only)).abs() <= 1e-10 * total,
        "{total} vs {partial} + {circles_only}"
    );

    // doubling a kind's weight doubles its share, in cost and residuals alike
    let mut doubled = KindWeights::default();
    doubled.set(TrajectoryKind::LineX, 2.0);
    let ctx = CostContext::with_weights(&ds, &doubled).unwrap();
    let c = ctx.cost(&z).unwrap();
    let r2: f64 = ctx.residuals(&z).unwrap().iter().map(|v| v * v).sum();
    assert!((c - r2).abs() <= 1e-10 * c);
    let lx: f64 = ds
        .recordings
        .iter()
        .filter(|r| r.meta.kind == TrajectoryKind::LineX)
        .map(|r| {
            let single = Dataset {
                recordings: vec![r.clone()],
            };
            cost(&z, &single).unwrap()
        })
        .sum();
    assert!((c - (total + lx)).abs() <= 1e-10 * c, "{c} vs {total} + {lx}");

    let mut bad = KindWeights::default();
    bad.0[0] = -1.0;
    assert_eq!(bad.validate(), Err(CalibrationError::InvalidWeights));
}

#[test]
fn iterative_protocol_final_cost_non_increasing() {
    let truth = perturbed_truth();
    let specs = [quick_specs(3.0, 6.0)[0], quick_specs(3.0, 6.0)[1], quick_specs(3.0, 6.0)[4]];
    let reports = iterative_calibration(
        &truth,
        &specs,
        &noiseless(14),
        &ParamVector::nominal(),
        &Bounds::five_percent_of_nominal(),
        Method::Lm,
        &CalibrateOptions::default(),
        3,
    )
    .unwrap();
    assert_eq!(reports.len(), 3);
    for w in reports.windows(2) {
        // later rounds sit at the numerical floor; allow floor-level slack
        assert!(
            w[1].final_cost <= w[0].final_cost + 1e-18,
            "{} then {}",
            w[0].final_cost,
            w[1].final_cost
        );
    }
}
