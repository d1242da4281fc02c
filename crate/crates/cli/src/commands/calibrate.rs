//! `calibrate`: solve the bounded least-squares calibration on a dataset and
//! emit the report as JSON, a plain-text table set, and a ready-to-load
//! parameter file.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use fourwis::calib::{
    calibrate, Bounds, CalibrationReport, ErrorStats, Method, ParamVector, SolveStatus,
};
use fourwis::kinematics::KinematicParams;

use crate::config::RunConfig;
use crate::dataset::read_dataset;
use crate::error::CliError;

#[derive(Debug)]
pub struct CalibrateSummary {
    pub out_dir: PathBuf,
    pub method: Method,
    pub status: SolveStatus,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub wall_time: std::time::Duration,
}

/// The serialized report. Wall time is deliberately omitted so repeated runs
/// with the same seed produce byte-identical files.
#[derive(Debug, Serialize, Deserialize)]
pub struct ReportFile {
    pub method: Method,
    pub status: SolveStatus,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub initial_params: KinematicParams<f64>,
    pub calibrated_params: KinematicParams<f64>,
    pub errors_before: Vec<ErrorStats<f64>>,
    pub errors_after: Vec<ErrorStats<f64>>,
}

pub fn cmd_calibrate(
    dataset_dir: &Path,
    method: Method,
    config: &RunConfig,
    out_dir: &Path,
    seed: Option<u64>,
) -> Result<CalibrateSummary, CliError> {
    config.validate()?;
    let (dataset, _manifest) = read_dataset(dataset_dir)?;
    let z0 = ParamVector::from_params(&config.robot_params()?);
    let bounds = Bounds::around(&z0, config.calibration.bounds_fraction);
    let options = config.calibrate_options(seed);
    let report = calibrate(&dataset, &z0, &bounds, method, &options)?;

    std::fs::create_dir_all(out_dir).map_err(CliError::io(out_dir))?;
    let file = ReportFile {
        method: report.method,
        status: report.status,
        initial_cost: report.initial_cost,
        final_cost: report.final_cost,
        iterations: report.iterations,
        evaluations: report.evaluations,
        initial_params: z0.to_params(),
        calibrated_params: report.solution.to_params(),
        errors_before: report.errors_before.clone(),
        errors_after: report.errors_after.clone(),
    };
    let json = serde_json::to_string_pretty(&file)
        .map_err(|e| CliError::Dataset(format!("report serialization: {e}")))?;
    let report_json = out_dir.join("report.json");
    std::fs::write(&report_json, json + "\n").map_err(CliError::io(&report_json))?;

    let report_txt = out_dir.join("report.txt");
    std::fs::write(&report_txt, render_report(&z0, &report)).map_err(CliError::io(&report_txt))?;

    let params_json = out_dir.join("params_calibrated.json");
    let params_text = serde_json::to_string_pretty(&report.solution.to_params())
        .map_err(|e| CliError::Dataset(format!("params serialization: {e}")))?;
    std::fs::write(&params_json, params_text + "\n").map_err(CliError::io(&params_json))?;

    Ok(CalibrateSummary {
        out_dir: out_dir.to_path_buf(),
        method: report.method,
        status: report.status,
        initial_cost: report.initial_cost,
        final_cost: report.final_cost,
        iterations: report.iterations,
        evaluations: report.evaluations,
        wall_time: report.wall_time,
    })
}

const PARAM_HEADERS: [&str; 12] = [
    "x_w1", "x_w2", "x_w3", "x_w4", "y_w1", "y_w2", "y_w3", "y_w4", "r_1", "r_2", "r_3", "r_4",
];

/// Millimeter parameter table (two rows: starting point and solution).
fn render_param_table(z0: &ParamVector<f64>, solution: &ParamVector<f64>) -> String {
    let mut out = String::from("parameters (mm)\n");
    let _ = write!(out, "{:<11}", "");
    for h in PARAM_HEADERS {
        let _ = write!(out, "{h:>9}");
    }
    out.push('\n');
    for (label, z) in [("initial", z0), ("calibrated", solution)] {
        let _ = write!(out, "{label:<11}");
        for v in z.0 {
            let _ = write!(out, "{:>9.3}", v * 1000.0);
        }
        out.push('\n');
    }
    out
}

/// Error table in the max/average layout, six significant digits.
pub fn render_error_table(title: &str, rows: &[ErrorStats<f64>]) -> String {
    let mut out = format!("{title}\n");
    let _ = writeln!(
        out,
        "{:<12}{:>13}{:>13}{:>13}{:>13}{:>13}{:>13}",
        "trajectory", "e_x,m", "e_x,a", "e_y,m", "e_y,a", "e_th,m", "e_th,a"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<12}{:>13.5e}{:>13.5e}{:>13.5e}{:>13.5e}{:>13.5e}{:>13.5e}",
            r.kind.name(),
            r.e_x_max,
            r.e_x_avg,
            r.e_y_max,
            r.e_y_avg,
            r.e_theta_max,
            r.e_theta_avg
        );
    }
    out
}

fn render_report(z0: &ParamVector<f64>, report: &CalibrationReport<f64>) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "method: {:?}\nstatus: {:?}\ninitial cost: {:.6e}\nfinal cost: {:.6e}\niterations: {}\nevaluations: {}\n",
        report.method,
        report.status,
        report.initial_cost,
        report.final_cost,
        report.iterations,
        report.evaluations
    );
    out.push_str(&render_param_table(z0, &report.solution));
    out.push('\n');
    out.push_str(&render_error_table(
        "odometry error before calibration",
        &report.errors_before,
    ));
    out.push('\n');
    out.push_str(&render_error_table(
        "odometry error after calibration",
        &report.errors_after,
    ));
    out
}

/// Parse an error table rendered by [`render_error_table`] back into rows of
/// numbers; used by the format round-trip check.
pub fn parse_error_table(text: &str) -> Vec<(String, [f64; 6])> {
    text.lines()
        .skip(2)
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let mut fields = line.split_whitespace();
            let name = fields.next().unwrap_or("").to_string();
            let mut values = [0.0; 6];
            for v in &mut values {
                *v = fields.next().and_then(|f| f.parse().ok()).unwrap_or(f64::NAN);
            }
            (name, values)
        })
        .collect()
}
