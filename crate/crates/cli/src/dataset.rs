//! On-disk dataset format.
//!
//! A dataset directory holds `manifest.json` plus one subdirectory per
//! recording under `recordings/`:
//!
//! ```text
//! <dataset>/
//!   manifest.json
//!   recordings/
//!     rec_000_line_x/
//!       frames.csv   t,speed1..4,steer1..4,wheel_rate1..4,steer_rate1..4
//!       truth.csv    t,x,y,theta
//!       imu.csv      t,yaw
//!       vo.csv       t,x,y,theta
//!     ...
//! ```
//!
//! All numbers are SI, written with 17 significant digits ('.' decimal
//! separator, LF line endings) so a read-back reproduces the in-memory values
//! bit-exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use fourwis::kinematics::{KinematicParams, Pose2, WheelFrame};
use fourwis::sim::{Dataset, DisturbanceConfig, Recording, RecordingMeta};
use fourwis::trajectory::{TrajectoryKind, TrajectorySpec};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// Format a float with 17 significant digits; round-trips `f64` exactly.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Dataset manifest: everything needed to interpret the recording files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    /// Parameters the true motion was generated with.
    pub params: KinematicParams<f64>,
    /// Parameters the wheel commands were computed with.
    pub command_params: KinematicParams<f64>,
    pub disturbance: DisturbanceConfig<f64>,
    pub recordings: Vec<ManifestRecording>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestRecording {
    /// Directory name under `recordings/`.
    pub id: String,
    pub kind: TrajectoryKind,
    pub repetition: u32,
    pub seed: u64,
    pub spec: TrajectorySpec<f64>,
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(CliError::io(path))
}

fn write_csv<R>(
    path: &Path,
    header: &str,
    rows: impl Iterator<Item = R>,
    mut format_row: impl FnMut(&R, &mut String),
) -> Result<(), CliError> {
    let mut out = String::new();
    out.push_str(header);
    out.push('\n');
    for row in rows {
        format_row(&row, &mut out);
        out.push('\n');
    }
    write_file(path, &out)
}

/// Write a dataset directory; `specs` must be indexed parallel to the
/// manifest recordings (one spec per recording).
pub fn write_dataset(
    dir: &Path,
    dataset: &Dataset<f64>,
    specs: &[TrajectorySpec<f64>],
    params: &KinematicParams<f64>,
    command_params: &KinematicParams<f64>,
    disturbance: &DisturbanceConfig<f64>,
) -> Result<Manifest, CliError> {
    assert_eq!(dataset.len(), specs.len(), "one spec per recording");
    let rec_dir = dir.join("recordings");
    fs::create_dir_all(&rec_dir).map_err(CliError::io(&rec_dir))?;

    let mut entries = Vec::with_capacity(dataset.len());
    for (i, (rec, spec)) in dataset.recordings.iter().zip(specs).enumerate() {
        let id = format!("rec_{i:03}_{}", rec.meta.kind.name());
        let d = rec_dir.join(&id);
        fs::create_dir_all(&d).map_err(CliError::io(&d))?;

        write_csv(
            &d.join("frames.csv"),
            "t,speed1,speed2,speed3,speed4,steer1,steer2,steer3,steer4,\
             wheel_rate1,wheel_rate2,wheel_rate3,wheel_rate4,\
             steer_rate1,steer_rate2,steer_rate3,steer_rate4",
            rec.frames.iter(),
            |f, out| {
                let _ = write!(out, "{}", format_float(f.t));
                for group in [&f.speed, &f.steer, &f.wheel_rate, &f.steer_rate] {
                    for v in group.iter() {
                        let _ = write!(out, ",{}", format_float(*v));
                    }
                }
            },
        )?;
        write_csv(&d.join("truth.csv"), "t,x,y,theta", rec.frames.iter().zip(&rec.truth), |(f, p), out| {
            let _ = write!(
                out,
                "{},{},{},{}",
                format_float(f.t),
                format_float(p.x),
                format_float(p.y),
                format_float(p.theta)
            );
        })?;
        write_csv(&d.join("imu.csv"), "t,yaw", rec.imu_yaw.iter(), |(t, y), out| {
            let _ = write!(out, "{},{}", format_float(*t), format_float(*y));
        })?;
        write_csv(&d.join("vo.csv"), "t,x,y,theta", rec.vo_pose.iter(), |(t, p), out| {
            let _ = write!(
                out,
                "{},{},{},{}",
                format_float(*t),
                format_float(p.x),
                format_float(p.y),
                format_float(p.theta)
            );
        })?;

        entries.push(ManifestRecording {
            id,
            kind: rec.meta.kind,
            repetition: rec.meta.repetition,
            seed: rec.meta.seed,
            spec: *spec,
        });
    }

    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        params: *params,
        command_params: *command_params,
        disturbance: *disturbance,
        recordings: entries,
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| CliError::Dataset(format!("manifest serialization: {e}")))?;
    write_file(&dir.join("manifest.json"), &(json + "\n"))?;
    Ok(manifest)
}

fn parse_fields(line: &str, expected: usize, path: &Path, row: usize) -> Result<Vec<f64>, CliError> {
    let fields: Result<Vec<f64>, _> = line.split(',').map(str::parse::<f64>).collect();
    let fields = fields.map_err(|e| {
        CliError::Dataset(format!("{}:{}: bad number: {e}", path.display(), row + 2))
    })?;
    if fields.len() != expected {
        return Err(CliError::Dataset(format!(
            "{}:{}: expected {expected} columns, got {}",
            path.display(),
            row + 2,
            fields.len()
        )));
    }
    Ok(fields)
}

fn read_csv(path: &Path, expected_header: &str, columns: usize) -> Result<Vec<Vec<f64>>, CliError> {
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| CliError::Dataset(format!("{}: empty file", path.display())))?;
    if header != expected_header {
        return Err(CliError::Dataset(format!(
            "{}: unexpected header {header:?}",
            path.display()
        )));
    }
    lines
        .enumerate()
        .map(|(i, line)| parse_fields(line, columns, path, i))
        .collect()
}

/// Read a dataset directory back into memory.
pub fn read_dataset(dir: &Path) -> Result<(Dataset<f64>, Manifest), CliError> {
    let manifest_path = dir.join("manifest.json");
    let text = fs::read_to_string(&manifest_path).map_err(CliError::io(&manifest_path))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| CliError::Dataset(format!("{}: {e}", manifest_path.display())))?;
    if manifest.schema_version != SCHEMA_VERSION {
        return Err(CliError::Dataset(format!(
            "unsupported schema version {} (expected {SCHEMA_VERSION})",
            manifest.schema_version
        )));
    }

    let mut recordings = Vec::with_capacity(manifest.recordings.len());
    for entry in &manifest.recordings {
        let d = dir.join("recordings").join(&entry.id);

        let frame_rows = read_csv(
            &d.join("frames.csv"),
            "t,speed1,speed2,speed3,speed4,steer1,steer2,steer3,steer4,\
             wheel_rate1,wheel_rate2,wheel_rate3,wheel_rate4,\
             steer_rate1,steer_rate2,steer_rate3,steer_rate4",
            17,
        )?;
        let frames: Vec<WheelFrame<f64>> = frame_rows
            .iter()
            .map(|r| WheelFrame {
                t: r[0],
                speed: [r[1], r[2], r[3], r[4]],
                steer: [r[5], r[6], r[7], r[8]],
                wheel_rate: [r[9], r[10], r[11], r[12]],
                steer_rate: [r[13], r[14], r[15], r[16]],
            })
            .collect();

        let truth_rows = read_csv(&d.join("truth.csv"), "t,x,y,theta", 4)?;
        if truth_rows.len() != frames.len() {
            return Err(CliError::Dataset(format!(
                "{}: truth not aligned with frames",
                entry.id
            )));
        }
        let truth: Vec<Pose2<f64>> = truth_rows
            .iter()
            .map(|r| Pose2 {
                x: r[1],
                y: r[2],
                theta: r[3],
            })
            .collect();

        let imu_rows = read_csv(&d.join("imu.csv"), "t,yaw", 2)?;
        let imu_yaw = imu_rows.iter().map(|r| (r[0], r[1])).collect();
        let vo_rows = read_csv(&d.join("vo.csv"), "t,x,y,theta", 4)?;
        let vo_pose = vo_rows
            .iter()
            .map(|r| {
                (
                    r[0],
                    Pose2 {
                        x: r[1],
                        y: r[2],
                        theta: r[3],
                    },
                )
            })
            .collect();

        recordings.push(Recording {
            frames,
            truth,
            imu_yaw,
            vo_pose,
            meta: RecordingMeta {
                kind: entry.kind,
                repetition: entry.repetition,
                seed: entry.seed,
            },
        });
    }

    Ok((Dataset { recordings }, manifest))
}

/// Resolve the output directory: `--out` flag beats the `FOURWIS_OUT`
/// environment variable, which beats the config default.
pub fn resolve_out_dir(flag: Option<&Path>, config_default: &Path) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Ok(env) = std::env::var("FOURWIS_OUT") {
        if !env.is_empty() {
            return PathBuf::from(env);
        }
    }
    config_default.to_path_buf()
}
