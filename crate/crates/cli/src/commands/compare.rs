//! `compare`: align estimator traces by time and summarize their errors
//! against the truth columns they carry; emits plot-ready x-y path files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::format_float;
use crate::error::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceStats {
    pub name: String,
    pub final_position_error: f64,
    pub rms_position_error: f64,
    pub max_position_error: f64,
    pub rms_heading_error: f64,
    pub rows: usize,
}

#[derive(Debug)]
pub struct CompareSummary {
    pub out_dir: PathBuf,
    pub stats: Vec<TraceStats>,
    pub overlap: (f64, f64),
    /// Set when the traces' time ranges differed and were cut to the overlap.
    pub truncated: bool,
}

struct TraceData {
    name: String,
    rows: Vec<[f64; 11]>,
}

fn read_trace(path: &Path) -> Result<TraceData, CliError> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.starts_with("t,") || line.trim().is_empty() {
            continue;
        }
        let fields: Result<Vec<f64>, _> = line.split(',').map(str::parse).collect();
        let fields = fields
            .map_err(|e| CliError::Compare(format!("{}:{}: {e}", path.display(), i + 1)))?;
        if fields.len() != 11 {
            return Err(CliError::Compare(format!(
                "{}:{}: expected 11 columns, got {}",
                path.display(),
                i + 1,
                fields.len()
            )));
        }
        let mut row = [0.0; 11];
        row.copy_from_slice(&fields);
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::Compare(format!(
            "{}: no data rows",
            path.display()
        )));
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "trace".into());
    Ok(TraceData { name, rows })
}

pub fn cmd_compare(traces: &[PathBuf], out_dir: &Path) -> Result<CompareSummary, CliError> {
    if traces.is_empty() {
        return Err(CliError::Compare("no trace files given".into()));
    }
    let data: Vec<TraceData> = traces
        .iter()
        .map(|p| read_trace(p))
        .collect::<Result<_, _>>()?;

    // restrict every trace to the common time window
    let start = data
        .iter()
        .map(|t| t.rows[0][0])
        .fold(f64::MIN, f64::max);
    let end = data
        .iter()
        .map(|t| t.rows[t.rows.len() - 1][0])
        .fold(f64::MAX, f64::min);
    if !(end >= start) {
        return Err(CliError::Compare(format!(
            "trace time ranges do not overlap (window [{start}, {end}])"
        )));
    }
    let truncated = data
        .iter()
        .any(|t| t.rows[0][0] < start || t.rows[t.rows.len() - 1][0] > end);
    if truncated {
        eprintln!("warning: trace time ranges differ; comparison restricted to [{start}, {end}]");
    }

    std::fs::create_dir_all(out_dir).map_err(CliError::io(out_dir))?;
    let mut stats = Vec::with_capacity(data.len());
    for trace in &data {
        let window: Vec<&[f64; 11]> = trace
            .rows
            .iter()
            .filter(|r| r[0] >= start && r[0] <= end)
            .collect();
        let mut rms_pos = 0.0;
        let mut max_pos = 0.0f64;
        let mut rms_heading = 0.0;
        for r in &window {
            let pos = (r[7] * r[7] + r[8] * r[8]).sqrt();
            rms_pos += pos * pos;
            max_pos = max_pos.max(pos);
            rms_heading += r[9] * r[9];
        }
        let n = window.len().max(1) as f64;
        let last = window.last().expect("window nonempty");
        stats.push(TraceStats {
            name: trace.name.clone(),
            final_position_error: (last[7] * last[7] + last[8] * last[8]).sqrt(),
            rms_position_error: (rms_pos / n).sqrt(),
            max_position_error: max_pos,
            rms_heading_error: (rms_heading / n).sqrt(),
            rows: window.len(),
        });

        // plot-ready estimated path
        let mut path_text = String::from("t,x,y\n");
        for r in &window {
            let _ = writeln!(
                path_text,
                "{},{},{}",
                format_float(r[0]),
                format_float(r[1]),
                format_float(r[2])
            );
        }
        let path_file = out_dir.join(format!("path_{}.csv", trace.name));
        std::fs::write(&path_file, path_text).map_err(CliError::io(&path_file))?;
    }

    // truth path from the first trace's truth columns
    let mut truth_text = String::from("t,x,y\n");
    for r in data[0].rows.iter().filter(|r| r[0] >= start && r[0] <= end) {
        let _ = writeln!(
            truth_text,
            "{},{},{}",
            format_float(r[0]),
            format_float(r[4]),
            format_float(r[5])
        );
    }
    let truth_file = out_dir.join("path_truth.csv");
    std::fs::write(&truth_file, truth_text).map_err(CliError::io(&truth_file))?;

    let mut table = String::new();
    let _ = writeln!(
        table,
        "{:<40}{:>14}{:>14}{:>14}{:>14}",
        "trace", "final_pos", "rms_pos", "max_pos", "rms_heading"
    );
    for s in &stats {
        let _ = writeln!(
            table,
            "{:<40}{:>14.5e}{:>14.5e}{:>14.5e}{:>14.5e}",
            s.name, s.final_position_error, s.rms_position_error, s.max_position_error, s.rms_heading_error
        );
    }
    let summary_txt = out_dir.join("summary.txt");
    std::fs::write(&summary_txt, &table).map_err(CliError::io(&summary_txt))?;
    let summary_json = out_dir.join("summary.json");
    let json = serde_json::to_string_pretty(&stats)
        .map_err(|e| CliError::Compare(format!("summary serialization: {e}")))?;
    std::fs::write(&summary_json, json + "\n").map_err(CliError::io(&summary_json))?;

    Ok(CompareSummary {
        out_dir: out_dir.to_path_buf(),
        stats,
        overlap: (start, end),
        truncated,
    })
}
