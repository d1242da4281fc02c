//! `simulate`: generate the full calibration dataset (six trajectory kinds,
//! five repetitions) and write it as a dataset directory.

use std::path::{Path, PathBuf};

use fourwis::sim::make_calibration_dataset_with;
use fourwis::trajectory::TrajectorySpec;

use crate::config::RunConfig;
use crate::dataset::write_dataset;
use crate::error::CliError;

#[derive(Debug)]
pub struct SimulateSummary {
    pub out_dir: PathBuf,
    pub recordings: usize,
    pub frames: usize,
    pub master_seed: u64,
    pub wall: bool,
}

pub fn cmd_simulate(
    config: &RunConfig,
    out_dir: &Path,
    wall: bool,
    seed: Option<u64>,
) -> Result<SimulateSummary, CliError> {
    config.validate()?;
    let params = config.robot_params()?;
    let disturbance = config.effective_disturbance(wall, seed);
    let specs = config.trajectory_specs();
    let dataset = make_calibration_dataset_with(&params, &params, &specs, &disturbance)?;
    // one spec entry per recording, in generation order (kind-major)
    let per_recording: Vec<TrajectorySpec<f64>> = specs
        .iter()
        .flat_map(|s| std::iter::repeat_n(*s, fourwis::sim::REPETITIONS))
        .collect();
    write_dataset(out_dir, &dataset, &per_recording, &params, &params, &disturbance)?;
    Ok(SimulateSummary {
        out_dir: out_dir.to_path_buf(),
        recordings: dataset.len(),
        frames: dataset.recordings.iter().map(|r| r.frames.len()).sum(),
        master_seed: disturbance.rng_seed,
        wall,
    })
}
