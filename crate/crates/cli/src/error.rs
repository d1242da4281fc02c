//! CLI error type: every failure maps to a one-line machine-parseable message
//! `error[<kind>]: <detail>` and a nonzero exit code.

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("error[config]: {0}")]
    Config(String),
    #[error("error[io]: {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("error[dataset]: {0}")]
    Dataset(String),
    #[error("error[simulate]: {0}")]
    Simulate(#[from] fourwis::sim::SimError),
    #[error("error[calibrate]: {0}")]
    Calibrate(#[from] fourwis::calib::CalibrationError),
    #[error("error[estimate]: {0}")]
    Estimate(#[from] fourwis::filter::FilterError),
    #[error("error[compare]: {0}")]
    Compare(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}
