//! Command implementations behind the CLI: each takes a parsed config and
//! returns a summary for the caller to print, writing its artifacts under the
//! resolved output directory.

mod calibrate;
mod compare;
mod estimate;
mod simulate;

pub use calibrate::{
    cmd_calibrate, parse_error_table, render_error_table, CalibrateSummary, ReportFile,
};
pub use compare::{cmd_compare, CompareSummary, TraceStats};
pub use estimate::{cmd_estimate, EstimateSummary};
pub use simulate::{cmd_simulate, SimulateSummary};
