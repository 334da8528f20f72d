//! File formats: event streams, calibration, run reports, traces and IWE images.

mod calib;
mod events;
mod image;
mod report;

use std::path::PathBuf;

use thiserror::Error;

pub use calib::{parse_calibration, read_calibration, undistort, Calibration, Undistorted};
pub use events::{parse_events, read_events, write_events, write_events_to};
pub use image::{write_iwe_image, write_pgm};
pub use report::{
    match_ground_truth, parse_ground_truth, read_ground_truth, read_reports, summarize, write_ground_truth, write_reports, write_trace_csv, GroundTruth,
    RmsSummary, RunConfig, WindowRecord,
};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: timestamp {t} precedes previous timestamp {previous}")]
    Regression { line: usize, t: f64, previous: f64 },
    #[error("invalid calibration: {0}")]
    Calibration(String),
    #[error("report record: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub(crate) fn open(path: &std::path::Path) -> Result<std::fs::File, IoError> {
    std::fs::File::open(path).map_err(|source| IoError::File { path: path.to_path_buf(), source })
}

pub(crate) fn create(path: &std::path::Path) -> Result<std::fs::File, IoError> {
    std::fs::File::create(path).map_err(|source| IoError::File { path: path.to_path_buf(), source })
}
