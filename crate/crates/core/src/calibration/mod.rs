//! Endpoint-error calibration: off-line trial-and-error correction and an
//! online regression model learned from it.

mod offline;
mod online;

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vec2::Vec2;

pub use offline::{
    offline_calibrate, offline_calibrate_from, offline_delta, Candidate, GainGrid, OfflineOutcome,
};
pub use online::{
    online_features, online_fit, online_predict, online_round, FeatureLayout,
    OnlineCalibrationModel, OnlineMovement, OnlineSettings, RoundReport, DEFAULT_RIDGE_LAMBDA,
    FEATURE_LAYOUT_VERSION,
};

/// One calibrated movement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationRecord {
    pub target: Vec2,
    pub template_ids: Vec<String>,
    pub template_positions: Vec<Vec2>,
    /// Inverse-distance weights produced by the planner.
    pub planner_weights: Vec<f64>,
    /// Weights the calibrated movement started from (the planner weights,
    /// or the online-corrected weights).
    pub start_weights: Vec<f64>,
    /// Weights selected by the off-line calibrator.
    pub offline_weights: Vec<f64>,
    pub achieved_before: Vec2,
    pub achieved_after: Vec2,
    pub error_before: f64,
    pub error_after: f64,
    /// Winning gain, `None` when the uncorrected movement was kept.
    pub chosen_n: Option<u32>,
}

/// Appends records to a JSON-lines log, one record per line.
pub fn append_records(path: impl AsRef<Path>, records: &[CalibrationRecord]) -> Result<()> {
    let file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)?;
    let mut out = std::io::BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<CalibrationRecord>> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut records = Vec::new();
    let mut offset = 0usize;
    for line in reader.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            let record =
                serde_json::from_str(&line).map_err(|e| match Error::schema(&line, &e) {
                    Error::Schema { offset: o, message } => Error::Schema {
                        offset: offset + o,
                        message,
                    },
                    other => other,
                })?;
            records.push(record);
        }
        offset += line.len() + 1;
    }
    Ok(records)
}
