use std::fmt;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::arm::ArmModel;
use crate::calibration::OnlineCalibrationModel;
use crate::error::{Error, Result};
use crate::vec2::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    /// Blended plan executed as is.
    Plan,
    /// Plan after off-line calibration.
    Offline,
    /// Plan corrected by the online model before execution.
    Online,
    /// Online movement after off-line refinement (the record learned from).
    Refined,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Plan => "plan",
            Stage::Offline => "offline",
            Stage::Online => "online",
            Stage::Refined => "refined",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One executed movement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportRow {
    /// 0 for the plan and off-line stages, 1.. for online rounds.
    pub round: usize,
    pub stage: Stage,
    pub target: Vec2,
    pub actual: Vec2,
    pub weights: Vec<f64>,
    pub chosen_n: Option<u32>,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageMean {
    pub round: usize,
    pub stage: Stage,
    pub mean_error: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkippedTarget {
    pub round: usize,
    pub target: Vec2,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentReport {
    pub seed: u64,
    pub config_digest: String,
    pub arm_digest: String,
    pub num_templates: usize,
    pub rows: Vec<ReportRow>,
    /// Mean error per (round, stage), in row order.
    pub means: Vec<StageMean>,
    /// Least-squares slope of the online round means against the round
    /// index; `None` with fewer than two rounds.
    pub learning_slope: Option<f64>,
    pub skipped: Vec<SkippedTarget>,
    /// Set when a stage failed and later stages did not run.
    pub partial: bool,
    pub failure: Option<String>,
    pub online_model: Option<OnlineCalibrationModel>,
}

/// Slope of the least-squares line through `(x, y)` pairs.
pub fn least_squares_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        None
    } else {
        Some(sxy / sxx)
    }
}

impl ExperimentReport {
    pub(super) fn new(config: &ExperimentConfig, model: &ArmModel) -> Self {
        ExperimentReport {
            seed: config.seed,
            config_digest: config.digest(),
            arm_digest: model.digest(),
            num_templates: config.num_templates,
            rows: Vec::new(),
            means: Vec::new(),
            learning_slope: None,
            skipped: Vec::new(),
            partial: false,
            failure: None,
            online_model: None,
        }
    }

    /// Recomputes `means` and `learning_slope` from the rows.
    pub fn refresh_means(&mut self) {
        let mut means: Vec<StageMean> = Vec::new();
        let mut sums: Vec<f64> = Vec::new();
        for row in &self.rows {
            match means
                .iter()
                .position(|m| m.round == row.round && m.stage == row.stage)
            {
                Some(i) => {
                    sums[i] += row.error;
                    means[i].count += 1;
                }
                None => {
                    means.push(StageMean {
                        round: row.round,
                        stage: row.stage,
                        mean_error: 0.0,
                        count: 1,
                    });
                    sums.push(row.error);
                }
            }
        }
        for (m, s) in means.iter_mut().zip(sums) {
            m.mean_error = s / m.count as f64;
        }
        self.means = means;
        let curve: Vec<(f64, f64)> = self
            .round_means(Stage::Online)
            .into_iter()
            .map(|(r, e)| (r as f64, e))
            .collect();
        self.learning_slope = least_squares_slope(&curve);
    }

    pub fn mean(&self, round: usize, stage: Stage) -> Option<f64> {
        self.means
            .iter()
            .find(|m| m.round == round && m.stage == stage)
            .map(|m| m.mean_error)
    }

    /// `(round, mean error)` of one stage, in round order.
    pub fn round_means(&self, stage: Stage) -> Vec<(usize, f64)> {
        let mut out: Vec<(usize, f64)> = self
            .means
            .iter()
            .filter(|m| m.stage == stage)
            .map(|m| (m.round, m.mean_error))
            .collect();
        out.sort_by_key(|m| m.0);
        out
    }

    pub fn csv_header(&self) -> Vec<String> {
        let mut header: Vec<String> = [
            "round", "target_x", "target_y", "stage", "actual_x", "actual_y",
        ]
        .map(String::from)
        .to_vec();
        header.extend((1..=self.num_templates).map(|i| format!("w{i}")));
        header.extend(["chosen_n".to_string(), "error".to_string()]);
        header
    }

    /// Per-movement table, one row per executed movement.
    pub fn to_csv(&self) -> Result<String> {
        let mut out = csv::Writer::from_writer(Vec::new());
        out.write_record(self.csv_header()).map_err(csv_error)?;
        for row in &self.rows {
            if row.weights.len() != self.num_templates {
                return Err(Error::DimensionMismatch {
                    expected: self.num_templates,
                    found: row.weights.len(),
                });
            }
            let mut record = vec![
                row.round.to_string(),
                row.target.x.to_string(),
                row.target.y.to_string(),
                row.stage.to_string(),
                row.actual.x.to_string(),
                row.actual.y.to_string(),
            ];
            record.extend(row.weights.iter().map(f64::to_string));
            record.push(row.chosen_n.map(|n| n.to_string()).unwrap_or_default());
            record.push(row.error.to_string());
            out.write_record(&record).map_err(csv_error)?;
        }
        finish(out)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::schema(text, &e))
    }
}

/// Column names of the plot table.
pub const PLOT_COLUMNS: [&str; 6] = ["series", "round", "stage", "target_x", "target_y", "error"];

/// Tidy table for plotting: one `mean` row per (round, stage) followed by
/// one `target` row per movement. Target columns are empty on mean rows.
pub fn plot_data_csv(report: &ExperimentReport) -> Result<String> {
    let mut out = csv::Writer::from_writer(Vec::new());
    out.write_record(PLOT_COLUMNS).map_err(csv_error)?;
    for m in &report.means {
        out.write_record([
            "mean".to_string(),
            m.round.to_string(),
            m.stage.to_string(),
            String::new(),
            String::new(),
            m.mean_error.to_string(),
        ])
        .map_err(csv_error)?;
    }
    for row in &report.rows {
        out.write_record([
            "target".to_string(),
            row.round.to_string(),
            row.stage.to_string(),
            row.target.x.to_string(),
            row.target.y.to_string(),
            row.error.to_string(),
        ])
        .map_err(csv_error)?;
    }
    finish(out)
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn finish(out: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = out
        .into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(round: usize, stage: Stage, error: f64) -> ReportRow {
        ReportRow {
            round,
            stage,
            target: Vec2::new(0.1, 0.8),
            actual: Vec2::new(0.1, 0.8 + error),
            weights: vec![0.5, 0.5],
            chosen_n: if stage == Stage::Offline {
                Some(3)
            } else {
                None
            },
            error,
        }
    }

    fn report(rows: Vec<ReportRow>) -> ExperimentReport {
        let mut r = ExperimentReport {
            seed: 1,
            config_digest: String::new(),
            arm_digest: String::new(),
            num_templates: 2,
            rows,
            means: vec![],
            learning_slope: None,
            skipped: vec![],
            partial: false,
            failure: None,
            online_model: None,
        };
        r.refresh_means();
        r
    }

    #[test]
    fn means_follow_rows() {
        let r = report(vec![
            row(0, Stage::Plan, 0.1),
            row(0, Stage::Plan, 0.3),
            row(0, Stage::Offline, 0.05),
            row(1, Stage::Online, 0.2),
            row(2, Stage::Online, 0.1),
        ]);
        assert_eq!(r.means.len(), 4);
        assert!((r.mean(0, Stage::Plan).unwrap() - 0.2).abs() < 1e-12);
        assert_eq!(r.mean(0, Stage::Offline), Some(0.05));
        assert!((r.learning_slope.unwrap() + 0.1).abs() < 1e-12);
    }

    #[test]
    fn csv_layout() {
        let r = report(vec![row(0, Stage::Offline, 0.25)]);
        let text = r.to_csv().unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines[0],
            "round,target_x,target_y,stage,actual_x,actual_y,w1,w2,chosen_n,error"
        );
        assert_eq!(lines[1], "0,0.1,0.8,offline,0.1,1.05,0.5,0.5,3,0.25");
    }

    #[test]
    fn plot_data_of_empty_report_is_header_only() {
        let text = plot_data_csv(&report(vec![])).unwrap();
        assert_eq!(text, "series,round,stage,target_x,target_y,error\n");
    }

    #[test]
    fn plot_rows_have_fixed_width() {
        let r = report(vec![row(0, Stage::Plan, 0.1), row(1, Stage::Online, 0.2)]);
        let text = plot_data_csv(&r).unwrap();
        assert_eq!(text.lines().count(), 1 + 2 + 2);
        for line in text.lines() {
            assert_eq!(line.split(',').count(), PLOT_COLUMNS.len());
        }
    }

    #[test]
    fn slope_of_a_line() {
        assert_eq!(
            least_squares_slope(&[(1.0, 3.0), (2.0, 5.0), (3.0, 7.0)]),
            Some(2.0)
        );
        assert_eq!(least_squares_slope(&[(1.0, 3.0)]), None);
    }

    #[test]
    fn missing_fields_are_reported() {
        let err = ExperimentReport::from_json("{\"seed\": 1}").unwrap_err();
        assert!(matches!(err, Error::Schema { .. }));
    }
}
