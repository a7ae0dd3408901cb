//! Learned pre-movement correction: a per-template linear model that maps
//! the target and its planning context to a weight correction, refit from
//! the accumulated off-line calibration records.

use std::cmp::Ordering;

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::offline::{offline_calibrate_from, GainGrid};
use super::CalibrationRecord;
use crate::arm::{final_position, ArmModel};
use crate::error::{Error, Result};
use crate::planner::plan;
use crate::templates::{standard_initial_state, TemplateLibrary};
use crate::vec2::Vec2;

/// Tag written with serialized models; bump when the feature layout changes.
pub const FEATURE_LAYOUT_VERSION: &str = "bias-target-positions-weights/v1";

pub const DEFAULT_RIDGE_LAMBDA: f64 = 1e-6;

/// Feature layout for `n` templates:
/// `[1, target.x, target.y, p_1.x, p_1.y, ..., p_n.x, p_n.y, w_1, ..., w_n]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureLayout {
    pub num_templates: usize,
}

impl FeatureLayout {
    pub fn new(num_templates: usize) -> Self {
        FeatureLayout { num_templates }
    }

    pub fn dim(&self) -> usize {
        3 + 3 * self.num_templates
    }

    pub fn encode(
        &self,
        target: Vec2,
        template_positions: &[Vec2],
        planner_weights: &[f64],
    ) -> Result<Vec<f64>> {
        let n = self.num_templates;
        for len in [template_positions.len(), planner_weights.len()] {
            if len != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: len,
                });
            }
        }
        let mut phi = Vec::with_capacity(self.dim());
        phi.extend([1.0, target.x, target.y]);
        for p in template_positions {
            phi.extend([p.x, p.y]);
        }
        phi.extend_from_slice(planner_weights);
        Ok(phi)
    }

    /// Inverse of [`encode`](Self::encode).
    pub fn decode(&self, features: &[f64]) -> Result<(Vec2, Vec<Vec2>, Vec<f64>)> {
        if features.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: features.len(),
            });
        }
        let n = self.num_templates;
        let target = Vec2::new(features[1], features[2]);
        let positions = features[3..3 + 2 * n]
            .chunks_exact(2)
            .map(|c| Vec2::new(c[0], c[1]))
            .collect();
        Ok((target, positions, features[3 + 2 * n..].to_vec()))
    }
}

/// Features for the online model; see [`FeatureLayout`].
pub fn online_features(
    target: Vec2,
    template_positions: &[Vec2],
    planner_weights: &[f64],
) -> Result<Vec<f64>> {
    FeatureLayout::new(template_positions.len()).encode(target, template_positions, planner_weights)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OnlineCalibrationModel {
    pub layout_version: String,
    pub num_templates: usize,
    pub feature_dim: usize,
    /// One row per template weight, `feature_dim` columns (row-major).
    pub coefficients: Vec<Vec<f64>>,
    pub ridge_lambda: f64,
    pub training_record_count: usize,
}

impl OnlineCalibrationModel {
    /// A model that predicts no correction.
    pub fn zeros(num_templates: usize) -> Self {
        let feature_dim = FeatureLayout::new(num_templates).dim();
        OnlineCalibrationModel {
            layout_version: FEATURE_LAYOUT_VERSION.to_string(),
            num_templates,
            feature_dim,
            coefficients: vec![vec![0.0; feature_dim]; num_templates],
            ridge_lambda: 0.0,
            training_record_count: 0,
        }
    }

    pub fn layout(&self) -> FeatureLayout {
        FeatureLayout::new(self.num_templates)
    }

    pub fn check(&self) -> Result<()> {
        if self.layout_version != FEATURE_LAYOUT_VERSION {
            return Err(Error::Schema {
                offset: 0,
                message: format!("unsupported feature layout {}", self.layout_version),
            });
        }
        let dim = self.layout().dim();
        if self.feature_dim != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: self.feature_dim,
            });
        }
        if self.coefficients.len() != self.num_templates {
            return Err(Error::DimensionMismatch {
                expected: self.num_templates,
                found: self.coefficients.len(),
            });
        }
        for row in &self.coefficients {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            if row.iter().any(|c| !c.is_finite()) {
                return Err(Error::Schema {
                    offset: 0,
                    message: "non-finite coefficient".into(),
                });
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(text).map_err(|e| Error::schema(text, &e))?;
        model.check()?;
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }
}

/// Predicted weight correction: `coefficients * features`.
pub fn online_predict(model: &OnlineCalibrationModel, features: &[f64]) -> Result<Vec<f64>> {
    if features.len() != model.feature_dim {
        return Err(Error::DimensionMismatch {
            expected: model.feature_dim,
            found: features.len(),
        });
    }
    Ok(model
        .coefficients
        .iter()
        .map(|row| row.iter().zip(features).map(|(c, x)| c * x).sum())
        .collect())
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or_else(|| a.len().cmp(&b.len()))
}

/// Ridge regression of the recorded weight corrections
/// (`offline_weights - planner_weights`) on the record features:
/// `argmin_C sum ||dw - C phi||^2 + lambda ||C||^2`.
///
/// Rows are put in a canonical order before accumulation, so the result
/// depends only on the multiset of records.
pub fn online_fit(
    records: &[CalibrationRecord],
    ridge_lambda: f64,
) -> Result<OnlineCalibrationModel> {
    let first = records.first().ok_or(Error::NoRecords)?;
    if !(ridge_lambda >= 0.0 && ridge_lambda.is_finite()) {
        return Err(Error::Config(format!(
            "ridge lambda must be >= 0, got {ridge_lambda}"
        )));
    }
    let layout = FeatureLayout::new(first.template_ids.len());
    let n = layout.num_templates;
    let dim = layout.dim();

    let mut rows = records
        .iter()
        .map(|r| {
            if r.offline_weights.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: r.offline_weights.len(),
                });
            }
            let phi = layout.encode(r.target, &r.template_positions, &r.planner_weights)?;
            let dw: Vec<f64> = r
                .offline_weights
                .iter()
                .zip(&r.planner_weights)
                .map(|(o, p)| o - p)
                .collect();
            Ok((phi, dw))
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| lexicographic(&a.0, &b.0).then_with(|| lexicographic(&a.1, &b.1)));

    let x = DMatrix::from_fn(rows.len(), dim, |i, j| rows[i].0[j]);
    let y = DMatrix::from_fn(rows.len(), n, |i, j| rows[i].1[j]);
    let mut gram = x.transpose() * &x;
    for j in 0..dim {
        gram[(j, j)] += ridge_lambda;
    }
    let rhs = x.transpose() * &y;

    if ridge_lambda == 0.0 {
        let svd = gram.clone().svd(false, false);
        let max_sv = svd.singular_values.max();
        let tol = max_sv * dim as f64 * f64::EPSILON;
        if svd.singular_values.iter().any(|s| *s <= tol) {
            return Err(Error::RankDeficient);
        }
    }
    let chol = gram.cholesky().ok_or(Error::RankDeficient)?;
    let solution = chol.solve(&rhs); // dim x n

    let coefficients: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let column: DVector<f64> = solution.column(i).into_owned();
            column.iter().copied().collect()
        })
        .collect();
    let model = OnlineCalibrationModel {
        layout_version: FEATURE_LAYOUT_VERSION.to_string(),
        num_templates: n,
        feature_dim: dim,
        coefficients,
        ridge_lambda,
        training_record_count: records.len(),
    };
    model.check()?;
    Ok(model)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OnlineSettings {
    pub num_templates: usize,
    pub gain_grid: GainGrid,
    pub ridge_lambda: f64,
}

impl Default for OnlineSettings {
    fn default() -> Self {
        OnlineSettings {
            num_templates: crate::planner::DEFAULT_TEMPLATE_COUNT,
            gain_grid: GainGrid::default(),
            ridge_lambda: DEFAULT_RIDGE_LAMBDA,
        }
    }
}

/// What happened to one target during an online round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineMovement {
    pub target: Vec2,
    pub planner_weights: Vec<f64>,
    pub online_weights: Vec<f64>,
    pub achieved_online: Vec2,
    pub error_online: f64,
    /// Off-line refinement applied on top of the online weights.
    pub record: CalibrationRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub movements: Vec<OnlineMovement>,
    /// Targets that could not be processed, with the reason.
    pub failed: Vec<(Vec2, String)>,
    pub mean_error_online: f64,
    pub mean_error_refined: f64,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if count == 0 {
        f64::NAN
    } else {
        sum / count as f64
    }
}

fn online_movement(
    target: Vec2,
    library: &TemplateLibrary,
    model: &ArmModel,
    online_model: &OnlineCalibrationModel,
    settings: &OnlineSettings,
) -> Result<OnlineMovement> {
    let plan = plan(target, library, settings.num_templates)?;
    let features = online_features(target, &plan.template_positions, &plan.weights)?;
    let correction = online_predict(online_model, &features)?;
    let online_weights: Vec<f64> = plan
        .weights
        .iter()
        .zip(&correction)
        .map(|(w, d)| w + d)
        .collect();
    let (profile, _) = plan.blend_with(library, &online_weights)?;
    let achieved_online = final_position(&profile, model, &standard_initial_state())?;
    let outcome =
        offline_calibrate_from(&plan, &online_weights, model, library, &settings.gain_grid)?;
    Ok(OnlineMovement {
        target,
        planner_weights: plan.weights.clone(),
        online_weights,
        achieved_online,
        error_online: target.distance(achieved_online),
        record: outcome.record,
    })
}

/// One round of online calibration with learning.
///
/// Each target is planned, corrected by the current online model, executed
/// and then refined off-line; the refined record joins `history`. After all
/// targets the model is refit on the whole history.
pub fn online_round(
    targets: &[Vec2],
    library: &TemplateLibrary,
    model: &ArmModel,
    online_model: &OnlineCalibrationModel,
    history: &mut Vec<CalibrationRecord>,
    settings: &OnlineSettings,
) -> Result<(OnlineCalibrationModel, RoundReport)> {
    if online_model.training_record_count == 0 {
        return Err(Error::Config(
            "online model must be trained on at least one record".into(),
        ));
    }
    online_model.check()?;
    if online_model.num_templates != settings.num_templates {
        return Err(Error::DimensionMismatch {
            expected: settings.num_templates,
            found: online_model.num_templates,
        });
    }
    let mut movements = Vec::with_capacity(targets.len());
    let mut failed = Vec::new();
    for &target in targets {
        match online_movement(target, library, model, online_model, settings) {
            Ok(m) => movements.push(m),
            Err(e) => {
                warn!("online round skipped target {target}: {e}");
                failed.push((target, e.to_string()));
            }
        }
    }
    history.extend(movements.iter().map(|m| m.record.clone()));
    let updated = online_fit(history, settings.ridge_lambda)?;
    let report = RoundReport {
        mean_error_online: mean(movements.iter().map(|m| m.error_online)),
        mean_error_refined: mean(movements.iter().map(|m| m.record.error_after)),
        movements,
        failed,
    };
    Ok((updated, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feature_dimension() {
        assert_eq!(FeatureLayout::new(4).dim(), 15);
        let phi = online_features(Vec2::ZERO, &[Vec2::ZERO; 4], &[0.0; 4]).unwrap();
        assert_eq!(phi.len(), 15);
        assert_eq!(phi[0], 1.0);
        assert!(phi[1..].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn features_decode_to_inputs() {
        let layout = FeatureLayout::new(3);
        let target = Vec2::new(0.1, 0.8);
        let ps = vec![
            Vec2::new(0.2, 0.7),
            Vec2::new(-0.1, 0.9),
            Vec2::new(0.0, 0.75),
        ];
        let ws = vec![0.5, 0.3, 0.2];
        let phi = layout.encode(target, &ps, &ws).unwrap();
        assert_eq!(layout.decode(&phi).unwrap(), (target, ps, ws));
    }

    #[test]
    fn feature_dimension_mismatch() {
        assert!(matches!(
            FeatureLayout::new(4).encode(Vec2::ZERO, &[Vec2::ZERO; 3], &[0.0; 4]),
            Err(Error::DimensionMismatch {
                expected: 4,
                found: 3
            })
        ));
        let model = OnlineCalibrationModel::zeros(4);
        assert!(online_predict(&model, &[1.0; 14]).is_err());
    }

    #[test]
    fn zero_model_predicts_nothing() {
        let model = OnlineCalibrationModel::zeros(4);
        let phi =
            online_features(Vec2::new(0.3, 0.7), &[Vec2::new(0.2, 0.6); 4], &[0.25; 4]).unwrap();
        assert_eq!(online_predict(&model, &phi).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn single_feature_model_echoes() {
        let mut model = OnlineCalibrationModel::zeros(1);
        model.coefficients[0][1] = 1.0;
        let phi = online_features(Vec2::new(0.42, -0.1), &[Vec2::new(0.2, 0.6)], &[1.0]).unwrap();
        assert_eq!(online_predict(&model, &phi).unwrap(), vec![0.42]);
    }

    #[test]
    fn model_json_round_trip() {
        let mut model = OnlineCalibrationModel::zeros(2);
        model.coefficients[1][4] = -0.125;
        model.training_record_count = 7;
        let back = OnlineCalibrationModel::from_json(&model.to_json()).unwrap();
        assert_eq!(back, model);
        let mut bad = model.clone();
        bad.layout_version = "other".into();
        assert!(OnlineCalibrationModel::from_json(&bad.to_json()).is_err());
    }

    #[test]
    fn fit_needs_records() {
        assert!(matches!(online_fit(&[], 1.0), Err(Error::NoRecords)));
    }
}
