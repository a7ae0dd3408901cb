//! Trial-and-error correction of a finished movement: the endpoint error is
//! projected onto the directions of the blended templates and a one
//! parameter family of weight corrections is tried out in simulation.

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use super::CalibrationRecord;
use crate::arm::{final_position, ArmModel};
use crate::error::{Error, Result};
use crate::planner::Plan;
use crate::templates::{standard_initial_state, TemplateLibrary};
use crate::vec2::Vec2;

/// Inclusive range of the gain `n` swept by the calibrator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainGrid {
    pub min: u32,
    pub max: u32,
}

impl Default for GainGrid {
    fn default() -> Self {
        GainGrid { min: 0, max: 20 }
    }
}

impl GainGrid {
    pub fn values(&self) -> impl Iterator<Item = u32> {
        self.min..=self.max
    }
}

/// Weight correction for each template given the target, the position the
/// movement actually reached and the gain `n`.
///
/// Template `i` receives `k_i cos(theta_i)`, where `theta_i` is the angle
/// between the error `target - achieved` and `p_i - achieved`, and
/// `k_i = (|e| / |achieved|) (1 + n (|target| - |p_i|) / |p_i|)`. Norms are
/// taken from the shoulder origin.
pub fn offline_delta(
    target: Vec2,
    achieved: Vec2,
    template_positions: &[Vec2],
    n: u32,
) -> Result<Vec<f64>> {
    let error = target - achieved;
    let d_e = error.norm();
    if d_e == 0.0 {
        return Ok(vec![0.0; template_positions.len()]);
    }
    let d_a = achieved.norm();
    if d_a == 0.0 {
        return Err(Error::DegenerateGeometry(
            "achieved position is at the shoulder".into(),
        ));
    }
    let d_t = target.norm();
    let n = f64::from(n);
    template_positions
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let r = *p - achieved;
            let r_norm = r.norm();
            if r_norm == 0.0 {
                return Err(Error::DegenerateGeometry(format!(
                    "template {i} coincides with the achieved position"
                )));
            }
            let d_i = p.norm();
            if d_i == 0.0 {
                return Err(Error::DegenerateGeometry(format!(
                    "template {i} is at the shoulder"
                )));
            }
            let cos_theta = error.dot(r) / (d_e * r_norm);
            let k = d_e / d_a * (1.0 + n * (d_t - d_i) / d_i);
            Ok(k * cos_theta)
        })
        .collect()
}

/// One tried weight vector and where it took the hand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    /// Gain used, `None` for the uncorrected baseline.
    pub n: Option<u32>,
    pub weights: Vec<f64>,
    pub achieved: Vec2,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfflineOutcome {
    pub record: CalibrationRecord,
    /// Every candidate that simulated successfully: the gains in ascending
    /// order, then the baseline.
    pub candidates: Vec<Candidate>,
}

impl OfflineOutcome {
    pub fn weights(&self) -> &[f64] {
        &self.record.offline_weights
    }
}

fn simulate_weights(
    plan: &Plan,
    weights: &[f64],
    model: &ArmModel,
    library: &TemplateLibrary,
) -> Result<Vec2> {
    let (profile, _) = plan.blend_with(library, weights)?;
    final_position(&profile, model, &standard_initial_state())
}

/// Calibrates the plan's own weights.
pub fn offline_calibrate(
    plan: &Plan,
    model: &ArmModel,
    library: &TemplateLibrary,
    grid: &GainGrid,
) -> Result<OfflineOutcome> {
    offline_calibrate_from(plan, &plan.weights, model, library, grid)
}

/// Calibrates a movement that was executed with `start_weights` over the
/// plan's templates (for instance after an online correction).
///
/// Every gain in the grid is simulated along with the uncorrected baseline
/// and the candidate with the smallest endpoint error wins; on ties the
/// smaller gain wins and the baseline ranks last. Including the baseline
/// means the returned error never exceeds the starting error.
pub fn offline_calibrate_from(
    plan: &Plan,
    start_weights: &[f64],
    model: &ArmModel,
    library: &TemplateLibrary,
    grid: &GainGrid,
) -> Result<OfflineOutcome> {
    let n_templates = plan.template_ids.len();
    if start_weights.len() != n_templates {
        return Err(Error::DimensionMismatch {
            expected: n_templates,
            found: start_weights.len(),
        });
    }
    let target = plan.target;
    let achieved_before = simulate_weights(plan, start_weights, model, library)?;
    let error_before = target.distance(achieved_before);
    let baseline = Candidate {
        n: None,
        weights: start_weights.to_vec(),
        achieved: achieved_before,
        error: error_before,
    };

    let mut candidates = Vec::with_capacity(grid.max.saturating_sub(grid.min) as usize + 2);
    for n in grid.values() {
        let delta = match offline_delta(target, achieved_before, &plan.template_positions, n) {
            Ok(d) => d,
            Err(e) => {
                debug!("no correction for target {target}: {e}");
                vec![0.0; n_templates]
            }
        };
        // A null correction reproduces the baseline exactly.
        if delta.iter().all(|d| *d == 0.0) {
            continue;
        }
        let weights: Vec<f64> = start_weights
            .iter()
            .zip(&delta)
            .map(|(w, d)| w + d)
            .collect();
        match simulate_weights(plan, &weights, model, library) {
            Ok(achieved) => candidates.push(Candidate {
                n: Some(n),
                weights,
                achieved,
                error: target.distance(achieved),
            }),
            Err(e) => warn!("calibration candidate n = {n} for target {target} discarded: {e}"),
        }
    }
    candidates.push(baseline);

    let best = select_best(&candidates);
    let chosen = &candidates[best];
    let record = CalibrationRecord {
        target,
        template_ids: plan.template_ids.clone(),
        template_positions: plan.template_positions.clone(),
        planner_weights: plan.weights.clone(),
        start_weights: start_weights.to_vec(),
        offline_weights: chosen.weights.clone(),
        achieved_before,
        achieved_after: chosen.achieved,
        error_before,
        error_after: chosen.error,
        chosen_n: chosen.n,
    };
    Ok(OfflineOutcome { record, candidates })
}

/// Index of the first candidate with strictly minimal error. Candidates are
/// ordered by ascending gain with the baseline last, which encodes the
/// tie-breaking rule.
fn select_best(candidates: &[Candidate]) -> usize {
    let mut best = 0;
    for (i, c) in candidates.iter().enumerate().skip(1) {
        if c.error < candidates[best].error {
            best = i;
        }
    }
    best
}
