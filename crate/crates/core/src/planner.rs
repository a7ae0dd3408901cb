//! Habitual planning: a new target is reached by blending the excitations
//! of nearby templates with inverse-distance weights.

use log::debug;
use serde::{Deserialize, Serialize};

use crate::arm::{ExcitationProfile, NUM_MUSCLES};
use crate::error::{Error, Result};
use crate::templates::{nearest_templates, TemplateLibrary};
use crate::vec2::Vec2;

/// Number of templates blended per movement.
pub const DEFAULT_TEMPLATE_COUNT: usize = 4;

/// Distances at or below this are treated as an exact hit.
const COINCIDENT: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub target: Vec2,
    pub template_ids: Vec<String>,
    pub template_positions: Vec<Vec2>,
    pub weights: Vec<f64>,
    pub blended_excitations: ExcitationProfile,
    pub predicted_position: Vec2,
    /// Blended samples that had to be clamped into [0, 1].
    pub clamped_samples: usize,
}

/// Normalized inverse-distance weights of `target` against each template
/// position. Templates coinciding with the target share all the weight.
pub fn compute_weights(target: Vec2, template_positions: &[Vec2]) -> Vec<f64> {
    let distances: Vec<f64> = template_positions
        .iter()
        .map(|p| target.distance(*p))
        .collect();
    let hits = distances.iter().filter(|d| **d <= COINCIDENT).count();
    if hits > 0 {
        let share = 1.0 / hits as f64;
        return distances
            .iter()
            .map(|d| if *d <= COINCIDENT { share } else { 0.0 })
            .collect();
    }
    let inverse: Vec<f64> = distances.iter().map(|d| 1.0 / d).collect();
    let total: f64 = inverse.iter().sum();
    inverse.iter().map(|v| v / total).collect()
}

/// Weighted sum of excitation profiles, clamped into [0, 1]. Returns the
/// blend and the number of clamped entries.
pub fn blend_excitations(
    weights: &[f64],
    profiles: &[&ExcitationProfile],
) -> Result<(ExcitationProfile, usize)> {
    if weights.len() != profiles.len() {
        return Err(Error::DimensionMismatch {
            expected: profiles.len(),
            found: weights.len(),
        });
    }
    let first = profiles
        .first()
        .ok_or_else(|| Error::GridMismatch("nothing to blend".into()))?;
    for p in &profiles[1..] {
        if p.dt != first.dt || p.samples.len() != first.samples.len() {
            return Err(Error::GridMismatch(format!(
                "cannot blend dt {} x {} with dt {} x {}",
                first.dt,
                first.samples.len(),
                p.dt,
                p.samples.len()
            )));
        }
    }

    let mut clamped = 0usize;
    let samples = (0..first.samples.len())
        .map(|k| {
            let mut out = [0.0; NUM_MUSCLES];
            for (w, p) in weights.iter().zip(profiles) {
                for (o, u) in out.iter_mut().zip(&p.samples[k]) {
                    *o += w * u;
                }
            }
            for o in out.iter_mut() {
                if !(0.0..=1.0).contains(o) {
                    clamped += 1;
                    *o = o.clamp(0.0, 1.0);
                }
            }
            out
        })
        .collect();
    if clamped > 0 {
        debug!("blend clamped {clamped} excitation entries");
    }
    Ok((
        ExcitationProfile {
            dt: first.dt,
            samples,
        },
        clamped,
    ))
}

/// Target position implied by the weights: `sum_i w_i p_i`.
pub fn estimate_position(weights: &[f64], template_positions: &[Vec2]) -> Vec2 {
    weights
        .iter()
        .zip(template_positions)
        .fold(Vec2::ZERO, |acc, (w, p)| acc + *p * *w)
}

pub fn plan(target: Vec2, library: &TemplateLibrary, n: usize) -> Result<Plan> {
    if n == 0 {
        return Err(Error::Config("planner needs at least one template".into()));
    }
    let chosen = nearest_templates(library, target, n)?;
    let template_positions: Vec<Vec2> = chosen.iter().map(|t| t.final_position).collect();
    let weights = compute_weights(target, &template_positions);
    let profiles: Vec<&ExcitationProfile> = chosen.iter().map(|t| &t.excitations).collect();
    let (blended_excitations, clamped_samples) = blend_excitations(&weights, &profiles)?;
    let predicted_position = estimate_position(&weights, &template_positions);
    Ok(Plan {
        target,
        template_ids: chosen.iter().map(|t| t.id.clone()).collect(),
        template_positions,
        weights,
        blended_excitations,
        predicted_position,
        clamped_samples,
    })
}

impl Plan {
    /// Re-blends this plan's templates with other weights.
    pub fn blend_with(
        &self,
        library: &TemplateLibrary,
        weights: &[f64],
    ) -> Result<(ExcitationProfile, usize)> {
        let profiles = self
            .template_ids
            .iter()
            .map(|id| {
                library
                    .get(id)
                    .map(|t| &t.excitations)
                    .ok_or_else(|| Error::Config(format!("template {id} not in library")))
            })
            .collect::<Result<Vec<_>>>()?;
        blend_excitations(weights, &profiles)
    }
}
