//! Library of past movements ("templates") that the planner blends.

use std::f64::consts::PI;
use std::path::Path;

use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arm::{
    final_position, ArmModel, ArmState, ExcitationProfile, PerMuscle, NUM_MUSCLES, STANDARD_POSTURE,
};
use crate::error::{Error, Result};
use crate::vec2::Vec2;

/// Consecutive failed draws tolerated before generation gives up.
const MAX_RESAMPLES: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Template {
    pub id: String,
    pub final_position: Vec2,
    pub excitations: ExcitationProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateLibrary {
    pub arm_model_hash: String,
    pub generation_seed: u64,
    pub templates: Vec<Template>,
}

/// Single-bump excitation family: muscle `m` follows
/// `A_m * sin^2(pi * t / T)` with `A_m ~ Uniform[0, max_amplitude]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveformSpec {
    pub max_amplitude: f64,
}

impl Default for WaveformSpec {
    fn default() -> Self {
        WaveformSpec { max_amplitude: 0.6 }
    }
}

impl WaveformSpec {
    /// Samples the bump for the given per-muscle amplitudes on the model grid.
    pub fn profile(amplitudes: &PerMuscle, model: &ArmModel) -> ExcitationProfile {
        let dt = model.integrator.dt;
        let steps = model.integrator.steps();
        let period = steps as f64 * dt;
        let samples = (0..steps)
            .map(|k| {
                let s = (PI * k as f64 * dt / period).sin();
                let shape = s * s;
                amplitudes.map(|a| (a * shape).clamp(0.0, 1.0))
            })
            .collect();
        ExcitationProfile { dt, samples }
    }
}

pub fn standard_initial_state() -> ArmState {
    ArmState::at_rest(STANDARD_POSTURE)
}

/// Draws `count` random bump excitations and records where each one leaves
/// the hand when started from the standard posture.
pub fn generate_library(
    model: &ArmModel,
    count: usize,
    seed: u64,
    waveform: &WaveformSpec,
) -> Result<TemplateLibrary> {
    if count == 0 {
        return Err(Error::Config("template count must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&waveform.max_amplitude) {
        return Err(Error::Config(format!(
            "waveform amplitude bound {} outside [0, 1]",
            waveform.max_amplitude
        )));
    }
    model.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let initial = standard_initial_state();
    let mut templates = Vec::with_capacity(count);
    let mut resamples = 0usize;
    let mut consecutive = 0usize;
    while templates.len() < count {
        let amplitudes: PerMuscle =
            std::array::from_fn(|_| rng.random::<f64>() * waveform.max_amplitude);
        let excitations = WaveformSpec::profile(&amplitudes, model);
        match final_position(&excitations, model, &initial) {
            Ok(p) => {
                consecutive = 0;
                templates.push(Template {
                    id: format!("tpl-{:04}", templates.len()),
                    final_position: p,
                    excitations,
                });
            }
            Err(e) => {
                resamples += 1;
                consecutive += 1;
                warn!("template draw rejected ({e}); resampling");
                if consecutive >= MAX_RESAMPLES {
                    return Err(e);
                }
            }
        }
    }
    if resamples > 0 {
        info!("generated {count} templates with {resamples} resamples");
    }
    Ok(TemplateLibrary {
        arm_model_hash: model.digest(),
        generation_seed: seed,
        templates,
    })
}

impl TemplateLibrary {
    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Template> {
        self.templates.iter().find(|t| t.id == id)
    }

    /// Axis-aligned bounding box (min, max) of the template final positions.
    pub fn bounding_box(&self) -> Option<(Vec2, Vec2)> {
        let first = self.templates.first()?.final_position;
        Some(self.templates.iter().fold((first, first), |(lo, hi), t| {
            let p = t.final_position;
            (
                Vec2::new(lo.x.min(p.x), lo.y.min(p.y)),
                Vec2::new(hi.x.max(p.x), hi.y.max(p.y)),
            )
        }))
    }

    /// Structural checks: unique ids and grids consistent with `model`.
    pub fn check_structure(&self, model: &ArmModel) -> Result<()> {
        let mut ids: Vec<&str> = self.templates.iter().map(|t| t.id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Schema {
                offset: 0,
                message: format!("duplicate template id {}", w[0]),
            });
        }
        for t in &self.templates {
            t.excitations.validate()?;
            t.excitations.check_grid(model)?;
        }
        Ok(())
    }

    /// Re-simulates every template and compares against its stored final
    /// position.
    pub fn verify(&self, model: &ArmModel, tolerance: f64) -> Result<()> {
        let initial = standard_initial_state();
        for t in &self.templates {
            let p = final_position(&t.excitations, model, &initial)?;
            let gap = p.distance(t.final_position);
            if !(gap <= tolerance) {
                return Err(Error::Schema {
                    offset: 0,
                    message: format!(
                        "template {} re-simulates to {p}, stored {} (gap {gap:e})",
                        t.id, t.final_position
                    ),
                });
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("library serializes")
    }

    /// Parses a library and checks it against the arm it will be used with.
    pub fn from_json(text: &str, model: &ArmModel) -> Result<Self> {
        let library: TemplateLibrary =
            serde_json::from_str(text).map_err(|e| Error::schema(text, &e))?;
        let found = model.digest();
        if library.arm_model_hash != found {
            return Err(Error::HashMismatch {
                expected: library.arm_model_hash,
                found,
            });
        }
        library.check_structure(model)?;
        Ok(library)
    }
}

pub fn save_library(library: &TemplateLibrary, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, library.to_json())?;
    Ok(())
}

/// Loads a library file. With `verify`, every template is re-simulated and
/// must land within 1e-9 m of its stored final position.
pub fn load_library(
    path: impl AsRef<Path>,
    model: &ArmModel,
    verify: bool,
) -> Result<TemplateLibrary> {
    let text = std::fs::read_to_string(path)?;
    let library = TemplateLibrary::from_json(&text, model)?;
    if verify {
        library.verify(model, 1e-9)?;
    }
    Ok(library)
}

/// The `n` templates closest to `target`, nearest first. Equal distances are
/// ordered by id.
pub fn nearest_templates(
    library: &TemplateLibrary,
    target: Vec2,
    n: usize,
) -> Result<Vec<&Template>> {
    if library.is_empty() {
        return Err(Error::EmptyLibrary);
    }
    if n > library.len() {
        return Err(Error::NotEnoughTemplates {
            requested: n,
            available: library.len(),
        });
    }
    let mut ranked: Vec<(f64, &Template)> = library
        .templates
        .iter()
        .map(|t| (t.final_position.distance(target), t))
        .collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.id.cmp(&b.1.id)));
    Ok(ranked.into_iter().take(n).map(|(_, t)| t).collect())
}

/// Amplitude of each muscle's bump, recovered from a profile generated by
/// [`WaveformSpec::profile`].
pub fn peak_excitations(profile: &ExcitationProfile) -> PerMuscle {
    let mut peak = [0.0; NUM_MUSCLES];
    for sample in &profile.samples {
        for (p, u) in peak.iter_mut().zip(sample) {
            *p = f64::max(*p, *u);
        }
    }
    peak
}
