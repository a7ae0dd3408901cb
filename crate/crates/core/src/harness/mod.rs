//! End-to-end reaching experiment: plan, calibrate off-line, then learn an
//! online correction over several rounds, with tabular reports.

mod config;
mod report;

use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::arm::{final_position, ArmModel};
use crate::calibration::{offline_calibrate, online_fit, online_round, OnlineSettings};
use crate::error::{Error, Result};
use crate::planner::plan;
use crate::templates::{
    generate_library, load_library, standard_initial_state, TemplateLibrary, WaveformSpec,
};
use crate::vec2::Vec2;

pub use config::{ExperimentConfig, LibrarySpec, OutputSpec, Region, TargetSpec};
pub use report::{
    least_squares_slope, plot_data_csv, ExperimentReport, ReportRow, SkippedTarget, Stage,
    StageMean, PLOT_COLUMNS,
};

/// Loads the configured arm, or the default arm when none is given.
pub fn load_arm(config: &ExperimentConfig) -> Result<ArmModel> {
    match &config.arm {
        Some(path) => ArmModel::load(path),
        None => {
            let model = ArmModel::default();
            model.validate()?;
            Ok(model)
        }
    }
}

/// Loads the configured template library or generates it.
pub fn obtain_library(config: &ExperimentConfig, model: &ArmModel) -> Result<TemplateLibrary> {
    let spec = &config.library;
    match &spec.path {
        Some(path) => load_library(path, model, spec.verify),
        None => generate_library(
            model,
            spec.count,
            spec.seed.unwrap_or(config.seed),
            &WaveformSpec {
                max_amplitude: spec.max_amplitude,
            },
        ),
    }
}

/// Region targets are drawn from: the configured rectangle, or the template
/// bounding box shrunk by `shrink` of its extent.
pub fn target_region(config: &ExperimentConfig, library: &TemplateLibrary) -> Result<Region> {
    if let Some(region) = config.targets.region {
        return Ok(region);
    }
    let (lo, hi) = library.bounding_box().ok_or(Error::EmptyLibrary)?;
    let margin = (hi - lo) * (0.5 * config.targets.shrink);
    Ok(Region {
        min: lo + margin,
        max: hi - margin,
    })
}

/// Targets for round `round` (0 is the calibration batch). Every round
/// reuses the round-0 targets unless fresh targets are requested.
pub fn sample_targets(
    config: &ExperimentConfig,
    model: &ArmModel,
    region: &Region,
    round: u64,
) -> Result<Vec<Vec2>> {
    let spec = &config.targets;
    if let Some(points) = &spec.points {
        return Ok(points.clone());
    }
    let stream = if spec.fresh_per_round { round } else { 0 };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.unwrap_or(config.seed));
    // Stream 0 of the same seed draws the template library.
    rng.set_stream(1 + stream);
    let (inner, outer) = model.reach_bounds();
    let mut targets = Vec::with_capacity(spec.count);
    let mut rejected = 0usize;
    while targets.len() < spec.count {
        let p = Vec2::new(
            lerp(region.min.x, region.max.x, rng.random::<f64>()),
            lerp(region.min.y, region.max.y, rng.random::<f64>()),
        );
        let r = p.norm();
        if r >= inner && r <= outer {
            targets.push(p);
        } else {
            rejected += 1;
            if rejected > 1000 * spec.count {
                return Err(Error::Config(
                    "target region barely intersects the reachable workspace".into(),
                ));
            }
        }
    }
    Ok(targets)
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

/// Runs every stage of the experiment. Failures abort the remaining stages
/// and mark the report as partial instead of discarding finished work.
pub fn run_experiment(
    config: &ExperimentConfig,
    model: &ArmModel,
    library: &TemplateLibrary,
) -> Result<ExperimentReport> {
    config.validate(model)?;
    let mut report = ExperimentReport::new(config, model);
    if let Err(e) = run_stages(config, model, library, &mut report) {
        warn!("experiment aborted: {e}");
        report.partial = true;
        report.failure = Some(e.to_string());
    }
    report.refresh_means();
    Ok(report)
}

fn run_stages(
    config: &ExperimentConfig,
    model: &ArmModel,
    library: &TemplateLibrary,
    report: &mut ExperimentReport,
) -> Result<()> {
    let region = target_region(config, library)?;
    let targets = sample_targets(config, model, &region, 0)?;
    let initial = standard_initial_state();

    let mut plans = Vec::with_capacity(targets.len());
    for &target in &targets {
        let p = plan(target, library, config.num_templates)?;
        let actual = final_position(&p.blended_excitations, model, &initial)?;
        report.rows.push(ReportRow {
            round: 0,
            stage: Stage::Plan,
            target,
            actual,
            weights: p.weights.clone(),
            chosen_n: None,
            error: target.distance(actual),
        });
        plans.push(p);
    }

    let mut history = Vec::with_capacity(targets.len() * (config.rounds + 1));
    for p in &plans {
        let outcome = offline_calibrate(p, model, library, &config.gain_grid)?;
        let r = &outcome.record;
        report.rows.push(ReportRow {
            round: 0,
            stage: Stage::Offline,
            target: r.target,
            actual: r.achieved_after,
            weights: r.offline_weights.clone(),
            chosen_n: r.chosen_n,
            error: r.error_after,
        });
        history.push(outcome.record);
    }
    info!("off-line calibration of {} targets done", history.len());

    let settings = OnlineSettings {
        num_templates: config.num_templates,
        gain_grid: config.gain_grid,
        ridge_lambda: config.ridge_lambda,
    };
    let mut online_model = online_fit(&history, config.ridge_lambda)?;
    for round in 1..=config.rounds {
        let round_targets = if config.targets.fresh_per_round {
            sample_targets(config, model, &region, round as u64)?
        } else {
            targets.clone()
        };
        let (updated, round_report) = online_round(
            &round_targets,
            library,
            model,
            &online_model,
            &mut history,
            &settings,
        )?;
        for m in &round_report.movements {
            report.rows.push(ReportRow {
                round,
                stage: Stage::Online,
                target: m.target,
                actual: m.achieved_online,
                weights: m.online_weights.clone(),
                chosen_n: None,
                error: m.error_online,
            });
            report.rows.push(ReportRow {
                round,
                stage: Stage::Refined,
                target: m.target,
                actual: m.record.achieved_after,
                weights: m.record.offline_weights.clone(),
                chosen_n: m.record.chosen_n,
                error: m.record.error_after,
            });
        }
        report
            .skipped
            .extend(round_report.failed.iter().map(|(t, why)| SkippedTarget {
                round,
                target: *t,
                reason: why.clone(),
            }));
        info!(
            "round {round}: online mean error {:.5}, refined {:.5}",
            round_report.mean_error_online, round_report.mean_error_refined
        );
        online_model = updated;
    }
    report.online_model = Some(online_model);
    Ok(())
}
