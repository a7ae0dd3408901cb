use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::json;

use reach_core::arm::{simulate, ArmModel, ExcitationProfile, NUM_MUSCLES};
use reach_core::calibration::{
    append_records, offline_calibrate_from, online_features, online_fit, online_predict,
    read_records, GainGrid, OnlineCalibrationModel,
};
use reach_core::harness::{
    load_arm, obtain_library, plot_data_csv, run_experiment, ExperimentConfig, ExperimentReport,
};
use reach_core::planner::{plan, Plan};
use reach_core::templates::{
    generate_library, load_library, save_library, standard_initial_state, TemplateLibrary,
    WaveformSpec,
};
use reach_core::{Error, Vec2};

use crate::{exit, Cli, Command, Format, MovementArgs};

const DEFAULT_SEED: u64 = 7;

pub fn run(cli: &Cli) -> Result<u8> {
    match &cli.command {
        Command::GenTemplates {
            count,
            max_amplitude,
            name,
        } => gen_templates(cli, *count as usize, *max_amplitude, name),
        Command::Plan { movement } => plan_cmd(cli, movement),
        Command::Simulate {
            library,
            target,
            templates,
            amplitudes,
            trajectory,
        } => simulate_cmd(
            cli,
            library.as_deref(),
            *target,
            *templates as usize,
            amplitudes.as_deref(),
            *trajectory,
        ),
        Command::Calibrate {
            movement,
            n_min,
            n_max,
            online_model,
            records,
            refit,
            ridge_lambda,
        } => calibrate_cmd(
            cli,
            movement,
            GainGrid {
                min: *n_min,
                max: *n_max,
            },
            online_model.as_deref(),
            records.as_deref(),
            *refit,
            *ridge_lambda,
        ),
        Command::Experiment { config, rounds } => experiment_cmd(cli, config.as_deref(), *rounds),
        Command::PlotData { report } => plot_data_cmd(cli, report),
    }
}

fn arm(cli: &Cli) -> Result<ArmModel> {
    match &cli.arm {
        Some(path) => {
            ArmModel::load(path).with_context(|| format!("loading arm {}", path.display()))
        }
        None => Ok(ArmModel::default()),
    }
}

fn out_dir(cli: &Cli) -> Result<PathBuf> {
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn library(path: &Path, model: &ArmModel) -> Result<TemplateLibrary> {
    load_library(path, model, false).with_context(|| format!("loading library {}", path.display()))
}

fn print_json(value: &serde_json::Value) {
    println!(
        "{}",
        serde_json::to_string_pretty(value).expect("json value serializes")
    );
}

fn csv_line(fields: impl IntoIterator<Item = String>) -> String {
    fields.into_iter().collect::<Vec<_>>().join(",")
}

fn gen_templates(cli: &Cli, count: usize, max_amplitude: f64, name: &str) -> Result<u8> {
    let model = arm(cli)?;
    let seed = cli.seed.unwrap_or(DEFAULT_SEED);
    if !(max_amplitude > 0.0 && max_amplitude <= 1.0) {
        return Err(
            Error::Config(format!("max amplitude {max_amplitude} is outside (0, 1]")).into(),
        );
    }
    let lib = generate_library(&model, count, seed, &WaveformSpec { max_amplitude })?;
    let path = out_dir(cli)?.join(name);
    save_library(&lib, &path).with_context(|| format!("writing {}", path.display()))?;
    let (lo, hi) = lib.bounding_box().ok_or(Error::EmptyLibrary)?;
    match cli.format {
        Format::Json => print_json(&json!({
            "path": path,
            "count": lib.len(),
            "seed": seed,
            "arm_model_hash": lib.arm_model_hash,
            "bounding_box": { "min": lo, "max": hi },
        })),
        Format::Csv => {
            println!("count,seed,min_x,min_y,max_x,max_y");
            println!(
                "{}",
                csv_line([
                    lib.len().to_string(),
                    seed.to_string(),
                    lo.x.to_string(),
                    lo.y.to_string(),
                    hi.x.to_string(),
                    hi.y.to_string()
                ])
            );
        }
    }
    Ok(0)
}

fn make_plan(model: &ArmModel, args: &MovementArgs) -> Result<(TemplateLibrary, Plan)> {
    let lib = library(&args.library, model)?;
    let p = plan(args.target, &lib, args.templates as usize)?;
    Ok((lib, p))
}

fn plan_cmd(cli: &Cli, args: &MovementArgs) -> Result<u8> {
    let model = arm(cli)?;
    let (_, p) = make_plan(&model, args)?;
    match cli.format {
        Format::Json => print_json(&json!({
            "target": p.target,
            "template_ids": p.template_ids,
            "template_positions": p.template_positions,
            "weights": p.weights,
            "predicted_position": p.predicted_position,
            "clamped_samples": p.clamped_samples,
        })),
        Format::Csv => {
            println!("template_id,position_x,position_y,weight");
            for ((id, pos), w) in p
                .template_ids
                .iter()
                .zip(&p.template_positions)
                .zip(&p.weights)
            {
                println!(
                    "{}",
                    csv_line([
                        id.clone(),
                        pos.x.to_string(),
                        pos.y.to_string(),
                        w.to_string()
                    ])
                );
            }
        }
    }
    Ok(0)
}

fn simulate_cmd(
    cli: &Cli,
    library_path: Option<&Path>,
    target: Option<Vec2>,
    templates: usize,
    amplitudes: Option<&[f64]>,
    write_trajectory: bool,
) -> Result<u8> {
    let model = arm(cli)?;
    let profile: ExcitationProfile = match (library_path, target, amplitudes) {
        (Some(path), Some(t), None) => {
            let lib = library(path, &model)?;
            plan(t, &lib, templates)?.blended_excitations
        }
        (None, None, Some(a)) => {
            if a.len() != NUM_MUSCLES {
                return Err(Error::Config(format!(
                    "expected {NUM_MUSCLES} amplitudes, got {}",
                    a.len()
                ))
                .into());
            }
            let mut peaks = [0.0; NUM_MUSCLES];
            peaks.copy_from_slice(a);
            if let Some(bad) = peaks.iter().find(|a| !(0.0..=1.0).contains(*a)) {
                return Err(Error::Config(format!("amplitude {bad} is outside [0, 1]")).into());
            }
            WaveformSpec::profile(&peaks, &model)
        }
        _ => {
            return Err(Error::Config(
                "give either --library and --target, or --amplitudes".into(),
            )
            .into());
        }
    };
    let trajectory = simulate(&profile, &model, &standard_initial_state())?;
    let end = trajectory.final_position;
    let error = target.map(|t| t.distance(end));
    if write_trajectory {
        let path = out_dir(cli)?.join("trajectory.csv");
        let mut text = String::from("time,hand_x,hand_y,shoulder,elbow\n");
        for (s, p) in trajectory.states.iter().zip(&trajectory.hand_positions) {
            text.push_str(&csv_line([
                s.time.to_string(),
                p.x.to_string(),
                p.y.to_string(),
                s.q[0].to_string(),
                s.q[1].to_string(),
            ]));
            text.push('\n');
        }
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    match cli.format {
        Format::Json => print_json(&json!({
            "final_position": end,
            "target": target,
            "error": error,
        })),
        Format::Csv => {
            println!("final_x,final_y,error");
            println!(
                "{}",
                csv_line([
                    end.x.to_string(),
                    end.y.to_string(),
                    error.map(|e| e.to_string()).unwrap_or_default()
                ])
            );
        }
    }
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn calibrate_cmd(
    cli: &Cli,
    args: &MovementArgs,
    grid: GainGrid,
    online_model_path: Option<&Path>,
    records_path: Option<&Path>,
    refit: bool,
    ridge_lambda: f64,
) -> Result<u8> {
    if grid.min > grid.max {
        return Err(
            Error::Config(format!("gain grid [{}, {}] is empty", grid.min, grid.max)).into(),
        );
    }
    let model = arm(cli)?;
    let (lib, p) = make_plan(&model, args)?;
    let online_model = match online_model_path {
        Some(path) if path.exists() => {
            let text = fs::read_to_string(path)?;
            Some(
                OnlineCalibrationModel::from_json(&text)
                    .with_context(|| format!("loading {}", path.display()))?,
            )
        }
        Some(_) if refit => None,
        Some(path) => {
            return Err(Error::Config(format!("online model {} not found", path.display())).into())
        }
        None => None,
    };
    let start = match &online_model {
        Some(m) => {
            let phi = online_features(p.target, &p.template_positions, &p.weights)?;
            let dw = online_predict(m, &phi)?;
            p.weights.iter().zip(dw).map(|(w, d)| w + d).collect()
        }
        None => p.weights.clone(),
    };
    let outcome = offline_calibrate_from(&p, &start, &model, &lib, &grid)?;

    if let Some(path) = records_path {
        append_records(path, std::slice::from_ref(&outcome.record))
            .with_context(|| format!("appending to {}", path.display()))?;
        if refit {
            let history =
                read_records(path).with_context(|| format!("reading {}", path.display()))?;
            let fitted = online_fit(&history, ridge_lambda)?;
            let model_path = online_model_path.expect("clap requires --online-model with --refit");
            fs::write(model_path, fitted.to_json() + "\n")
                .with_context(|| format!("writing {}", model_path.display()))?;
        }
    }

    match cli.format {
        Format::Json => print_json(&json!({
            "record": outcome.record,
            "candidates": outcome.candidates.iter().map(|c| json!({
                "n": c.n,
                "error": c.error,
                "achieved": c.achieved,
            })).collect::<Vec<_>>(),
        })),
        Format::Csv => {
            let mut header = vec!["n".to_string(), "achieved_x".into(), "achieved_y".into()];
            header.extend((1..=p.weights.len()).map(|i| format!("w{i}")));
            header.push("error".into());
            println!("{}", header.join(","));
            for c in &outcome.candidates {
                let mut fields = vec![
                    c.n.map(|n| n.to_string())
                        .unwrap_or_else(|| "baseline".into()),
                    c.achieved.x.to_string(),
                    c.achieved.y.to_string(),
                ];
                fields.extend(c.weights.iter().map(f64::to_string));
                fields.push(c.error.to_string());
                println!("{}", fields.join(","));
            }
        }
    }
    Ok(0)
}

fn experiment_cmd(cli: &Cli, config_path: Option<&Path>, rounds: Option<usize>) -> Result<u8> {
    let mut config = match config_path {
        Some(path) => {
            let mut c = ExperimentConfig::load(path)
                .with_context(|| format!("loading config {}", path.display()))?;
            c.resolve_paths(path.parent().unwrap_or(Path::new(".")));
            c
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(arm) = &cli.arm {
        config.arm = Some(arm.clone());
    }
    if let Some(r) = rounds {
        config.rounds = r;
    }
    // --out wins over the paths in the config file.
    let pick = |configured: &Option<PathBuf>, name: &str| match (&cli.out, configured) {
        (Some(dir), _) => dir.join(name),
        (None, Some(path)) => path.clone(),
        (None, None) => PathBuf::from(name),
    };
    let csv_path = pick(&config.output.csv, "report.csv");
    let json_path = pick(&config.output.json, "report.json");

    let model = load_arm(&config).context("loading arm")?;
    let lib = obtain_library(&config, &model).context("preparing template library")?;
    let report = run_experiment(&config, &model, &lib)?;

    for path in [&csv_path, &json_path] {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(&csv_path, report.to_csv()?)
        .with_context(|| format!("writing {}", csv_path.display()))?;
    fs::write(&json_path, report.to_json() + "\n")
        .with_context(|| format!("writing {}", json_path.display()))?;

    match cli.format {
        Format::Json => print_json(&json!({
            "config_digest": report.config_digest,
            "seed": report.seed,
            "means": report.means,
            "learning_slope": report.learning_slope,
            "partial": report.partial,
            "failure": report.failure,
            "csv": csv_path,
            "json": json_path,
        })),
        Format::Csv => {
            println!("round,stage,mean_error,count");
            for m in &report.means {
                println!(
                    "{}",
                    csv_line([
                        m.round.to_string(),
                        m.stage.to_string(),
                        m.mean_error.to_string(),
                        m.count.to_string()
                    ])
                );
            }
        }
    }
    if report.partial {
        eprintln!(
            "error: experiment incomplete: {}",
            report.failure.as_deref().unwrap_or("unknown failure")
        );
        return Ok(exit::SIMULATION);
    }
    Ok(0)
}

fn plot_data_cmd(cli: &Cli, report_path: &Path) -> Result<u8> {
    let text = fs::read_to_string(report_path)
        .with_context(|| format!("reading {}", report_path.display()))?;
    let report = ExperimentReport::from_json(&text)
        .with_context(|| format!("parsing {}", report_path.display()))?;
    let table = plot_data_csv(&report)?;
    match &cli.out {
        Some(_) => {
            let path = out_dir(cli)?.join("plot.csv");
            fs::write(&path, table).with_context(|| format!("writing {}", path.display()))?;
        }
        None => print!("{table}"),
    }
    Ok(0)
}
