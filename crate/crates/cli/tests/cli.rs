use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use reach_core::arm::ArmModel;
use reach_core::harness::ExperimentReport;
use reach_core::templates::load_library;

fn reach(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_reach"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn json(out: &Output) -> serde_json::Value {
    assert_eq!(
        code(out),
        0,
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is json")
}

fn library(dir: &Path, count: &str) {
    let out = reach(
        dir,
        &[
            "gen-templates",
            "--count",
            count,
            "--seed",
            "3",
            "--out",
            ".",
        ],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn gen_templates_is_seeded_and_loadable() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let summary = json(&reach(
        d,
        &["gen-templates", "--count", "6", "--seed", "5", "--out", "a"],
    ));
    assert_eq!(summary["count"], 6);
    json(&reach(
        d,
        &["gen-templates", "--count", "6", "--seed", "5", "--out", "b"],
    ));
    let a = fs::read(d.join("a/library.json")).unwrap();
    let b = fs::read(d.join("b/library.json")).unwrap();
    assert_eq!(a, b);
    let lib = load_library(d.join("a/library.json"), &ArmModel::default(), true).unwrap();
    assert_eq!(lib.len(), 6);
}

#[test]
fn zero_count_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = reach(dir.path(), &["gen-templates", "--count", "0"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn plan_and_simulate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    library(d, "12");
    let plan = json(&reach(
        d,
        &[
            "plan",
            "--library",
            "library.json",
            "--target",
            "-0.05,0.75",
        ],
    ));
    let weights: Vec<f64> = serde_json::from_value(plan["weights"].clone()).unwrap();
    assert_eq!(weights.len(), 4);
    assert!((weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);

    let sim = json(&reach(
        d,
        &[
            "simulate",
            "--library",
            "library.json",
            "--target",
            "-0.05,0.75",
        ],
    ));
    assert!(sim["error"].as_f64().unwrap() >= 0.0);

    let out = reach(
        d,
        &[
            "simulate",
            "--amplitudes",
            "0,0,0,0,0,0",
            "--trajectory",
            "--out",
            "sim",
            "--format",
            "csv",
        ],
    );
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("final_x,final_y,error\n"));
    let trajectory = fs::read_to_string(d.join("sim/trajectory.csv")).unwrap();
    assert_eq!(trajectory.lines().count(), 1 + 1001);

    let csv = reach(
        d,
        &[
            "plan",
            "--library",
            "library.json",
            "--target",
            "0,0.8",
            "--format",
            "csv",
        ],
    );
    let text = String::from_utf8(csv.stdout).unwrap();
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn calibrate_logs_and_refits() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    library(d, "12");
    let args = [
        "calibrate",
        "--library",
        "library.json",
        "--target",
        "0.0,0.8",
        "--records",
        "log.jsonl",
        "--online-model",
        "online.json",
        "--refit",
    ];
    let first = json(&reach(d, &args));
    let record = &first["record"];
    assert!(record["error_after"].as_f64().unwrap() <= record["error_before"].as_f64().unwrap());
    assert_eq!(first["candidates"].as_array().unwrap().len(), 22);
    assert!(d.join("online.json").exists());

    let mut second = args.to_vec();
    second[4] = "-0.1,0.7";
    json(&reach(d, &second));
    assert_eq!(
        fs::read_to_string(d.join("log.jsonl"))
            .unwrap()
            .lines()
            .count(),
        2
    );
    let model: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("online.json")).unwrap()).unwrap();
    assert_eq!(model["training_record_count"], 2);
}

#[test]
fn experiment_writes_reports_and_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("config.json"),
        r#"{"seed": 2, "library": {"count": 16}, "targets": {"count": 5}, "rounds": 2}"#,
    )
    .unwrap();
    let summary = json(&reach(
        d,
        &["experiment", "--config", "config.json", "--out", "run"],
    ));
    assert_eq!(summary["partial"], false);
    let csv = fs::read_to_string(d.join("run/report.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "round,target_x,target_y,stage,actual_x,actual_y,w1,w2,w3,w4,chosen_n,error"
    );
    assert_eq!(lines.count(), 5 * 2 + 2 * 5 * 2);

    let report =
        ExperimentReport::from_json(&fs::read_to_string(d.join("run/report.json")).unwrap())
            .unwrap();
    for m in &report.means {
        let rows: Vec<f64> = report
            .rows
            .iter()
            .filter(|r| r.round == m.round && r.stage == m.stage)
            .map(|r| r.error)
            .collect();
        let mean = rows.iter().sum::<f64>() / rows.len() as f64;
        assert!((mean - m.mean_error).abs() <= 1e-12);
    }

    let out = reach(d, &["plot-data", "--report", "run/report.json"]);
    assert_eq!(code(&out), 0);
    let plot = String::from_utf8(out.stdout).unwrap();
    assert_eq!(
        plot.lines().count(),
        1 + report.means.len() + report.rows.len()
    );
    assert!(plot.lines().all(|l| l.split(',').count() == 6));

    let mut empty: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("run/report.json")).unwrap()).unwrap();
    empty["rows"] = serde_json::json!([]);
    empty["means"] = serde_json::json!([]);
    fs::write(d.join("empty.json"), empty.to_string()).unwrap();
    let out = reach(d, &["plot-data", "--report", "empty.json"]);
    assert_eq!(
        String::from_utf8(out.stdout).unwrap(),
        "series,round,stage,target_x,target_y,error\n"
    );

    fs::write(d.join("broken.json"), r#"{"seed": 1}"#).unwrap();
    assert_eq!(
        code(&reach(d, &["plot-data", "--report", "broken.json"])),
        4
    );
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    library(d, "6");

    fs::write(d.join("bad.json"), "{\"rounds\": 2,").unwrap();
    assert_eq!(code(&reach(d, &["experiment", "--config", "bad.json"])), 4);
    fs::write(d.join("unknown.json"), "{\"colour\": 2}").unwrap();
    assert_eq!(
        code(&reach(d, &["experiment", "--config", "unknown.json"])),
        4
    );
    fs::write(
        d.join("far.json"),
        r#"{"targets": {"region": {"min": [2.0, 2.0], "max": [3.0, 3.0]}}}"#,
    )
    .unwrap();
    assert_eq!(code(&reach(d, &["experiment", "--config", "far.json"])), 2);
    assert_eq!(
        code(&reach(
            d,
            &["plan", "--library", "missing.json", "--target", "0,0.8"]
        )),
        2
    );

    let mut other = ArmModel::default();
    other.links.damping = [0.9, 0.9];
    other.save(d.join("other_arm.json")).unwrap();
    assert_eq!(
        code(&reach(
            d,
            &[
                "plan",
                "--arm",
                "other_arm.json",
                "--library",
                "library.json",
                "--target",
                "0,0.8"
            ]
        )),
        4
    );

    let mut collapsing = ArmModel::default();
    collapsing.muscles[2].rest_length = 0.0;
    collapsing.save(d.join("collapsing_arm.json")).unwrap();
    assert_eq!(
        code(&reach(
            d,
            &[
                "simulate",
                "--arm",
                "collapsing_arm.json",
                "--amplitudes",
                "0.1,0.1,0.1,0.1,0.1,0.1"
            ]
        )),
        3
    );
}

#[test]
fn shipped_configs_match_defaults() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let config = reach_core::harness::ExperimentConfig::load(root.join("experiment.json")).unwrap();
    assert_eq!(config, reach_core::harness::ExperimentConfig::default());
    assert_eq!(
        ArmModel::load(root.join("arm_default.json")).unwrap(),
        ArmModel::default()
    );
}
