//! End-to-end checks of the binary: exit codes, output determinism, and the
//! synth / train / evaluate round trip.

use std::path::Path;
use std::process::{Command, Output};

fn denfair() -> Command {
    Command::new(env!("CARGO_BIN_EXE_denfair"))
}

fn run(args: &[&str]) -> Output {
    denfair().args(args).output().expect("binary runs")
}

fn stdout(output: &Output) -> String {
    String::from_utf8(output.stdout.clone()).expect("stdout is UTF-8")
}

const TINY_CONFIG: &str = r#"
repetitions = 2
seed = 11
delta = 0.05
lambda = 0.05
methods = ["unconstrained", "denoised"]

[dataset.synthetic]
n = 300

[noise]
etas = [0.3, 0.1]

[[metrics]]
metric = "statistical_rate"
taus = [0.8]

[solver]
max_iterations = 100
restarts = 2
"#;

fn config_file(dir: &Path) -> String {
    let path = dir.join("config.toml");
    std::fs::write(&path, TINY_CONFIG).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn experiment_is_deterministic_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let config = config_file(dir.path());
    let first = run(&["experiment", "--config", &config]);
    assert!(first.status.success(), "{first:?}");
    let second = run(&["experiment", "--config", &config]);
    assert_eq!(stdout(&first), stdout(&second));
    let report: serde_json::Value = serde_json::from_str(&stdout(&first)).unwrap();
    assert!(report.get("cells").is_some());
    assert!(report.get("rows").is_some());
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = config_file(dir.path());
    let a = run(&["experiment", "--config", &config, "--seed", "1"]);
    let b = run(&["experiment", "--config", &config, "--seed", "2"]);
    assert!(a.status.success() && b.status.success());
    assert_ne!(stdout(&a), stdout(&b));
}

#[test]
fn unknown_config_key_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "repetitions = 2\nunknown_knob = 1\n").unwrap();
    let output = run(&["experiment", "--config", path.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2), "{output:?}");
}

#[test]
fn invalid_parameter_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "train_fraction = 1.5\n").unwrap();
    let output = run(&["experiment", "--config", path.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2), "{output:?}");
}

#[test]
fn missing_data_file_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("config.toml");
    std::fs::write(
        &path,
        r#"
repetitions = 2

[dataset.csv]
path = "/nonexistent/never.csv"

[dataset.csv.schema]
feature_columns = ["x0"]
label_column = "label"
positive_label = "1"

[[dataset.csv.schema.protected_columns]]
name = "group"
categories = ["a", "b"]

[[metrics]]
metric = "statistical_rate"
taus = [0.8]
"#,
    )
    .unwrap();
    let output = run(&["experiment", "--config", path.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(3), "{output:?}");
}

#[test]
fn synth_writes_loadable_csv() {
    let dir = tempfile::tempdir().unwrap();
    let config = config_file(dir.path());
    let data = dir.path().join("data.csv");
    let output = run(&[
        "synth",
        "--config",
        &config,
        "--out",
        data.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{output:?}");
    let text = std::fs::read_to_string(&data).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 301, "header plus one line per sample");
    assert_eq!(lines[0], "x0,x1,intercept,group,label");
    assert!(lines[1].contains(",g0,") || lines[1].contains(",g1,"));
}

#[test]
fn train_then_evaluate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let config = config_file(dir.path());
    let model = dir.path().join("model.json");
    let trained = run(&[
        "train",
        "--config",
        &config,
        "--out",
        model.to_str().unwrap(),
    ]);
    assert!(trained.status.success(), "{trained:?}");
    let saved: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&model).unwrap()).unwrap();
    assert!(saved.get("theta").is_some());

    let scored = run(&[
        "evaluate",
        "--config",
        &config,
        "--model",
        model.to_str().unwrap(),
    ]);
    assert!(scored.status.success(), "{scored:?}");
    let report: serde_json::Value = serde_json::from_str(&stdout(&scored)).unwrap();
    let accuracy = report["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&accuracy));
    assert_eq!(report["n"].as_u64(), Some(300));
}

#[test]
fn sweep_writes_merged_csv() {
    let dir = tempfile::tempdir().unwrap();
    let config = config_file(dir.path());
    let out = dir.path().join("sweep.csv");
    let output = run(&[
        "sweep",
        "--config",
        &config,
        "--axis",
        "tau",
        "--values",
        "0.6,0.8",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{output:?}");
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("axis,value,method,metric,tau"));
    // two axis points, two cells each (unconstrained and denoised)
    assert_eq!(lines.len(), 5, "{text}");
    assert!(lines[1].starts_with("tau,0.6,"));
}

#[test]
fn unknown_axis_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let config = config_file(dir.path());
    let output = run(&[
        "sweep", "--config", &config, "--axis", "bogus", "--values", "0.5",
    ]);
    assert_eq!(output.status.code(), Some(2), "{output:?}");
}
