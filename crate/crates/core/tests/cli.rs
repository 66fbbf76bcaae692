use std::path::Path;
use std::process::{Command, Output};

use chaotic_hedging::harness::presets::{self, DEFAULT_SEED};
use chaotic_hedging::harness::{PathFileMeta, SimulationConfig};
use chaotic_hedging::models::{simulate_paths, ModelSpec, PathBatch, StateSpace, TimeGrid};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chaotic-hedging")).args(args).output().unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_writes_a_readable_path_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = SimulationConfig {
        model: ModelSpec::cev(100.0, -0.02, 0.4).unwrap(),
        grid: TimeGrid::new(1.0, 20).unwrap(),
        n_paths: 30,
        seed: 1,
        measure: Default::default(),
    };
    let cfg_path = dir.path().join("sim.json");
    std::fs::write(&cfg_path, serde_json::to_string(&config).unwrap()).unwrap();
    let out = dir.path().join("out");
    let o = cli(&["simulate", "--config", path_str(&cfg_path), "--out", path_str(&out), "--seed", "7"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let meta: PathFileMeta = serde_json::from_str(&std::fs::read_to_string(out.join("paths.json")).unwrap()).unwrap();
    assert_eq!(meta.seed, 7);
    let file = std::fs::File::open(out.join("paths.chpb")).unwrap();
    let read = PathBatch::read_binary(file, meta.horizon, meta.seed, meta.measure).unwrap();
    let direct = simulate_paths(&config.model, config.grid, 30, 7, meta.measure).unwrap();
    assert_eq!(read.states, direct.states);
}

#[test]
fn run_writes_the_four_result_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = presets::cev(true, DEFAULT_SEED).unwrap();
    config.n_paths = 300;
    config.grid = TimeGrid::new(1.0, 20).unwrap();
    config.orders = vec![0, 2];
    config.m_n = 4;
    let cfg_path = dir.path().join("run.json");
    std::fs::write(&cfg_path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    let out = dir.path().join("results");
    let o = cli(&["--threads", "1", "run", "--config", path_str(&cfg_path), "--out", path_str(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["report.json", "learning_curve.csv", "payoff_scatter.csv", "hedge_paths.csv"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
}

#[test]
fn reproduce_can_dump_its_config() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(&["reproduce", "affine", "--desk-scale", "--dump-config", "--out", path_str(dir.path())]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(dir.path().join("config.json")).unwrap();
    let back: chaotic_hedging::harness::ExperimentConfig = serde_json::from_str(&text).unwrap();
    assert_eq!(back, presets::affine(true, DEFAULT_SEED).unwrap());
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"model\": 3}").unwrap();
    assert_eq!(cli(&["run", "--config", path_str(&bad)]).status.code(), Some(2));

    let mut config = presets::bm(true, 1).unwrap();
    config.train_fraction = 1.5;
    std::fs::write(&bad, serde_json::to_string(&config).unwrap()).unwrap();
    let o = cli(&["run", "--config", path_str(&bad)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("train_fraction"));
}

#[test]
fn numerical_failures_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let config = SimulationConfig {
        model: ModelSpec::polynomial_1d(1e100, 0.0, 0.0, 0.0, 0.0, 1e200, StateSpace::RealLine).unwrap(),
        grid: TimeGrid::new(1.0, 10).unwrap(),
        n_paths: 2,
        seed: 1,
        measure: Default::default(),
    };
    let cfg_path = dir.path().join("sim.json");
    std::fs::write(&cfg_path, serde_json::to_string(&config).unwrap()).unwrap();
    let o = cli(&["simulate", "--config", path_str(&cfg_path), "--out", path_str(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn missing_config_is_an_io_error() {
    let o = cli(&["run", "--config", "/nonexistent/config.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/config.json"));
}
