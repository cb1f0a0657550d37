use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn twinbreed(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_twinbreed"))
        .args(args)
        .env("TWINBREED_DATA_DIR", data_dir())
        .env_remove("TWINBREED_JOBS")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn desk_evolve_writes_identical_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let runs: Vec<PathBuf> = ["a", "b"].iter().map(|r| dir.path().join(r)).collect();
    for out in &runs {
        let o = twinbreed(&[
            "evolve", "--task", "banknote", "--pop-size", "40", "--generations", "5", "--epochs", "100", "--seed", "7",
            "--out", path(out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for file in ["population.jsonl", "population_a.jsonl", "population_b.jsonl", "stats.csv", "manifest_evolve.json"] {
        let a = std::fs::read(runs[0].join(file)).unwrap();
        let b = std::fs::read(runs[1].join(file)).unwrap();
        assert!(!a.is_empty(), "{file} is empty");
        assert_eq!(a, b, "{file} differs between runs");
    }
    let merged = std::fs::read_to_string(runs[0].join("population.jsonl")).unwrap();
    assert_eq!(merged.lines().count(), 40);
}

#[test]
fn unknown_flag_prints_usage() {
    let o = twinbreed(&["evolve", "--task", "banknote", "--colour", "blue"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("Usage"), "{}", stderr(&o));
}

#[test]
fn unknown_subcommand_fails() {
    let o = twinbreed(&["teleport"]);
    assert!(!o.status.success());
}

#[test]
fn unknown_task_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = twinbreed(&["preprocess", "--task", "iris", "--seed", "1", "--out", path(dir.path())]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("iris"));
}

#[test]
fn seed_is_mandatory() {
    let dir = tempfile::tempdir().unwrap();
    let o = twinbreed(&["preprocess", "--task", "german", "--out", path(dir.path())]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("seed"), "{}", stderr(&o));
}

#[test]
fn config_errors_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "seed = 1\npop_size = 6\n").unwrap();
    let o = twinbreed(&["--config", path(&cfg), "evolve", "--task", "german", "--out", path(dir.path())]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("multiple of 4"), "{}", stderr(&o));

    let o = twinbreed(&["--config", path(&dir.path().join("missing.toml")), "baseline", "--out", path(dir.path())]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("missing.toml"), "{}", stderr(&o));
}

#[test]
fn missing_data_directory_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_twinbreed"))
        .args(["preprocess", "--task", "german", "--seed", "1", "--out", path(dir.path())])
        .env("TWINBREED_DATA_DIR", dir.path().join("nowhere"))
        .output()
        .unwrap();
    assert!(!o.status.success());
    assert!(stderr(&o).contains("loading german"), "{}", stderr(&o));
}

#[test]
fn stages_chain_through_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(dir.path());
    let scale = ["--pop-size", "8", "--epochs", "5", "--seed", "3"];
    let run = |args: &[&str]| {
        let o = twinbreed(args);
        assert!(o.status.success(), "{args:?}: {}", stderr(&o));
        o
    };
    run(&[&["evolve", "--task", "german", "--generations", "1", "--out", out][..], &scale].concat());
    let pop = dir.path().join("population.jsonl");
    run(&[
        &["transfer", "--source", "german", "--targets", "german,banknote", "--repeats", "1", "--pop", path(&pop), "--out", out][..],
        &scale,
    ]
    .concat());
    run(&[&["baseline", "--targets", "german,banknote", "--repeats", "1", "--out", out][..], &scale].concat());
    run(&["report", "--in", out]);
    run(&["report", "--in", out, "--format", "json"]);
    for f in ["transfer_german.json", "baseline.json", "table_german.csv", "table_german_full.csv", "benchmark_long.csv", "report.json"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let table = std::fs::read_to_string(dir.path().join("table_german.csv")).unwrap();
    assert_eq!(table.lines().next().unwrap(), "block,metric,german,banknote");
    assert_eq!(table.lines().count(), 15);

    run(&["preprocess", "--task", "banknote", "--seed", "3", "--out", out]);
    let csv = std::fs::read_to_string(dir.path().join("banknote.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1373);

    let o = run(&["relatedness", "--tasks", "german,banknote", "--repeats", "1", "--epochs", "2", "--seed", "3", "--out", out]);
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("task,german,banknote"));
}

#[test]
fn report_without_inputs_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = twinbreed(&["report", "--in", path(dir.path())]);
    assert!(!o.status.success());
}

#[test]
fn calibrate_writes_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let grid = dir.path().join("grid.json");
    std::fs::write(
        &grid,
        r#"{"hidden":[5,10],"rate":[0.05,0.1],"momentum":[0.01],"slope":[0.5,1.0],"epochs":5}"#,
    )
    .unwrap();
    let o = twinbreed(&[
        "calibrate", "--task", "banknote", "--grid", path(&grid), "--quantile", "0.25", "--seed", "2", "--out",
        path(dir.path()),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let bounds = std::fs::read_to_string(dir.path().join("bounds_banknote.json")).unwrap();
    assert!(bounds.contains("\"hidden\""));
}
