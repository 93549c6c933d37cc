use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn wola(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wola")).args(args).output().unwrap()
}

fn configs() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/configs"))
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let k = lines.next().unwrap().split(',').position(|h| h == name).unwrap();
    lines.map(|l| l.split(',').nth(k).unwrap().parse().unwrap()).collect()
}

#[test]
fn minimal_run_writes_one_row_per_round() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("minimal.toml");
    let out = wola(&["run", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("seed_1.csv")).unwrap();
    assert_eq!(csv.lines().count(), 51);
    let loss = column(&csv, "mean_honest_loss");
    // window averages of ten rounds
    let smooth: Vec<f64> = loss.chunks(10).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
    assert!(smooth.windows(2).all(|w| w[1] <= w[0]), "{smooth:?}");
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["test_accuracy"]["sd"], 0.0);
}

#[test]
fn seed_flag_overrides_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("minimal.toml");
    let out = wola(&["run", "--config", cfg.to_str().unwrap(), "--seed", "7", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    assert!(dir.path().join("seed_7.csv").exists());
    assert!(!dir.path().join("seed_1.csv").exists());
}

#[test]
fn bad_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(configs().join("minimal.toml")).unwrap().replace("f = 0", "f = 3");
    let path = dir.path().join("bad.toml");
    fs::write(&path, text).unwrap();
    let out = wola(&["run", "--config", path.to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("`f`"), "{err}");

    let out = wola(&["run", "--config", dir.path().join("missing.toml").to_str().unwrap()]);
    assert!(!out.status.success());
}

#[test]
fn sweep_runs_one_cell_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(configs().join("minimal.toml")).unwrap().replace("rounds = 50", "rounds = 5");
    let path = dir.path().join("c.toml");
    fs::write(&path, text).unwrap();
    let out_dir = dir.path().join("out");
    let out = wola(&[
        "sweep",
        "--config",
        path.to_str().unwrap(),
        "--axis",
        "alpha",
        "--values",
        "0.1,1,10",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = fs::read_to_string(out_dir.join("sweep_alpha.csv")).unwrap();
    assert_eq!(table.lines().count(), 4);
    for v in ["0.1", "1", "10"] {
        assert!(out_dir.join(format!("alpha={v}")).join("summary.json").exists());
    }
    let out = wola(&["sweep", "--config", path.to_str().unwrap(), "--axis", "bogus", "--values", "1"]);
    assert!(!out.status.success());
}

#[test]
fn bound_check_and_fig1() {
    let out = wola(&["bound-check", "--n", "17", "--f", "6", "--trials", "20", "--seed", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("fig1.csv");
    let data = concat!(env!("CARGO_MANIFEST_DIR"), "/data/iris.csv");
    let out = wola(&["fig1", "--data", data, "--out", csv.to_str().unwrap(), "--steps", "20"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 22);
    assert!(text.lines().next().unwrap().contains("cos_"));
}
