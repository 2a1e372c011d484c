use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gem::pipeline::GemModel;
use gem_cli::export::parse_dump;

fn gem(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gem")).current_dir(dir).args(args).output().expect("run gem")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = gem(dir, args);
    assert!(out.status.success(), "gem {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn json(path: PathBuf) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Gaussian train/test files and a config pointing at them.
fn workspace(dim: usize, classes: usize) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let (d, k) = (dim.to_string(), classes.to_string());
    for (name, seed, n) in [("train.csv", "1", "1500"), ("test.csv", "2", "600")] {
        ok(dir.path(), &["generate", "--task", "gaussian", "--dim", &d, "--classes", &k, "--n", n, "--seed", seed, "--out", name]);
    }
    std::fs::write(dir.path().join("run.conf"), "# synthetic Gaussians\ndata = train.csv\ntest_data = test.csv\nl2 = 1e-3\n").unwrap();
    dir
}

#[test]
fn train_writes_model_report_and_resolved_config() {
    let ws = workspace(4, 3);
    let dir = ws.path();
    let stdout = ok(dir, &["train", "--config", "run.conf", "--out", "run"]);
    assert!(stdout.contains("test: error"));
    for f in ["model.gem", "report.txt", "summary.json", "config.resolved"] {
        assert!(dir.join("run").join(f).exists(), "{f}");
    }
    let report = std::fs::read_to_string(dir.join("run/report.txt")).unwrap();
    assert!(report.lines().any(|l| l.starts_with("test: error")));
    let summary = json(dir.join("run/summary.json"));
    assert_eq!(summary["models"][0]["test"]["examples"], 600);
    // The resolved copy reproduces the run on its own.
    ok(dir, &["train", "--config", "run/config.resolved", "--out", "again"]);
    assert_eq!(std::fs::read(dir.join("run/model.gem")).unwrap(), std::fs::read(dir.join("again/model.gem")).unwrap());
}

#[test]
fn missing_data_exits_2_without_outputs() {
    let ws = workspace(3, 2);
    let dir = ws.path();
    let out = gem(dir, &["train", "--config", "run.conf", "--set", "data=absent.csv", "--out", "run"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.join("run").exists());
    let out = gem(dir, &["train", "--config", "missing.conf"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_errors_exit_2() {
    let ws = workspace(3, 2);
    let dir = ws.path();
    for bad in ["gama=0.2", "gamma=-1", "layers=5", "pairs=uniform", "format=tsv"] {
        let out = gem(dir, &["train", "--config", "run.conf", "--set", bad, "--out", "run"]);
        assert_eq!(out.status.code(), Some(2), "{bad}");
        assert!(!dir.join("run").exists());
    }
}

#[test]
fn compute_failure_exits_1_without_outputs() {
    let ws = workspace(3, 2);
    let dir = ws.path();
    let out = gem(dir, &["train", "--config", "run.conf", "--set", "theta=1e9", "--out", "run"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("theta"));
    assert!(!dir.join("run").exists());
}

#[test]
fn identical_runs_give_identical_model_files() {
    let ws = workspace(4, 4);
    let dir = ws.path();
    let extra = ["--set", "rff.features=32", "--set", "rff.sigma=2", "--set", "pairs=stratified", "--set", "pairs.count=6", "--set", "layers=2"];
    for run in ["a", "b"] {
        let mut args = vec!["train", "--config", "run.conf", "--out", run];
        args.extend(extra);
        ok(dir, &args);
    }
    assert_eq!(std::fs::read(dir.join("a/model.gem")).unwrap(), std::fs::read(dir.join("b/model.gem")).unwrap());
}

#[test]
fn predict_smoke_determinism_and_mismatch() {
    let ws = workspace(4, 3);
    let dir = ws.path();
    ok(dir, &["train", "--config", "run.conf", "--out", "run"]);
    ok(dir, &["predict", "--model", "run/model.gem", "--data", "test.csv", "--out", "p1.txt"]);
    ok(dir, &["predict", "--model", "run/model.gem", "--data", "test.csv", "--out", "p2.txt"]);
    let text = std::fs::read_to_string(dir.join("p1.txt")).unwrap();
    assert_eq!(text, std::fs::read_to_string(dir.join("p2.txt")).unwrap());
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 600);
    for row in rows {
        let p: Vec<f64> = row.split_whitespace().skip(1).map(|t| t.parse().unwrap()).collect();
        assert_eq!(p.len(), 3);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
    ok(dir, &["generate", "--task", "gaussian", "--dim", "5", "--classes", "3", "--n", "10", "--out", "wide.csv"]);
    let out = gem(dir, &["predict", "--model", "run/model.gem", "--data", "wide.csv", "--out", "p3.txt"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.join("p3.txt").exists());
}

#[test]
fn eval_matches_fit_time_metrics_and_ensembles_of_copies() {
    let ws = workspace(4, 3);
    let dir = ws.path();
    ok(dir, &["train", "--config", "run.conf", "--out", "run"]);
    let recorded = &json(dir.join("run/summary.json"))["models"][0]["train"];
    let single = ok(dir, &["eval", "--model", "run/model.gem", "--data", "train.csv", "--summary", "eval.json"]);
    assert!(single.contains(&format!("errors {}\n", recorded["errors"])));
    let ce = recorded["cross_entropy"].as_f64().unwrap();
    assert!(single.contains(&format!("cross_entropy {ce:.4}\n")), "{single}");
    let evaluated = json(dir.join("eval.json"));
    assert!((evaluated["metrics"]["cross_entropy"].as_f64().unwrap() - ce).abs() < 1e-12);

    std::fs::copy(dir.join("run/model.gem"), dir.join("copy.gem")).unwrap();
    let pair = ok(dir, &["eval", "--model", "run/model.gem", "--model", "copy.gem", "--data", "train.csv"]);
    let ce_line = pair.lines().find(|l| l.starts_with("cross_entropy")).unwrap();
    let digits = ce_line.split_whitespace().nth(1).unwrap();
    assert_eq!(digits.split('.').nth(1).unwrap().len(), 4);
    assert_eq!(pair, single);
}

#[test]
fn ensemble_training_writes_members() {
    let ws = workspace(4, 6);
    let dir = ws.path();
    let stdout = ok(dir, &["train", "--config", "run.conf", "--set", "ensemble=3", "--set", "pairs=hypercube", "--out", "run"]);
    assert!(stdout.contains("ensemble of 3"));
    for m in 1..=3 {
        assert!(dir.join(format!("run/model-{m:02}.gem")).exists());
    }
    let summary = json(dir.join("run/summary.json"));
    assert!(summary["ensemble"]["test"]["cross_entropy"].is_number());
    ok(dir, &["eval", "--model", "run/model-01.gem", "--model", "run/model-02.gem", "--model", "run/model-03.gem", "--data", "test.csv"]);
}

#[test]
fn export_images_and_text_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let dir = dir.path();
    ok(dir, &["generate", "--task", "gaussian", "--dim", "784", "--classes", "2", "--n", "1600", "--out", "img.csv"]);
    ok(dir, &["train", "--set", "data=img.csv", "--set", "m_max=2", "--set", "dump_layout=true", "--out", "run"]);
    assert!(dir.join("run/layout.txt").exists());
    ok(dir, &["export-detectors", "--model", "run/model.gem", "--out", "det", "--image", "28x28"]);
    let model = GemModel::load(&dir.join("run/model.gem")).unwrap();
    let bank: Vec<_> = model.detector_bank().into_iter().map(|(_, d)| d.clone()).collect();
    let rows = parse_dump(&std::fs::read_to_string(dir.join("det/detectors.txt")).unwrap()).unwrap();
    assert_eq!(rows.len(), bank.len());
    for (row, det) in rows.iter().zip(&bank) {
        assert_eq!(row.rank, det.rank + 1);
        assert_eq!(row.vector.len(), 784);
        let gap = row.vector.iter().zip(&det.vector).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(gap <= 1e-12);
    }
    for i in 1..=bank.len() {
        let file = std::fs::File::open(dir.join(format!("det/detector-{i:03}.png"))).unwrap();
        let reader = png::Decoder::new(std::io::BufReader::new(file)).read_info().unwrap();
        assert_eq!((reader.info().width, reader.info().height), (28, 28));
    }
    assert!(dir.join("det/detectors.png").exists());

    let out = gem(dir, &["export-detectors", "--model", "run/model.gem", "--out", "text", "--image", "20x20"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
    assert_eq!(std::fs::read_dir(dir.join("text")).unwrap().count(), 1);
}

#[test]
fn export_rejects_random_feature_first_stage() {
    let ws = workspace(3, 2);
    let dir = ws.path();
    ok(dir, &["train", "--config", "run.conf", "--set", "rff.features=16", "--out", "run"]);
    let out = gem(dir, &["export-detectors", "--model", "run/model.gem", "--out", "det"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.join("det").exists());
}

#[test]
fn search_writes_table_and_reusable_best_config() {
    let ws = workspace(4, 3);
    let dir = ws.path();
    ok(dir, &["search", "--config", "run.conf", "--set", "grid.gamma=0.05,0.5", "--set", "grid.l2=1e-3,1e-1", "--out", "s"]);
    let table = std::fs::read_to_string(dir.join("s/search.txt")).unwrap();
    assert_eq!(table.lines().filter(|l| !l.starts_with('#')).count(), 4);
    assert_eq!(table.lines().filter(|l| l.contains('*')).count(), 1);
    ok(dir, &["train", "--config", "s/best.conf", "--out", "best"]);
    assert_eq!(std::fs::read(dir.join("s/model.gem")).unwrap(), std::fs::read(dir.join("best/model.gem")).unwrap());
}

#[test]
fn keys_lists_every_configuration_key() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(dir.path(), &["keys"]);
    assert_eq!(out.lines().count(), gem_cli::config::KEYS.len());
}
