use std::path::Path;
use std::process::{Command, Output};

fn ptpai(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ptpai")).current_dir(dir).args(args).output().expect("binary runs")
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

/// Overrides that shrink the benchmark to a few seconds.
const TINY: [&str; 11] = [
    "data.segment=256",
    "data.healthy_len=6000",
    "data.source.per_class=8",
    "data.target.per_class=40",
    "train.epochs=1",
    "train.batch_per_domain=8",
    "train.net.conv=[{kernel = 8, stride = 4, filters = 4}]",
    "train.net.bottleneck=[8, 8]",
    "train.net.head_hidden=[8]",
    "repeats=1",
    "methods=[\"PTPAI\", \"source-only\"]",
];

fn with_tiny<'a>(mut args: Vec<&'a str>) -> Vec<&'a str> {
    for s in TINY {
        args.push("--set");
        args.push(s);
    }
    args
}

#[test]
fn lists_the_catalog() {
    let dir = tempfile::tempdir().unwrap();
    let out = ptpai(dir.path(), &["list-scenarios"]);
    assert!(out.status.success());
    let stdout = text(&out.stdout);
    assert!(stdout.contains("C4-10pct") && stdout.contains("J7-1pct") && stdout.contains("bench-partial-1pct"));
    let row = stdout.lines().find(|l| l.starts_with("C4-complete")).unwrap();
    assert!(row.contains("NC,IRF "), "{row}");
}

#[test]
fn missing_data_file_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = ptpai(dir.path(), &["run", "C1-complete"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("data/source.manifest.toml"), "{}", text(&out.stderr));

    let out = ptpai(dir.path(), &["run", "--config", "absent.toml"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("absent.toml"));
}

#[test]
fn config_errors_point_at_the_line() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "repeats = 1\n[train]\nepochs = -3\n").unwrap();
    let out = ptpai(dir.path(), &["run", "--config", "bad.toml"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains("line 3"), "{}", text(&out.stderr));

    let out = ptpai(dir.path(), &["run", "no-such-task"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains("no-such-task"));
}

#[test]
fn run_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let mut reports = Vec::new();
    for out_dir in ["a", "b"] {
        let args = with_tiny(vec!["run", "bench-partial-10pct", "--out", out_dir]);
        let out = ptpai(dir.path(), &args);
        assert!(out.status.success(), "{}", text(&out.stderr));
        assert!(text(&out.stdout).contains("PTPAI"));
        reports.push(std::fs::read(dir.path().join(out_dir).join("D2-10pct/report.json")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
    let report = text(&reports[0]);
    assert!(report.contains("\"input_hash\"") && report.contains("\"batch_per_domain\": 8"));
}

#[test]
fn generate_train_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let out = ptpai(dir.path(), &with_tiny(vec!["generate", "--out", "data"]));
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert!(dir.path().join("data/source.manifest.toml").is_file());
    let manifest = std::fs::read_to_string(dir.path().join("data/target.manifest.toml")).unwrap();
    assert!(manifest.contains("sealed_labels") && !manifest.contains("\nlabels"));

    let args = with_tiny(vec![
        "train",
        "--source",
        "data/source.manifest.toml",
        "--target",
        "data/target.manifest.toml",
        "--method",
        "PAIR",
        "--out",
        "model",
    ]);
    let out = ptpai(dir.path(), &args);
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert!(dir.path().join("model/pair.ckpt").is_file());
    assert!(dir.path().join("model/pair.history.jsonl").is_file());

    let out = ptpai(dir.path(), &["evaluate", "--checkpoint", "model/pair.ckpt", "--data", "data/target.manifest.toml"]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let scores: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((0.0..=1.0).contains(&scores["b_accuracy"].as_f64().unwrap()));

    let out = ptpai(dir.path(), &["evaluate", "--checkpoint", "model/none.ckpt", "--data", "data/target.manifest.toml"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn runs_on_prepared_files() {
    let dir = tempfile::tempdir().unwrap();
    assert!(ptpai(dir.path(), &with_tiny(vec!["generate", "--out", "data"])).status.success());
    let mut args = with_tiny(vec!["run", "D4-10pct", "--out", "runs"]);
    args.extend(["--set", "data={kind = \"files\", source = \"data/source.manifest.toml\", target = \"data/target.manifest.toml\"}"]);
    let out = ptpai(dir.path(), &args);
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert!(dir.path().join("runs/D4-10pct/metrics.txt").is_file());
}
