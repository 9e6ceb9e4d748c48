use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use anisocanon_lab::report::MetricsReport;

const SMALL: &str = "task = band-orientation
per_class = 10
epochs = 2
folds = 2
hidden = 16
strategies = 4, 8, 4+2
";

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_anisocanon"))
        .args(args)
        .env("ANISOCANON_THREADS", "2")
        .output()
        .expect("run the binary")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn full_workflow_on_a_small_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("small.conf");
    fs::write(&conf, SMALL).unwrap();
    let data = dir.path().join("data");
    let run = dir.path().join("run");

    let o = cli(&["gen-data", "--config", path(&conf), "--out", path(&data)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["data.jsonl", "manifest.json", "generator.conf"] {
        assert!(data.join(f).exists(), "{f}");
    }

    let o = cli(&["train", "--config", path(&conf), "--data", path(&data), "--out", path(&run)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("PASS report consistency"));
    for f in ["metrics.json", "timing.json", "history.json", "fold0.ckpt", "fold1.ckpt"] {
        assert!(run.join(f).exists(), "{f}");
    }
    let report: MetricsReport = serde_json::from_slice(&fs::read(run.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(report.folds.len(), 2);
    assert!(report.is_consistent());

    let ckpt = run.join("fold1.ckpt");
    let eval = dir.path().join("eval");
    let o = cli(&["eval", "--checkpoint", path(&ckpt), "--data", path(&data), "--out", path(&eval)]);
    assert!(o.status.success());
    let log = fs::read_to_string(eval.join("decisions.jsonl")).unwrap();
    // One record per (sample, class): 20 held-out graphs times 4 classes.
    assert_eq!(log.lines().count(), 80);
    let fold1: serde_json::Value = serde_json::from_slice(&fs::read(eval.join("eval.json")).unwrap()).unwrap();
    assert_eq!(fold1["accuracy"].as_f64().unwrap(), report.folds[1].accuracy);

    let audit = dir.path().join("audit");
    let o = cli(&[
        "audit-invariance", "--checkpoint", path(&ckpt), "--data", path(&data), "--out", path(&audit), "--mode",
        "orbit", "--trials", "10", "--candidates", "4", "--refine-steps", "2", "--min-rate", "1.0",
    ]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(audit.join("audit.json").exists());

    let o = cli(&["report", path(&run.join("metrics.json"))]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("fold  1"));

    let o = cli(&["report", path(&run.join("metrics.json")), "--min-accuracy", "1.01"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL minimum accuracy"));

    let cmp = dir.path().join("cmp");
    let o = cli(&["compare-search", "--config", path(&conf), "--data", path(&data), "--out", path(&cmp)]);
    assert!(matches!(o.status.code(), Some(0 | 1)));
    let csv = fs::read_to_string(cmp.join("search.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(cmp.join("search_checks.json").exists());
}

#[test]
fn threshold_failure_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("c.conf");
    fs::write(&conf, "task = band-orientation\nper_class = 6\nepochs = 1\nfolds = 2\nrun_folds = 1\nhidden = 8\n").unwrap();
    let out = dir.path().join("out");
    let o = cli(&["train", "--config", path(&conf), "--out", path(&out), "--max-accuracy=-1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL maximum accuracy"));
}

#[test]
fn errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("bad.conf");
    fs::write(&conf, "task = band-orientation\nfolds = 1\n").unwrap();
    let o = cli(&["train", "--config", path(&conf), "--out", path(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));

    fs::write(&conf, "model = anlsf\ntask = grid-scaled\n").unwrap();
    let o = cli(&["train", "--config", path(&conf), "--out", path(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));

    let missing = dir.path().join("nope.ckpt");
    let o = cli(&["eval", "--checkpoint", path(&missing), "--out", path(dir.path())]);
    assert_eq!(o.status.code(), Some(2));

    let o = Command::new(env!("CARGO_BIN_EXE_anisocanon"))
        .env("ANISOCANON_THREADS", "many")
        .args(["report"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn corrupted_dataset_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("c.conf");
    fs::write(&conf, "task = shapes\nper_class = 2\npoints = 8\n").unwrap();
    let data = dir.path().join("data");
    assert!(cli(&["gen-data", "--config", path(&conf), "--out", path(&data)]).status.success());
    let file = data.join("data.jsonl");
    let mut text = fs::read_to_string(&file).unwrap();
    text = text.replacen('1', "2", 1);
    fs::write(&file, text).unwrap();
    let o = cli(&["train", "--config", path(&conf), "--data", path(&data), "--out", path(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).to_lowercase().contains("checksum"));
}
