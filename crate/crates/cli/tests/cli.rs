use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ligand-svm"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn staged_workflow_produces_consistent_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--out", "s.svm", "--samples", "400", "--seed", "3"]);
    ok(d, &["split", "s.svm", "--out", "parts", "--seed", "3"]);
    ok(
        d,
        &[
            "train",
            "parts/s.train.svm",
            "--out",
            "m.json",
            "--loss",
            "l2",
            "--c-exponents",
            "-3..3",
        ],
    );
    let uncal = ok(d, &["predict", "parts/s.test.svm", "--model", "m.json"]);
    assert!(uncal.lines().next().unwrap().starts_with("score\tprobability\tlabel"));
    for line in uncal.lines().skip(1) {
        let cols: Vec<&str> = line.split('\t').collect();
        assert_eq!(cols[1], "-");
        assert_eq!(cols[2] == "1", cols[0].parse::<f64>().unwrap() >= 0.0, "{line}");
    }
    ok(d, &["calibrate", "parts/s.calibration.svm", "--model", "m.json"]);
    let report = ok(
        d,
        &[
            "evaluate",
            "parts/s.test.svm",
            "--model",
            "m.json",
            "--report",
            "json",
            "--out",
            "m.json",
        ],
    );
    assert!(report.contains("\"auc\""));
    let pred = ok(
        d,
        &[
            "predict",
            "parts/s.test.svm",
            "--model",
            "m.json",
            "--threshold",
            "0.53",
        ],
    );
    let rows: Vec<&str> = pred.lines().skip(1).collect();
    assert_eq!(rows.len(), 64);
    for line in rows {
        let cols: Vec<&str> = line.split('\t').collect();
        let p: f64 = cols[1].parse().unwrap();
        assert_eq!(cols[2] == "1", p > 0.53, "{line}");
    }
}

#[test]
fn pipeline_writes_model_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--out", "s.svm", "--samples", "500"]);
    let text = ok(
        d,
        &[
            "pipeline",
            "--input",
            "s.svm",
            "--fractions",
            "0.6,0.2,0.2",
            "--out",
            "run",
        ],
    );
    assert!(text.contains("Calibrated model"));
    assert!(d.join("run/model.json").exists());
    assert!(d.join("run/report.txt").exists());
    ok(
        d,
        &["pipeline", "--input", "s.svm", "--report", "json", "--out", "json"],
    );
    assert!(d.join("json/report.json").exists());
}

#[test]
fn exit_codes_follow_error_kind() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(run(d, &["--help"]).status.code(), Some(0));
    assert_eq!(run(d, &["train"]).status.code(), Some(1));
    assert_eq!(
        run(d, &["train", "x.svm", "--out", "m.json", "--loss", "l3"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        run(d, &["train", "absent.svm", "--out", "m.json"]).status.code(),
        Some(2)
    );
    std::fs::write(d.join("bad.svm"), "+1 2:1 1:1\n").unwrap();
    let bad = run(d, &["train", "bad.svm", "--out", "m.json"]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("line 1: non-increasing feature index"));
    ok(d, &["synth", "--out", "s.svm", "--samples", "100", "--features", "4"]);
    ok(d, &["train", "s.svm", "--out", "m.json", "--c-exponents", "0..1"]);
    let thr = run(d, &["predict", "s.svm", "--model", "m.json", "--threshold", "0.5"]);
    assert_eq!(thr.status.code(), Some(1));
}

#[test]
fn dimension_mismatch_names_both_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--out", "a.svm", "--samples", "100", "--features", "4"]);
    ok(d, &["synth", "--out", "b.svm", "--samples", "20", "--features", "7"]);
    ok(d, &["train", "a.svm", "--out", "m.json", "--c-exponents", "0..1"]);
    let out = run(d, &["predict", "b.svm", "--model", "m.json"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("expected 4") && err.contains("found 7"), "{err}");
}
