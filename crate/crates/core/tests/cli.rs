use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use unravel::engine::SurrogateDataset;

fn unravel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_unravel"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn fixture() -> String {
    format!("{}/tests/fixtures/adapter.py", env!("CARGO_MANIFEST_DIR"))
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn surrogate(path: &Path) -> SurrogateDataset {
    SurrogateDataset::read_csv(fs::File::open(path).unwrap()).unwrap()
}

#[test]
fn explain_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = unravel(&[
        "explain",
        "--model",
        "forrester",
        "--x0",
        "0.5",
        "--budget",
        "6",
        "--seed",
        "3",
        "--out-dir",
        out,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let csv = fs::read_to_string(dir.path().join("surrogate.csv")).unwrap();
    assert!(csv.starts_with("# seed=3 config_hash="), "{csv}");
    let ds = surrogate(&dir.path().join("surrogate.csv"));
    assert_eq!(ds.len(), 7);
    assert_eq!(ds.points[0].x, vec![0.5]);
    assert!(ds.points.iter().all(|p| (0.0..=1.0).contains(&p.x[0])));

    let trace = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert_eq!(trace.lines().filter(|l| !l.starts_with('#')).count(), 8);

    let scores = read_json(&dir.path().join("scores.json"));
    assert_eq!(scores["queries"], 7);
    assert_eq!(scores["seed"], 3);
    let methods: Vec<&str> = scores["explanations"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["method"].as_str().unwrap())
        .collect();
    assert!(!methods.is_empty());
}

#[test]
fn explain_is_byte_identical_across_invocations() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let o = unravel(&[
            "explain",
            "--model",
            "logistic-synthetic",
            "--dim",
            "3",
            "--x0",
            "0.1,-0.4,0.9",
            "--budget",
            "8",
            "--seed",
            "11",
            "--out-dir",
            dir.path().to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let read = |d: &tempfile::TempDir| fs::read(d.path().join("surrogate.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
}

#[test]
fn unknown_acquisition_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = unravel(&[
        "explain",
        "--model",
        "forrester",
        "--x0",
        "0.5",
        "--acq",
        "ei",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("ei"));
    assert!(!dir.path().join("surrogate.csv").exists());
}

#[test]
fn shift_flag_is_checked() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let base = [
        "explain",
        "--model",
        "forrester",
        "--x0",
        "0.5",
        "--budget",
        "4",
        "--out-dir",
        out,
    ];
    let mut args = base.to_vec();
    args.extend(["--shift", "per-coordinate"]);
    let o = unravel(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let mut args = base.to_vec();
    args.extend(["--shift", "sideways"]);
    assert_eq!(unravel(&args).status.code(), Some(1));

    let mut args = base.to_vec();
    args.extend(["--acq", "ucb", "--shift", "broadcast"]);
    assert_eq!(unravel(&args).status.code(), Some(1));
}

#[test]
fn adapter_crash_exits_two_with_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    let cmd = format!("python3 {} crash-after 1 3", fixture());
    let o = unravel(&[
        "explain",
        "--adapter-cmd",
        &cmd,
        "--x0",
        "0.5",
        "--budget",
        "10",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let text = fs::read_to_string(dir.path().join("surrogate.csv")).unwrap();
    assert!(
        text.lines().any(|l| l.starts_with("# partial=true")),
        "{text}"
    );
    // three answered queries before the adapter exits
    assert_eq!(surrogate(&dir.path().join("surrogate.csv")).len(), 3);
}

#[test]
fn dataset_rows_reach_the_adapter_in_raw_units() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    fs::write(&data, "a,b,label\n10,1,0\n14,3,1\n12,2,0\n16,6,1\n").unwrap();
    let cmd = format!("python3 {} echo 2", fixture());
    let o = unravel(&[
        "explain",
        "--adapter-cmd",
        &cmd,
        "--dataset",
        data.to_str().unwrap(),
        "--target",
        "label",
        "--row",
        "1",
        "--budget",
        "4",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let ds = surrogate(&dir.path().join("surrogate.csv"));
    // the echo adapter answers with the raw first feature
    assert!((ds.points[0].y - 14.0).abs() < 1e-9, "{:?}", ds.points[0]);
    // and the surrogate keeps standardized coordinates
    assert!(ds.points[0].x[0].abs() < 2.0);
    let mean = 13.0;
    let sd = (((10.0f64 - mean).powi(2) + 1.0 + 1.0 + 9.0) / 4.0).sqrt();
    for p in &ds.points {
        let raw = mean + sd * p.x[0];
        let rel = (p.y - raw).abs() / raw.abs();
        assert!(
            rel < 1e-9 || (p.y - raw).abs() < 1e-9 * sd,
            "{p:?} vs {raw}"
        );
    }
    let scores = read_json(&dir.path().join("scores.json"));
    let names: Vec<&str> = scores["explanations"][0]["features"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f["name"].as_str().unwrap())
        .collect();
    assert!(names.contains(&"a") && names.contains(&"b"), "{names:?}");
}

#[test]
fn config_file_values_are_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(
        &cfg,
        r#"{"model": "forrester", "x0": [0.3], "budget": 9, "seed": 5}"#,
    )
    .unwrap();
    let o = unravel(&[
        "explain",
        "--config",
        cfg.to_str().unwrap(),
        "--budget",
        "2",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let ds = surrogate(&dir.path().join("surrogate.csv"));
    assert_eq!(ds.len(), 3);
    assert_eq!(ds.points[0].x, vec![0.3]);
    let scores = read_json(&dir.path().join("scores.json"));
    assert_eq!(scores["seed"], 5);

    fs::write(&cfg, r#"{"budget": "many"}"#).unwrap();
    let o = unravel(&[
        "explain",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn stability_reports_each_method() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let base = [
        "stability",
        "--model",
        "logistic-synthetic",
        "--dim",
        "4",
        "--samples",
        "2",
        "--top-k",
        "2",
        "--budget",
        "6",
        "--out-dir",
        out,
    ];
    let mut args = base.to_vec();
    args.extend(["--runs", "3", "--methods", "unravel,lime"]);
    let o = unravel(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = read_json(&dir.path().join("stability.json"));
    let methods = v["methods"].as_array().unwrap();
    assert_eq!(methods.len(), 2);
    assert_eq!(methods[0]["method"], "unravel");
    assert_eq!(methods[1]["method"], "lime");
    for m in methods {
        let mean = m["overall_mean"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&mean));
        assert_eq!(m["per_index_sample"].as_array().unwrap().len(), 2);
    }

    let mut args = base.to_vec();
    args.extend(["--runs", "3", "--methods", "lime", "--force-seed"]);
    let o = unravel(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = read_json(&dir.path().join("stability.json"));
    assert_eq!(v["methods"][0]["overall_mean"], 0.0);

    let mut args = base.to_vec();
    args.extend(["--runs", "1"]);
    assert_eq!(unravel(&args).status.code(), Some(1));

    let mut args = base.to_vec();
    args.extend(["--runs", "2", "--methods", "shap"]);
    assert_eq!(unravel(&args).status.code(), Some(1));
}

#[test]
fn regret_writes_report_and_rounds() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = unravel(&[
        "regret",
        "--trials",
        "3",
        "--budget",
        "4",
        "--eps-l",
        "0.5,2",
        "--seed",
        "2",
        "--out-dir",
        out,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = read_json(&dir.path().join("regret.json"));
    let reports = v["reports"].as_array().unwrap();
    assert_eq!(reports.len(), 2);
    assert_eq!(reports[0]["eps_l"], 0.5);
    assert_eq!(reports[1]["eps_l"], 2.0);
    assert_eq!(reports[0]["rounds"].as_array().unwrap().len(), 4);
    let rows = fs::read_to_string(dir.path().join("regret_rounds.csv")).unwrap();
    // header plus trials x rounds
    assert_eq!(
        rows.lines().filter(|l| !l.starts_with('#')).count(),
        1 + 3 * 4
    );

    let o = unravel(&[
        "regret",
        "--objective",
        "sphere",
        "--dim",
        "3",
        "--out-dir",
        out,
    ]);
    assert_eq!(o.status.code(), Some(1));
    let o = unravel(&["regret", "--eps-l", "0.0", "--out-dir", out]);
    assert_eq!(o.status.code(), Some(1));
}
