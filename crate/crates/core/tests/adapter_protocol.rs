use std::io::{BufRead, BufReader, Write};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use unravel::blackbox::{subprocess_model, BlackBoxModel, ModelError, SubprocessModelConfig};
use unravel::dataset::FeatureStats;
use unravel::engine::{run_unravel, ExplainRequest};
use unravel::explainers::sparse_linear_importance;
use unravel::gpr::KernelFamily;

fn fixture() -> String {
    format!("{}/tests/fixtures/adapter.py", env!("CARGO_MANIFEST_DIR"))
}

fn config(args: &[&str]) -> SubprocessModelConfig {
    let mut command = vec!["python3".to_string(), fixture()];
    command.extend(args.iter().map(|s| s.to_string()));
    SubprocessModelConfig::new(command)
}

#[test]
fn echo_handshake_and_queries() {
    let mut m = subprocess_model(&config(&["echo", "3"])).unwrap();
    assert_eq!(m.dim(), 3);
    assert_eq!(m.name(), "fixture-echo");
    assert_eq!(m.predict(&[1.0, 2.0, 9.0]).unwrap(), 1.0);
    assert_eq!(m.predict(&[-0.25, 0.0, 0.0]).unwrap(), -0.25);
    // repeated queries agree exactly
    let a = m.predict(&[0.1, 0.2, 0.3]).unwrap();
    let b = m.predict(&[0.1, 0.2, 0.3]).unwrap();
    assert_eq!(a, b);
    assert!(matches!(
        m.predict(&[1.0]),
        Err(ModelError::InputDimension {
            expected: 3,
            got: 1
        })
    ));
    m.close();

    let mut one = subprocess_model(&config(&["echo", "1"])).unwrap();
    assert_eq!(one.predict(&[3.5]).unwrap(), 3.5);
}

#[test]
fn invalid_json_answer_is_malformed() {
    let mut m = subprocess_model(&config(&["invalid-json", "2"])).unwrap();
    assert!(matches!(
        m.predict(&[0.0, 0.0]),
        Err(ModelError::Malformed(_))
    ));
    // the session is not reused after a protocol violation
    assert!(matches!(
        m.predict(&[0.0, 0.0]),
        Err(ModelError::ChildExited)
    ));
}

#[test]
fn silent_adapter_times_out() {
    let mut cfg = config(&["sleepy", "1"]);
    cfg.per_query_timeout = Duration::from_millis(300);
    let mut m = subprocess_model(&cfg).unwrap();
    let start = Instant::now();
    assert!(matches!(m.predict(&[0.5]), Err(ModelError::Timeout(_))));
    drop(m);
    assert!(start.elapsed() < Duration::from_secs(10));
}

#[test]
fn crash_mid_run_is_reported() {
    let mut m = subprocess_model(&config(&["crash-after", "1", "2"])).unwrap();
    assert_eq!(m.predict(&[0.1]).unwrap(), 0.1);
    assert_eq!(m.predict(&[0.2]).unwrap(), 0.2);
    assert!(matches!(m.predict(&[0.3]), Err(ModelError::ChildExited)));
}

#[test]
fn missing_handshake_fails_at_startup() {
    assert!(subprocess_model(&config(&["no-hello"])).is_err());
    let bad = SubprocessModelConfig::new(vec!["/nonexistent/adapter-binary".into()]);
    assert!(matches!(
        subprocess_model(&bad),
        Err(ModelError::Spawn { .. })
    ));
    assert!(matches!(
        subprocess_model(&SubprocessModelConfig::new(vec![])),
        Err(ModelError::EmptyCommand)
    ));
}

#[test]
fn engine_recovers_echo_weights() {
    let mut m = subprocess_model(&config(&["echo", "3"])).unwrap();
    let req = ExplainRequest::new(
        vec![0.2, -0.1, 0.4],
        15,
        KernelFamily::Matern52Ard,
        &FeatureStats::unit(3),
        4,
    );
    let (ds, _) = run_unravel(&req, &mut m).unwrap();
    assert_eq!(ds.len(), 16);
    let s = sparse_linear_importance(&ds, Some(0.0)).unwrap();
    let want = [1.0, 0.0, 0.0];
    for (got, w) in s.signed_scores.iter().zip(want) {
        assert!((got - w).abs() < 1e-4, "{:?}", s.signed_scores);
    }
}

#[test]
fn malformed_lines_do_not_stop_the_adapter() {
    let mut child = Command::new("python3")
        .args([fixture().as_str(), "echo", "2"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut stdin = child.stdin.take().unwrap();
    let mut out = BufReader::new(child.stdout.take().unwrap());
    let garbage = [
        "not json at all",
        "{\"id\": 1",
        "[1, 2, 3]",
        "{\"id\": 2, \"x\": \"abc\"}",
        "{\"id\": 3, \"x\": [1]}",
        "\u{7f}\u{1}",
        "{}",
    ];
    for g in garbage {
        writeln!(stdin, "{g}").unwrap();
        let mut line = String::new();
        out.read_line(&mut line).unwrap();
        let v: serde_json::Value = serde_json::from_str(&line).unwrap();
        assert!(v.get("error").is_some(), "{g:?} -> {line}");
    }
    writeln!(stdin, "{{\"id\": 9, \"x\": [4.5, 1.0]}}").unwrap();
    let mut line = String::new();
    out.read_line(&mut line).unwrap();
    let v: serde_json::Value = serde_json::from_str(&line).unwrap();
    assert_eq!(v["id"], 9);
    assert_eq!(v["y"], 4.5);
    writeln!(stdin, "{{\"op\": \"bye\"}}").unwrap();
    drop(stdin);
    assert!(child.wait().unwrap().success());
}
