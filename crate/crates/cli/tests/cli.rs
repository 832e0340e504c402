use std::path::Path;
use std::process::{Command, Output};

fn qgraph(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qgraph")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

#[test]
fn validate_round_trip_through_canonical_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "in.json",
        r#"{"cells": 6, "delta": 0.4, "alphas": [0.1, 0.7, -0.2], "alpha_drift": [0.05, 0.05, 0.1], "k": 0.9}"#,
    );
    let canon = dir.path().join("canon.json").display().to_string();
    let first = qgraph(&["validate", "--config", &cfg, "--emit-config", &canon]);
    assert!(first.status.success());
    let canon2 = dir.path().join("canon2.json").display().to_string();
    let second = qgraph(&["validate", "--config", &canon, "--emit-config", &canon2]);
    assert!(second.status.success());
    assert_eq!(stdout(&first), stdout(&second));
    assert_eq!(std::fs::read(&canon).unwrap(), std::fs::read(&canon2).unwrap());
    assert!(stdout(&first).contains("Z-invariant: yes, theta=twisted"));
}

#[test]
fn validate_examples() {
    let out = qgraph(&["validate"]);
    assert!(stdout(&out).ends_with("Z-invariant: yes, theta=0, gap margin 2\n"));

    let dir = tempfile::tempdir().unwrap();
    let gap = write(dir.path(), "gap.json", r#"{"cells": "0..5", "alpha_drift": [0.1, 0, 0]}"#);
    let out = qgraph(&["validate", "--config", &gap]);
    assert!(out.status.success());
    assert!(stdout(&out).ends_with("Z-invariant: no, obstruction at vertex 1\n"), "{}", stdout(&out));

    let delta = write(
        dir.path(),
        "delta.json",
        r#"{"cells": "0..3", "cell_params": {"0": {"delta": 0.1, "alphas": [0,0,0]}, "2": {"delta": 0.3, "alphas": [0,0,0]}}}"#,
    );
    let text = stdout(&qgraph(&["validate", "--config", &delta]));
    assert!(text.contains("eigenvalue mismatch"), "{text}");
    assert!(text.ends_with("obstruction at vertex 2\n"), "{text}");
}

#[test]
fn validate_general_graph() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "g.json",
        r#"{
  "graph": {
    "edges": [{"id": 0, "kind": "a", "length": 1.0}, {"id": 1, "kind": "b", "length": 2.0}],
    "vertices": [
      {"id": 0, "endpoints": [{"edge": 0, "end": "left"}, {"edge": 1, "end": "left"}]},
      {"id": 1, "endpoints": [{"edge": 0, "end": "right"}, {"edge": 1, "end": "right"}]}
    ]
  },
  "vertex_params": {"0": {"delta": 0.5, "alphas": [0]}, "1": {"alphas": [1]}}
}"#,
    );
    let out = qgraph(&["validate", "--config", &cfg]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("vertex 0: degree 2"));
    let out = qgraph(&["block", "--config", &cfg]);
    assert_eq!(stdout(&out).lines().count(), 5);
}

#[test]
fn csv_output_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for (cmd, extra) in [
        ("band", vec!["--kmin", "0.1", "--kmax", "6", "--samples", "300"]),
        ("closed", vec!["--m", "3", "--samples", "400"]),
        ("eigenfunction", vec!["--k", "0.7", "--points", "11"]),
        ("pointint", vec!["--k", "1.3"]),
        ("invariance", vec![]),
    ] {
        let a = dir.path().join(format!("{cmd}_a.csv")).display().to_string();
        let b = dir.path().join(format!("{cmd}_b.csv")).display().to_string();
        let mut args = vec![cmd, "--out", &a];
        args.extend(&extra);
        assert!(qgraph(&args).status.success(), "{cmd}");
        let mut args = vec![cmd, "--out", &b];
        args.extend(&extra);
        let out = Command::new(env!("CARGO_BIN_EXE_qgraph")).args(&args).env("QGRAPH_THREADS", "1").output().unwrap();
        assert!(out.status.success(), "{cmd}");
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap(), "{cmd}");
    }
}

#[test]
fn headers_and_row_order() {
    let band = stdout(&qgraph(&["band", "--kmin", "0.5", "--kmax", "1", "--samples", "5"]));
    assert_eq!(band.lines().next().unwrap(), "k,lambda1_re,lambda1_im,lambda2_re,lambda2_im,in_band");
    let ks: Vec<f64> = band.lines().skip(1).map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert!(ks.windows(2).all(|w| w[0] < w[1]));

    let closed = stdout(&qgraph(&["closed", "--m", "2", "--samples", "300"]));
    assert_eq!(closed.lines().next().unwrap(), "k,n,residual");

    let ef = stdout(&qgraph(&["eigenfunction", "--k", "0.5", "--cells", "2", "--points", "3"]));
    assert_eq!(ef.lines().next().unwrap(), "cell,kind,x,re,im,abs");
    let keys: Vec<(i64, String)> = ef
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].parse().unwrap(), f[1].to_string())
        })
        .collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
    assert_eq!(keys.len(), 5 * 3);

    let pi = stdout(&qgraph(&["pointint", "--points", "5"]));
    assert_eq!(pi.lines().next().unwrap(), "x,formula_re,formula_im,oracle_re,oracle_im");
}

#[test]
fn several_k_values_write_indexed_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ef.csv").display().to_string();
    let o = qgraph(&["eigenfunction", "--k", "0.3", "--k", "0.8", "--out", &out]);
    assert!(o.status.success());
    assert!(dir.path().join("ef_k0.csv").exists());
    assert!(dir.path().join("ef_k1.csv").exists());
    let o = qgraph(&["eigenfunction", "--k", "0.3", "--k", "0.8"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn exit_codes() {
    assert_eq!(qgraph(&["band", "--kmin", "abc"]).status.code(), Some(1));
    assert_eq!(qgraph(&["nonsense"]).status.code(), Some(1));
    assert_eq!(qgraph(&["closed"]).status.code(), Some(1));
    assert_eq!(qgraph(&["eigenfunction", "--k", "3"]).status.code(), Some(2));
    assert_eq!(qgraph(&["validate", "--config", "/nonexistent/config.json"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.json", "{\n  \"cells\": 4,\n  \"l_u\": \"one\"\n}");
    let o = qgraph(&["validate", "--config", &bad]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("l_u") && err.contains("line 3"), "{err}");
    let o = Command::new(env!("CARGO_BIN_EXE_qgraph")).arg("validate").env("QGRAPH_THREADS", "zero").output().unwrap();
    assert_eq!(o.status.code(), Some(1));
}
