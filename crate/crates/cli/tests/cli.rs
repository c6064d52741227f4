use std::process::{Command, Output};

use serde_json::Value;

fn perbranch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_perbranch"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn degree_reports_config_and_magnitude() {
    let v = json(&perbranch(&[
        "degree",
        "--problem",
        "paper-linear-3d",
        "--box=-1..1,-1..1,-1..1",
    ]));
    assert_eq!(v["command"], "degree");
    assert_eq!(v["config"]["name"], "paper-linear-3d");
    assert_eq!(v["config"]["lag"], 1.0);
    assert_eq!(v["result"]["degree"]["magnitude"], 1);
    assert_eq!(v["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn flow_writes_csv_with_config_header() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("flow.csv");
    let out = perbranch(&[
        "flow",
        "--problem",
        "forced-decay",
        "--lambda",
        "1",
        "--start",
        "0.5",
        "--samples",
        "8",
        "--csv",
        csv.to_str().unwrap(),
    ]);
    let v = json(&out);
    assert_eq!(v["result"]["truncated"], false);
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("# config: {"));
    assert!(lines[1].starts_with("# config_hash: "));
    assert_eq!(lines[2], "t,x0");
    assert_eq!(lines.len(), 3 + 9);
    let first: Vec<f64> = lines[3].split(',').map(|c| c.parse().unwrap()).collect();
    assert_eq!(first, vec![0.0, 0.5]);
}

#[test]
fn branch_json_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("branch.csv");
    let out_path = dir.path().join("branch.json");
    let out = perbranch(&[
        "branch",
        "--problem",
        "forced-decay",
        "--lambda-max",
        "2",
        "--csv",
        csv.to_str().unwrap(),
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    assert_eq!(v["result"]["branch"]["termination"], "lambda_max_reached");
    assert_eq!(v["result"]["degree"]["signed"], -1);
    let text = std::fs::read_to_string(&csv).unwrap();
    let last = text.lines().last().unwrap();
    let cols: Vec<f64> = last.split(',').map(|c| c.parse().unwrap()).collect();
    assert_eq!(cols[0], 2.0);
    assert!((cols[1] - 2f64.sqrt()).abs() < 1e-6);
}

#[test]
fn problem_files_are_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.toml");
    let out = perbranch(&[
        "config",
        "--problem",
        "two-species",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let a = json(&perbranch(&["trivial-pairs", "--problem", "two-species"]));
    let b = json(&perbranch(&[
        "trivial-pairs",
        "--problem",
        path.to_str().unwrap(),
    ]));
    assert_eq!(a["config_hash"], b["config_hash"]);
    assert_eq!(a["result"], b["result"]);

    let mut text = std::fs::read_to_string(&path).unwrap();
    text.push_str("\nunexpected = true\n");
    std::fs::write(&path, text).unwrap();
    let out = perbranch(&["degree", "--problem", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn exit_codes() {
    assert_eq!(perbranch(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(
        perbranch(&["degree", "--problem", "missing"]).status.code(),
        Some(2)
    );
    assert_eq!(
        perbranch(&["degree", "--box", "1..0"]).status.code(),
        Some(2)
    );
    assert_eq!(perbranch(&["verify", "nothing"]).status.code(), Some(2));
    // Degree zero on the chart: no branch is predicted.
    assert_eq!(
        perbranch(&["branch", "--problem", "circle-rotation"])
            .status
            .code(),
        Some(3)
    );
    // A box whose boundary contains the zero of the field.
    assert_eq!(
        perbranch(&["degree", "--problem", "forced-decay", "--box=0..1"])
            .status
            .code(),
        Some(3)
    );
}

#[test]
fn verify_is_reproducible() {
    let a = perbranch(&["verify", "degree-laws"]);
    let b = perbranch(&["verify", "degree-laws", "--threads", "2"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let v: Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(v["result"]["passed"], true);
    assert_eq!(v["config"]["suite"], "degree-laws");
}

#[test]
fn verify_rescale_passes() {
    let v = json(&perbranch(&["verify", "rescale", "--seed", "3"]));
    assert_eq!(v["result"]["seed"], 3);
    for c in v["result"]["checks"].as_array().unwrap() {
        assert_eq!(c["passed"], true);
        assert!(c["measured"].as_f64().unwrap() <= 1e-7);
    }
}
