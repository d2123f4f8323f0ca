//! End-to-end checks of the binary interface: exit codes, error JSON on
//! stderr, the dimension-cap override, and output file layout.

use std::process::{Command, Stdio};

fn exe() -> &'static str {
    env!("CARGO_BIN_EXE_gadgetlab")
}

#[test]
fn verify_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("verify.json");
    std::fs::write(
        &cfg,
        r#"{"kind":"gadget-verify","parameters":{"gadget":"subdivision","delta":1e4},"seed":5}"#,
    )
    .unwrap();
    let out = dir.path().join("witness.csv");
    let status = Command::new(exe())
        .args([
            "gadget-verify",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])
        .stdout(Stdio::null())
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("# gadgetlab v"));
    assert!(csv.contains("delta,eta,eps,h_prime_norm,seed"));
    let summary = std::fs::read_to_string(dir.path().join("witness.summary.json")).unwrap();
    let parsed: serde_json::Value = serde_json::from_str(&summary).unwrap();
    assert_eq!(parsed["ancilla_sites"], serde_json::json!([2]));
    assert!(parsed["witness"]["eta"].as_f64().unwrap() > 0.0);
}

#[test]
fn kind_mismatch_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"kind":"boolfun","parameters":{"n":3,"k":3,"k_prime":2}}"#,
    )
    .unwrap();
    let output = Command::new(exe())
        .args(["zeno-sweep", "--config", cfg.to_str().unwrap()])
        .stdout(Stdio::null())
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let err: serde_json::Value =
        serde_json::from_slice(&output.stderr).expect("machine-readable error JSON");
    assert_eq!(err["kind"], "schema");
    assert_eq!(err["exit"], 2);
}

#[test]
fn dim_cap_env_override_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"kind":"gadget-verify","parameters":{"gadget":"subdivision","delta":1e4},"seed":0}"#,
    )
    .unwrap();
    let out = dir.path().join("never.csv");
    let output = Command::new(exe())
        .args([
            "gadget-verify",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])
        .env("GADGETLAB_DIM_CAP", "4")
        .stdout(Stdio::null())
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(3));
    assert!(!out.exists());
    let err: serde_json::Value = serde_json::from_slice(&output.stderr).unwrap();
    assert_eq!(err["kind"], "dimension");
}

#[test]
fn eigenvalue_at_cut_exits_4() {
    // subdivision of Z (x) Z at Delta = 2 checked at Delta/2 = 1 puts the cut
    // exactly on an eigenvalue
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"kind":"gadget-verify","parameters":{"gadget":"subdivision","delta":2.0},"seed":0}"#,
    )
    .unwrap();
    let output = Command::new(exe())
        .args(["gadget-verify", "--config", cfg.to_str().unwrap()])
        .current_dir(dir.path())
        .stdout(Stdio::null())
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(4));
    let err: serde_json::Value = serde_json::from_slice(&output.stderr).unwrap();
    assert_eq!(err["kind"], "ambiguity");
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"kind":"boolfun","parameters":{"n":3,"k":3,"k_prime":2},"seed":1}"#,
    )
    .unwrap();
    let out = dir.path().join("f.csv");
    let status = Command::new(exe())
        .args([
            "boolfun",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--seed",
            "99",
        ])
        .stdout(Stdio::null())
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(&out).unwrap();
    assert!(csv.contains("# seed = 99"));
}
