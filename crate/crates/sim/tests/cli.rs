use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mimo-sim"))
}

#[test]
fn sweep_writes_every_output_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(
        &cfg,
        r#"{"schema_version": 1, "network": {"grid_rows": 1, "grid_cols": 2, "users_per_cell": 2, "antennas": 8, "tau_p": 2},
            "pa_schemes": ["multicell", "zhu"], "sweep": {"axis": "tau_p", "values": [2]}, "drops": 1, "blocks": 5}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let status = bin().args(["sweep", "--config"]).arg(&cfg).arg("--out").arg(&out).args(["--seed", "7"]).output().unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    for f in ["results.csv", "results.json", "cdf.csv", "trajectories.csv", "timing.json", "spec.json"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let spec: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("spec.json")).unwrap()).unwrap();
    assert_eq!(spec["seed"], 7);
}

#[test]
fn bad_config_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"schema_version": 1, "blocks": 0}"#).unwrap();
    let out = bin().args(["power", "--config"]).arg(&cfg).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let missing = bin().args(["sweep", "--config", "/nonexistent/c.json"]).output().unwrap();
    assert_eq!(missing.status.code(), Some(2));
}
