use std::process::Command;

fn needlesim() -> Command {
    Command::new(env!("CARGO_BIN_EXE_needlesim"))
}

#[test]
fn run_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("exp2");
    let output = needlesim()
        .args([
            "run",
            "--experiment",
            "exp2",
            "--modality",
            "HF,VF",
            "--reps",
            "2",
            "--seed",
            "7",
            "--out",
        ])
        .arg(&out)
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(stdout.starts_with("exp2 seed=7 delay=0 ms trials=4"), "{stdout}");
    for file in ["trials.csv", "aggregates.json", "trajectories_normalized.csv"] {
        assert!(out.join(file).is_file(), "{file} missing");
    }
    let aggregates: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("aggregates.json")).unwrap()).unwrap();
    assert_eq!(aggregates["trial_count"], 4);
    assert_eq!(aggregates["modalities"].as_array().unwrap().len(), 2);
}

#[test]
fn config_file_overrides_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("sim.toml");
    std::fs::write(&config, "repetitions = 1\nexp3_delay_ms = 20.0\n").unwrap();
    let out = dir.path().join("out");
    let output = needlesim()
        .args([
            "run",
            "--experiment",
            "exp3",
            "--modality",
            "CF",
            "--serial",
            "--config",
        ])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    assert!(String::from_utf8(output.stdout)
        .unwrap()
        .starts_with("exp3 seed=1 delay=20 ms trials=1"));
}

#[test]
fn unknown_config_key_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    std::fs::write(&config, "tissue_stifness = 3.0\n").unwrap();
    let output = needlesim().args(["config", "--config"]).arg(&config).output().unwrap();
    assert!(!output.status.success());
    assert!(String::from_utf8_lossy(&output.stderr).contains("tissue_stifness"));
}

#[test]
fn printed_config_loads_back() {
    let output = needlesim().arg("config").output().unwrap();
    assert!(output.status.success());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("default.toml");
    std::fs::write(&path, &output.stdout).unwrap();
    let again = needlesim().args(["config", "--config"]).arg(&path).output().unwrap();
    assert!(again.status.success());
    assert_eq!(again.stdout, output.stdout);
}

#[test]
fn bad_arguments_are_rejected() {
    for args in [
        &["run", "--experiment", "exp9"][..],
        &["run", "--experiment", "exp1", "--modality", "XF"],
        &["run", "--experiment", "exp1", "--delay-ms", "-5"],
    ] {
        let output = needlesim().args(args).output().unwrap();
        assert!(!output.status.success(), "{args:?} accepted");
    }
}
