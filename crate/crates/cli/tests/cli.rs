use std::path::Path;
use std::process::{Command, Output};

fn pdrlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pdrlab")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.display().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: &str = r#"{"version": 1, "seed": 11, "experiment": {"sim": {"duration": 30.0}}}"#;

#[test]
fn simulate_is_deterministic_and_jsonl_parses() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "s.json", SMALL);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for out in [&a, &b] {
        let o = pdrlab(&["--config", &cfg, "--out", out.to_str().unwrap(), "simulate"]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(String::from_utf8_lossy(&o.stdout).contains("radio samples"));
    }
    for f in ["radio.jsonl", "imu.jsonl", "reference.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let text = std::fs::read_to_string(a.join("radio.jsonl")).unwrap();
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v.get("t_meas").is_some());
    }
}

#[test]
fn negative_noise_exits_with_config_code() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "bad.json",
        r#"{"version": 1, "experiment": {"sim": {"noise": {"radio_pos_std": -0.5}}}}"#,
    );
    let o = pdrlab(&["--config", &cfg, "--out", tmp.path().to_str().unwrap(), "simulate"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("radio_pos_std"), "{}", stderr(&o));
}

#[test]
fn unknown_key_and_toml_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "bad.json", r#"{"version": 1, "sedd": 3}"#);
    let o = pdrlab(&["--config", &cfg, "simulate"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("sedd"));

    let cfg = write_config(tmp.path(), "ok.toml", "version = 1\nseed = 2\n[experiment.sim]\nduration = 10.0\n");
    let o = pdrlab(&["--config", &cfg, "--out", tmp.path().join("t").to_str().unwrap(), "simulate"]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn missing_upstream_artifact_exits_with_io_code() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("empty");
    let o = pdrlab(&["--out", out.to_str().unwrap(), "pipeline"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("radio.jsonl"), "{}", stderr(&o));

    let o = pdrlab(&["--out", out.to_str().unwrap(), "predict"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("model.ckpt"), "{}", stderr(&o));

    let missing = tmp.path().join("nope.json");
    let o = pdrlab(&["--config", missing.to_str().unwrap(), "simulate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn evaluate_reference_against_itself_is_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "s.json", SMALL);
    let out = tmp.path().join("o");
    let out_s = out.to_str().unwrap();
    assert!(pdrlab(&["--config", &cfg, "--out", out_s, "simulate"]).status.success());
    // estimate CSV copied from the reference poses
    let mut rdr = csv::Reader::from_path(out.join("reference.csv")).unwrap();
    let mut wtr = csv::Writer::from_path(out.join("exact.csv")).unwrap();
    wtr.write_record(["t", "x", "y", "var_x", "var_y"]).unwrap();
    for rec in rdr.records() {
        let rec = rec.unwrap();
        wtr.write_record([&rec[0], &rec[1], &rec[2], "0", "0"]).unwrap();
    }
    wtr.flush().unwrap();
    let est = out.join("exact.csv");
    let reference = out.join("reference.csv");
    let o = pdrlab(&[
        "--config",
        &cfg,
        "--out",
        out_s,
        "evaluate",
        "--estimates",
        est.to_str().unwrap(),
        "--reference",
        reference.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("report-exact.json")).unwrap()).unwrap();
    for k in ["mae", "mse", "rmse", "cep95"] {
        assert_eq!(report["report"][k].as_f64(), Some(0.0), "{k}");
    }
}

#[test]
fn walking_pipeline_end_to_end_and_verify() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "walk.json",
        r#"{"version": 1, "seed": 5, "activity": "walking",
            "experiment": {"sim": {"duration": 60.0}, "train": {"max_epochs": 10}}}"#,
    );
    let out = tmp.path().join("o");
    let out_s = out.to_str().unwrap();
    let start = std::time::Instant::now();
    for stage in [
        vec!["simulate"],
        vec!["pipeline"],
        vec!["reconstruct"],
        vec!["kf"],
        vec!["train"],
        vec!["predict"],
        vec!["evaluate", "--estimates", &format!("{out_s}/pdrnn.csv")],
    ] {
        let mut args = vec!["--config", &cfg, "--out", out_s];
        args.extend(stage.iter().copied());
        let o = pdrlab(&args);
        assert!(o.status.success(), "{stage:?}: {}", stderr(&o));
    }
    assert!(start.elapsed().as_secs() < 300);
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("report-pdrnn.json")).unwrap()).unwrap();
    assert!(report["report"]["mae"].as_f64().unwrap().is_finite());

    let o = pdrlab(&["--out", out_s, "--verify"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    assert_eq!(String::from_utf8_lossy(&o.stdout).matches("OK ").count(), 7);

    // a tampered manifest is reported as a mismatch
    let path = out.join("manifest-reconstruct.json");
    let mut m: serde_json::Value = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
    m["outputs"][0]["sha256"] = serde_json::Value::String("0".repeat(64));
    std::fs::write(&path, serde_json::to_vec_pretty(&m).unwrap()).unwrap();
    let o = pdrlab(&["--out", out_s, "--verify"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stdout).contains("MISMATCH"));
}

#[test]
fn experiment_manifest_replays_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "exp.json",
        r#"{"version": 1, "seed": 1, "n_seeds": 2,
            "experiment": {"sim": {"duration": 30.0}, "recal_duration": 60.0,
                           "recal_estimators": ["classic", "kf"]}}"#,
    );
    let out = tmp.path().join("o");
    let out_s = out.to_str().unwrap();
    let o = pdrlab(&["--config", &cfg, "--out", out_s, "--workers", "2", "exp", "--design", "recal"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = std::fs::read(out.join("recal/summary.json")).unwrap();
    let v: serde_json::Value = serde_json::from_slice(&summary).unwrap();
    assert_eq!(v["seeds"], serde_json::json!([1, 2]));
    assert_eq!(v["cells"].as_array().unwrap().len(), 2 * 4 * 2);
    let o = pdrlab(&["--out", out_s, "--workers", "1", "--verify"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    assert_eq!(std::fs::read(out.join("recal/summary.json")).unwrap(), summary);
}

#[test]
fn bad_flags_are_config_errors() {
    let o = pdrlab(&["--workers", "0", "simulate"]);
    assert_eq!(o.status.code(), Some(1));
    let o = pdrlab(&["--out", "/nonexistent-dir-for-verify", "--verify"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn kf_parameter_flags_override_and_validate() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "s.json", SMALL);
    let out = tmp.path().join("o");
    let out_s = out.to_str().unwrap();
    for stage in ["simulate", "pipeline"] {
        assert!(pdrlab(&["--config", &cfg, "--out", out_s, stage]).status.success());
    }
    let o = pdrlab(&["--config", &cfg, "--out", out_s, "kf", "--r-pos", "-1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("r_pos"), "{}", stderr(&o));

    let base = pdrlab(&["--config", &cfg, "--out", out_s, "kf"]);
    assert!(base.status.success(), "{}", stderr(&base));
    let a = std::fs::read(out.join("kf.csv")).unwrap();
    let o = pdrlab(&["--config", &cfg, "--out", out_s, "kf", "--q0", "2.0", "--r-pos", "0.5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_ne!(std::fs::read(out.join("kf.csv")).unwrap(), a);
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("manifest-kf.json")).unwrap()).unwrap();
    assert_eq!(m["command"]["q0"].as_f64(), Some(2.0));
    assert!(pdrlab(&["--out", out_s, "--verify"]).status.success());
}
