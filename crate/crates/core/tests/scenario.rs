use std::path::{Path, PathBuf};
use std::process::Command;

use seed6d::scenario::trace::{max_deviation, read_trace};
use seed6d::scenario::{run_scenario_to_dir, ScenarioConfig};

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn seed6d() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_seed6d"));
    c.env_remove("SEED6D_OUT");
    c
}

#[test]
fn shipped_configs_parse() {
    for name in ["squeegee_closed", "squeegee_open", "squeegee_welded", "pen"] {
        let cfg = ScenarioConfig::load(&configs().join(format!("{name}.json"))).unwrap();
        assert_eq!(cfg.name, name);
    }
}

#[test]
fn golden_trace_is_reproduced() {
    let out = tempfile::tempdir().unwrap();
    let cfg = ScenarioConfig::load(&data("golden_squeegee.json")).unwrap();
    let run = run_scenario_to_dir(&cfg, out.path()).unwrap();
    if std::env::var_os("SEED6D_BLESS").is_some() {
        std::fs::copy(&run.trace, data("golden_squeegee.csv")).unwrap();
    }
    let (header, golden, truncated) = read_trace(&data("golden_squeegee.csv")).unwrap();
    let (fresh_header, fresh, _) = read_trace(&run.trace).unwrap();
    assert!(truncated.is_none());
    assert_eq!(header, fresh_header);
    let dev = max_deviation(&golden, &fresh).expect("same shape");
    assert!(dev < 1e-9, "max deviation {dev:e}");
}

#[test]
fn identical_runs_are_byte_identical() {
    let cfg = configs().join("squeegee_closed.json");
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [a.path(), b.path()] {
        let status = seed6d().arg("--out").arg(dir).arg("run").arg(&cfg).output().unwrap().status;
        assert!(status.success());
    }
    let read = |d: &Path| std::fs::read(d.join("squeegee_closed/trace.csv")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
}

#[test]
fn seed_override_changes_noisy_trace() {
    let cfg = configs().join("squeegee_closed.json");
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for (dir, seed) in [(a.path(), "1"), (b.path(), "2")] {
        assert!(seed6d().arg("--out").arg(dir).args(["run", "--seed", seed]).arg(&cfg).output().unwrap().status.success());
    }
    let read = |d: &Path| std::fs::read(d.join("squeegee_closed/trace.csv")).unwrap();
    assert_ne!(read(a.path()), read(b.path()));
}

#[test]
fn parallel_jobs_match_serial_runs() {
    let names = ["squeegee_closed", "squeegee_open", "squeegee_welded", "pen"];
    let paths: Vec<PathBuf> = names.iter().map(|n| configs().join(format!("{n}.json"))).collect();
    let (serial, parallel) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert!(seed6d().arg("--out").arg(serial.path()).arg("run").args(&paths).output().unwrap().status.success());
    let out = seed6d().env("SEED6D_OUT", parallel.path()).args(["run", "--jobs", "3"]).args(&paths).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for n in names {
        for file in ["trace.csv", "summary.json"] {
            let a = std::fs::read(serial.path().join(n).join(file)).unwrap();
            let b = std::fs::read(parallel.path().join(n).join(file)).unwrap();
            assert_eq!(a, b, "{n}/{file}");
        }
    }
}

#[test]
fn bad_config_exits_nonzero_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(configs().join("pen.json")).unwrap().replace("\"seed\"", "\"sead\"");
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, text).unwrap();
    let out = seed6d().arg("--out").arg(dir.path()).arg("run").arg(&bad).output().unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("sead") && err.contains("line"), "{err}");

    let out = seed6d().arg("--out").arg(dir.path()).args(["run", "/nonexistent/config.json"]).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn failing_scenario_flushes_truncated_trace() {
    let dir = tempfile::tempdir().unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(configs().join("pen.json")).unwrap()).unwrap();
    // More torque than the bushing can deliver before gimbal lock.
    v["task"]["spec"]["orientation"] = serde_json::json!({"kind": "torque", "torque": [0.0, 50.0, 0.0]});
    let path = dir.path().join("fail.json");
    std::fs::write(&path, serde_json::to_string(&v).unwrap()).unwrap();
    let out = seed6d().arg("--out").arg(dir.path()).arg("run").arg(&path).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("step 1"));
    let (_, records, truncated) = read_trace(&dir.path().join("pen/trace.csv")).unwrap();
    assert_eq!(records.len(), 1);
    assert!(truncated.unwrap().starts_with("# truncated at step 1"));
}

#[test]
fn sysid_command_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = seed6d().arg("--out").arg(dir.path()).arg("sysid").arg(configs().join("sysid.json")).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("sysid/sysid_report.json")).unwrap()).unwrap();
    let errors = report["relative_error"].as_array().unwrap();
    assert_eq!(errors.len(), 6);
    assert!(errors.iter().all(|e| e.as_f64().unwrap().abs() < 0.02));
}

#[test]
fn sysid_from_scenario_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = serde_json::json!({
        "name": "from_trace",
        "source": {"kind": "trace", "path": data("golden_squeegee.csv")},
    });
    let path = dir.path().join("sysid.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    let out = seed6d().arg("--out").arg(dir.path()).arg("sysid").arg(&path).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    // The trace carries no ground truth; the report still lists every axis.
    let text = String::from_utf8_lossy(&out.stdout);
    for axis in ["roll", "pitch", "yaw", "x", "y", "z"] {
        assert!(text.lines().any(|l| l.starts_with(axis)), "{text}");
    }
}

#[test]
fn estimator_commands_round_trip_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = serde_json::json!({
        "name": "small",
        "corpus_dir": "corpus",
        "corpus": {
            "sweeps": [
                {"axis": "roll", "amplitude": 10.0, "count": 3},
                {"axis": "y", "amplitude": 3.0, "count": 3}
            ]
        }
    });
    let path = dir.path().join("eval.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    let out = seed6d().arg("--out").arg(dir.path()).arg("gen-corpus").arg(&path).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("corpus/corpus.json").exists());
    assert!(dir.path().join("corpus/calibration.json").exists());
    let out = seed6d().arg("--out").arg(dir.path()).arg("eval-estimator").arg(&path).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("small/estimator_report.json")).unwrap()).unwrap();
    assert_eq!(report["frames"].as_array().unwrap().len(), 6);
    assert!(dir.path().join("small/estimator_table.txt").exists());
}
