use std::path::Path;
use std::process::{Command, Output};

fn rmf_lab(args: &[&str], out: &Path, threads: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rmf-lab"))
        .args(args)
        .arg("--out-dir")
        .arg(out)
        .env("RMF_LAB_THREADS", threads)
        .output()
        .unwrap()
}

#[test]
fn output_bytes_do_not_depend_on_thread_count() {
    let args = ["truncate", "--x", "1e4,2e4", "--trials", "40", "--name", "t"];
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert!(rmf_lab(&args, a.path(), "1").status.success());
    assert!(rmf_lab(&args, b.path(), "3").status.success());
    for f in ["t.summary.json", "t.trials.csv"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let csv = std::fs::read_to_string(a.path().join("t.trials.csv")).unwrap();
    assert!(csv.starts_with("x,trial,seed,full_re,"));
    assert_eq!(csv.lines().count(), 1 + 80);
}

#[test]
fn summary_embeds_config_and_version() {
    let dir = tempfile::tempdir().unwrap();
    let o = rmf_lab(&["tshift", "--y", "1e4", "--t", "0,2"], dir.path(), "1");
    assert!(o.status.success());
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 2);
    let s: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("tshift.summary.json")).unwrap()).unwrap();
    assert_eq!(s["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(s["config"]["command"], "tshift");
    assert_eq!(s["config"]["t"], serde_json::json!([0.0, 2.0]));
    assert_eq!(s["verdicts"].as_array().unwrap().len(), 2);
}

#[test]
fn errors_are_machine_readable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"trials": 10, "bogus": 1}"#).unwrap();
    for args in [
        vec!["simulate-sum", "--config", cfg.to_str().unwrap()],
        vec!["modified-moment", "--L", "-1"],
        vec!["verify-plancherel", "--phi", "1:1,0.5:2"],
        vec!["coupling-report", "--u", "1,2,3"],
    ] {
        let o = rmf_lab(&args, dir.path(), "1");
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        let e: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
        assert_eq!(e["error"], "config");
        assert!(e["message"].as_str().is_some_and(|m| !m.is_empty()));
    }
    assert!(std::fs::read_dir(dir.path()).unwrap().count() == 1);
}
