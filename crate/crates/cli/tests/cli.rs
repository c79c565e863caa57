use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_edqnm-lab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn forced_run_writes_outputs_and_reruns_from_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let quick = configs().join("quick.toml");
    let first = tmp.path().join("first");
    let out = cli(&["forced", "--config", path(&quick), "--out", path(&first), "--quiet"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["time_series.csv", "spectrum.csv", "manifest.json"] {
        assert!(first.join(f).is_file(), "missing {f}");
    }
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(first.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "complete");
    assert_eq!(manifest["command"], "forced");
    assert!(manifest["outputs"].to_string().contains("spectrum.csv"));

    let second = tmp.path().join("second");
    let out = cli(&[
        "forced",
        "--config",
        path(&first.join("manifest.json")),
        "--out",
        path(&second),
        "--quiet",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["time_series.csv", "spectrum.csv", "manifest.json"] {
        assert_eq!(
            std::fs::read(first.join(f)).unwrap(),
            std::fs::read(second.join(f)).unwrap(),
            "{f} differs"
        );
    }
}

#[test]
fn unknown_key_is_a_config_error_naming_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.toml");
    std::fs::write(&bad, "schema_version = 1\n[grid]\nk_min = 1.0\nk_maxx = 3.0\n").unwrap();
    let out = cli(&["forced", "--config", path(&bad), "--out", path(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("grid.k_maxx"), "{err}");
    assert!(!tmp.path().join("o").join("manifest.json").exists());
}

#[test]
fn wrong_schema_version_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("v2.toml");
    std::fs::write(&bad, "schema_version = 2\n").unwrap();
    let out = cli(&["rg", "--config", path(&bad), "--out", path(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn poiseuille_oracle_prints_six() {
    let out = cli(&["oracle", "poiseuille", "--mu", "1", "--U", "1", "--h", "1"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("epsilon = 6 mu U^2 / h = 6\n"), "{text}");
    assert!(text.contains("QP / epsilon = 1\n"), "{text}");
}

#[test]
fn batchelor_oracle_slope() {
    let out = cli(&["oracle", "batchelor", "--eps", "1", "--nu", "0.01,0.001,0.0001"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("-0.75"));
}

#[test]
fn collapse_of_sweep_orders_members() {
    let tmp = tempfile::tempdir().unwrap();
    let quick = std::fs::read_to_string(configs().join("quick.toml")).unwrap();
    let base = quick.split("[run]").next().unwrap();
    let cfg = tmp.path().join("sweep.toml");
    std::fs::write(&cfg, format!("{base}[sweep]\nnu_list = [0.08, 0.05, 0.03]\nmax_time = 40.0\n")).unwrap();
    let dir = tmp.path().join("sweep");
    let out = cli(&["sweep", "--config", path(&cfg), "--out", path(&dir), "--quiet"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.join("spectrum_02.csv").is_file());

    let out = cli(&["collapse", "--out", path(&dir), "--members", "2", "--quiet"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.join("collapse-k41/collapse.json")).unwrap()).unwrap();
    let r: Vec<f64> = report["r_lambda"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert_eq!(r.len(), 2);
    assert!(r[0] < r[1]);
    assert!(report["report"]["collapse_error"].as_f64().unwrap() > 0.0);
}

#[test]
fn fit_rejects_short_sweep() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("sweep.csv");
    std::fs::write(
        &csv,
        "nu,eps_W,R_L,R_lambda,C_eps,Pi_ratio\n0.01,1,100,40,0.7,0.9\n0.005,1,200,60,0.6,0.95\n",
    )
    .unwrap();
    let out = cli(&["fit", "--sweep", path(&csv), "--out", path(tmp.path())]);
    assert!(!out.status.success());
    assert!(!tmp.path().join("fit").join("fit.json").exists());
}
