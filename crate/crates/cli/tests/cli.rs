//! End-to-end subcommand tests at small budgets: exit codes, artifact
//! layout, and rerun determinism.  Heavier statistical gates live in the
//! acceptance suite.

use std::fs;
use std::path::PathBuf;
use std::process::Command;

use hotspots_cli::run;

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("hotspots-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hotspots"))
}

#[test]
fn help_succeeds_and_bad_flags_are_usage_errors() {
    assert_eq!(run(["hotspots", "--help"]), 0);
    assert_eq!(run(["hotspots", "domain", "--help"]), 0);
    assert_eq!(run(["hotspots", "--no-such-flag"]), 2);
    assert_eq!(run(["hotspots", "domain", "--epsilon", "abc"]), 2);
}

#[test]
fn domain_roundtrips_and_is_deterministic() {
    let dir = tmp("domain");
    let out = dir.join("d.txt");
    let svg = dir.join("d.svg");
    let code = run([
        "hotspots",
        "domain",
        "--epsilon",
        "0.1",
        "--epsilon0",
        "0.01",
        "-o",
        out.to_str().unwrap(),
        "--svg",
        svg.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("hotspots-domain v1"));
    hotspots_core::geometry::import_domain(&text).expect("file parses back");
    assert!(fs::read_to_string(&svg).unwrap().starts_with("<svg"));

    let out2 = dir.join("d2.txt");
    assert_eq!(
        run(["hotspots", "domain", "-o", out2.to_str().unwrap()]),
        0
    );
    assert_eq!(text, fs::read_to_string(&out2).unwrap(), "same args, same bytes");
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn domain_rejects_inverted_widths() {
    let o = bin()
        .args(["domain", "--epsilon", "0.01", "--epsilon0", "0.1"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("epsilon0"), "stderr names the key: {err}");
}

#[test]
fn eigen_writes_csv_and_summary() {
    let dir = tmp("eigen");
    let code = run([
        "hotspots",
        "eigen",
        "--epsilon",
        "0.1",
        "--epsilon0",
        "0.04",
        "--h",
        "0.06",
        "-o",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let csv = fs::read_to_string(dir.join("eigen.csv")).unwrap();
    assert!(csv.starts_with("x,y,value\n"));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["mode"], "second_neumann");
    let l2 = summary["lambdas"][1].as_f64().unwrap();
    assert!(l2 > 0.0 && l2 < 10.0, "lambda2 = {l2}");
    assert!(fs::read_to_string(dir.join("eigen.svg")).unwrap().starts_with("<svg"));
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn eigen_on_quarter_solves_the_mixed_problem() {
    let dir = tmp("eigen-q");
    let code = run([
        "hotspots",
        "eigen",
        "--quarter",
        "--epsilon",
        "0.1",
        "--epsilon0",
        "0.04",
        "--h",
        "0.06",
        "-o",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["mode"], "mixed_ground_state");
    assert!(summary["lambdas"][0].as_f64().unwrap() > 0.0);
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn mesh_exports_importable_mesh() {
    let dir = tmp("mesh");
    assert_eq!(
        run([
            "hotspots",
            "mesh",
            "--epsilon",
            "0.1",
            "--epsilon0",
            "0.04",
            "--h",
            "0.08",
            "-o",
            dir.to_str().unwrap(),
        ]),
        0
    );
    let text = fs::read_to_string(dir.join("mesh.txt")).unwrap();
    let mesh = hotspots_core::spectral::import_mesh(&text).expect("mesh parses back");
    assert!(mesh.n_tris() > 100);
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn verdict_emits_report_json() {
    let dir = tmp("verdict");
    let out = dir.join("report.json");
    let code = run([
        "hotspots",
        "verdict",
        "--epsilon",
        "0.1",
        "--epsilon0",
        "0.04",
        "--h",
        "0.07,0.05",
        "-o",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 2);
    assert!(v["kind"].is_string());
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn verdict_requires_two_resolutions() {
    let o = bin()
        .args(["verdict", "--h", "0.05"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("h:"));
}

#[test]
fn rbm_survival_artifacts() {
    let dir = tmp("rbm");
    let code = run([
        "hotspots",
        "rbm",
        "--epsilon",
        "0.1",
        "--epsilon0",
        "0.04",
        "--dt",
        "2e-3",
        "--n-paths",
        "100",
        "--t-grid",
        "0.25,0.5",
        "--seed",
        "5",
        "--trace",
        "-o",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let csv = fs::read_to_string(dir.join("survival.csv")).unwrap();
    assert!(csv.starts_with("start_id,t,p,lo,hi\n"));
    assert_eq!(csv.lines().count(), 1 + 2 * 2, "two starts, two times");
    assert!(fs::read_to_string(dir.join("trace.csv")).unwrap().lines().count() > 10);
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn couple_outputs_are_byte_identical_across_reruns() {
    let d1 = tmp("couple1");
    let d2 = tmp("couple2");
    for d in [&d1, &d2] {
        let code = run([
            "hotspots",
            "couple",
            "--epsilon",
            "0.15",
            "--h",
            "0.04",
            "--dt",
            "1e-4",
            "--n-runs",
            "15",
            "--seed",
            "99",
            "-o",
            d.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
    }
    for name in ["coupling_summary.csv", "coupling_tails.csv", "coupling_runs_eps0.15.csv"] {
        let a = fs::read(d1.join(name)).unwrap();
        let b = fs::read(d2.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
    let _ = fs::remove_dir_all(&d1);
    let _ = fs::remove_dir_all(&d2);
}

#[test]
fn study_rejects_unknown_config_keys_and_bad_overrides() {
    let dir = tmp("study-bad");
    let cfg = dir.join("cfg.json");
    fs::write(&cfg, r#"{"seed": 3, "b0gus_key": 1}"#).unwrap();
    let o = bin()
        .args(["study", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(
        String::from_utf8_lossy(&o.stderr).contains("b0gus_key"),
        "stderr names the unknown key"
    );

    let o = bin().args(["study", "--n-paths", "5"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("n_paths"));
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn small_study_end_to_end() {
    let dir = tmp("study");
    let code = run([
        "hotspots",
        "study",
        "--eps-grid",
        "0.15",
        "--eps0-grid",
        "0.04",
        "--h",
        "0.07,0.05",
        "--dt",
        "5e-5",
        "--n-paths",
        "100",
        "--t-grid",
        "0.5,1",
        "--seed",
        "11",
        "-o",
        dir.to_str().unwrap(),
    ]);
    // Statistical checks may fail at toy budgets; only usage errors are
    // out of contract here.
    assert!(code == 0 || code == 1, "exit {code}");
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    let checks = report["checks"].as_array().unwrap();
    assert!(checks.len() >= 10, "{} checks", checks.len());
    for c in checks {
        assert!(!c["anchor"].as_str().unwrap().is_empty());
    }
    for name in [
        "lambda_trend.csv",
        "verdict.csv",
        "coupling_summary.csv",
        "survival.csv",
        "domain.svg",
        "probabilities.svg",
    ] {
        assert!(dir.join(name).exists(), "missing artifact {name}");
    }
    let _ = fs::remove_dir_all(&dir);
}
