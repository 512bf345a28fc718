//! End-to-end CLI fixtures: subcommand pipelines, exit codes, artifact
//! shapes, determinism, and the OSL_DATA_DIR resolution rule.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_osl")
}

struct TempDir(PathBuf);

impl TempDir {
    fn new(tag: &str) -> Self {
        let dir = std::env::temp_dir().join(format!("osl-cli-test-{tag}-{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&dir);
        std::fs::create_dir_all(&dir).unwrap();
        TempDir(dir)
    }
    fn path(&self) -> &Path {
        &self.0
    }
    fn file(&self, name: &str, contents: &str) -> PathBuf {
        let p = self.0.join(name);
        std::fs::write(&p, contents).unwrap();
        p
    }
}

impl Drop for TempDir {
    fn drop(&mut self) {
        let _ = std::fs::remove_dir_all(&self.0);
    }
}

fn run(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(bin()).args(args).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

const THM1_CONFIG: &str = r#"{
  "space": {"euclidean": {"n": 64, "depth": 6, "shifts": 1}},
  "u": {"power": {"a": -0.25, "x0": 0.0}},
  "v": {"power": {"a": -0.25, "x0": 0.5}},
  "kernel": "hilbert",
  "theorem": {"theorem": "thm1", "p": 2.0, "r": 1.0, "gamma": 0.0},
  "lambda": {"lo": 0.001, "hi": 1000.0, "n": 21},
  "seed": 5
}"#;

#[test]
fn verify_mixed_pass_and_artifacts() {
    let dir = TempDir::new("vm");
    let cfg = dir.file("thm1.json", THM1_CONFIG);
    let out_dir = dir.path().join("out");
    let (code, stdout, _) = run(&[
        "verify-mixed",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "stdout: {stdout}");
    let csv = std::fs::read_to_string(out_dir.join("verify_mixed.csv")).unwrap();
    assert!(csv.starts_with("# config_hash="));
    assert!(csv.contains("lambda,lhs,rhs,ratio\r\n"));
    assert_eq!(csv.lines().count(), 2 + 21);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("verify_mixed.json")).unwrap())
            .unwrap();
    assert_eq!(summary["pass"], serde_json::json!(true));
    assert!(summary["config_hash"].as_str().unwrap().len() == 16);
    assert!(summary["version"].is_string());
}

#[test]
fn verify_mixed_determinism_and_budget_exit() {
    let dir = TempDir::new("det");
    let cfg = dir.file("thm1.json", THM1_CONFIG);
    let out1 = dir.path().join("a");
    let out2 = dir.path().join("b");
    for out in [&out1, &out2] {
        let (code, _, _) = run(&[
            "verify-mixed",
            "--config",
            cfg.to_str().unwrap(),
            "--out-dir",
            out.to_str().unwrap(),
            "--threads",
            "2",
        ]);
        assert_eq!(code, 0);
    }
    let a = std::fs::read(out1.join("verify_mixed.csv")).unwrap();
    let b = std::fs::read(out2.join("verify_mixed.csv")).unwrap();
    assert_eq!(a, b, "identical config must give byte-identical CSV");

    // an impossible budget trips exit code 2
    let out3 = dir.path().join("c");
    let (code, _, _) = run(&[
        "verify-mixed",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        out3.to_str().unwrap(),
        "--budget",
        "1e-12",
    ]);
    assert_eq!(code, 2);
}

#[test]
fn verify_mixed_hypothesis_failure_exit() {
    // Power(3) is not in B_rho for rho <= 3, violating the r = 1 hypothesis
    let dir = TempDir::new("hyp");
    let cfg = dir.file(
        "bad.json",
        &THM1_CONFIG.replace(
            "\"kernel\": \"hilbert\",",
            "\"kernel\": \"hilbert\",\n  \"young\": {\"family\": \"power\", \"p\": 3.0},",
        ),
    );
    let out = dir.path().join("out");
    let (code, _, stderr) = run(&[
        "verify-mixed",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 3, "stderr: {stderr}");
    assert!(stderr.contains("hypothesis"));
}

#[test]
fn malformed_configs_exit_one_with_field_path() {
    let dir = TempDir::new("bad");
    let empty = dir.file("empty.json", "");
    let (code, _, stderr) = run(&["verify-mixed", "--config", empty.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(stderr.contains("config field"), "stderr: {stderr}");

    let bad_field = dir.file(
        "badfield.json",
        r#"{"space": {"euclidean": {"n": 63, "depth": 3}}}"#,
    );
    let (code, _, stderr) = run(&["verify-mixed", "--config", bad_field.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(stderr.contains("space.euclidean.n"), "stderr: {stderr}");
}

#[test]
fn dyadic_build_artifacts() {
    let dir = TempDir::new("db");
    let cfg = dir.file("db.json", r#"{"space": {"random1d": {"n": 40, "seed": 3}}}"#);
    let out = dir.path().join("out");
    let (code, _, _) =
        run(&["dyadic-build", "--config", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap()]);
    assert_eq!(code, 0);
    let space: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("space.json")).unwrap()).unwrap();
    assert!(space["points"].is_array());
    assert!(space["mass"].is_array());
    assert!(space["kappa_d"].is_number());
    let sys: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("system_0.json")).unwrap()).unwrap();
    let cube = &sys["cubes"][0];
    for key in ["id", "generation", "center", "members", "parent"] {
        assert!(!cube[key].is_null() || key == "parent", "missing cube field {key}");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("dyadic_build.json")).unwrap())
            .unwrap();
    assert_eq!(summary["checks"][0]["partition_ok"], serde_json::json!(true));
    assert_eq!(summary["adjacency"]["failures"], serde_json::json!(0));

    // single-point space builds a one-cube-per-level system
    let cfg1 = dir.file("db1.json", r#"{"space": {"random1d": {"n": 1, "seed": 3}}}"#);
    let out1 = dir.path().join("out1");
    let (code, _, _) = run(&[
        "dyadic-build",
        "--config",
        cfg1.to_str().unwrap(),
        "--out-dir",
        out1.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
}

#[test]
fn weight_constants_fixture() {
    let dir = TempDir::new("wc");
    // a small space file with coordinates and a weight aligned to it
    let space = dir.file(
        "grid8.json",
        r#"{"points": [0.0, 0.125, 0.25, 0.375, 0.5, 0.625, 0.75, 0.875],
            "mass": [0.125, 0.125, 0.125, 0.125, 0.125, 0.125, 0.125, 0.125]}"#,
    );
    let weight = dir.file("w.json", "[1.0, 1.2, 0.8, 1.5, 2.0, 0.5, 1.1, 0.9]");
    let out = dir.path().join("out");
    let (code, stdout, _) = run(&[
        "weight-constants",
        "--space",
        space.to_str().unwrap(),
        "--weight",
        weight.to_str().unwrap(),
        "--p",
        "2",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let parsed: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("weight_constants.json")).unwrap())
            .unwrap();
    for key in ["a_p", "a_1", "a_inf", "rh", "a_p_u"] {
        assert!(parsed[key].as_f64().unwrap() >= 1.0 - 1e-12, "constant {key}");
    }
    assert!(stdout.contains("a_p"));
}

#[test]
fn sparse_dominate_and_lemma_suite() {
    let dir = TempDir::new("sd");
    let cfg = dir.file(
        "sd.json",
        r#"{
          "space": {"euclidean": {"n": 64, "depth": 6, "shifts": 1}},
          "kernel": "hilbert",
          "symbols": {"log": {"m": 1, "r": 1.0}},
          "eps": 0.5,
          "seed": 2
        }"#,
    );
    let out = dir.path().join("out");
    let (code, _, _) = run(&[
        "sparse-dominate",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let cert: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("certificate.json")).unwrap())
            .unwrap();
    for key in ["cubes", "coefficients", "kappa", "residual", "achieved_eps"] {
        assert!(!cert["certificate"][key].is_null(), "certificate field {key}");
    }

    let out2 = dir.path().join("ls");
    let (code, stdout, _) = run(&[
        "lemma-suite",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        out2.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "stdout: {stdout}");
    let csv = std::fs::read_to_string(out2.join("lemma_suite.csv")).unwrap();
    assert!(csv.contains("RHsrho"));
    assert!(csv.contains("CRRlema1"));
    assert!(csv.contains("cuentaSjk"));
}

#[test]
fn verify_mixed_homogeneous_track() {
    let dir = TempDir::new("hom");
    let cfg = dir.file(
        "hom.json",
        r#"{
          "space": {"random1d": {"n": 48, "seed": 11}},
          "u": {"power": {"a": -0.2, "x0": 0.0}},
          "v": {"lognormal": {"seed": 12, "sigma": 0.3}},
          "kernel": "hilbert",
          "theorem": {"theorem": "hom_t", "p": 2.0, "r": 1.0, "gamma": 0.0},
          "lambda": {"lo": 0.01, "hi": 100.0, "n": 11},
          "budget": 1000.0,
          "seed": 13
        }"#,
    );
    let out = dir.path().join("out");
    let (code, stdout, stderr) = run(&[
        "verify-mixed",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "stdout: {stdout} stderr: {stderr}");
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("verify_mixed.json")).unwrap())
            .unwrap();
    assert!(summary["constants"]["ap_uv"].is_number(), "homogeneous track reports [uv]_Ap");
}

#[test]
fn data_dir_resolution() {
    let dir = TempDir::new("dd");
    std::fs::create_dir_all(dir.path().join("fixtures")).unwrap();
    std::fs::write(
        dir.path().join("fixtures/w.json"),
        "[1.0, 1.0, 2.0, 1.0, 1.0, 0.5, 1.0, 1.0]",
    )
    .unwrap();
    let cfg = dir.file(
        "vm.json",
        r#"{
          "space": {"euclidean": {"n": 8, "depth": 3, "shifts": 1}},
          "u": {"file": {"file": "fixtures/w.json"}},
          "v": {"constant": {"c": 1.0}},
          "kernel": "averaging",
          "theorem": {"theorem": "thm1", "p": 2.0, "r": 1.0, "gamma": 0.0},
          "lambda": {"lo": 0.01, "hi": 10.0, "n": 5}
        }"#,
    );
    let out = dir.path().join("out");
    let code = Command::new(bin())
        .args([
            "verify-mixed",
            "--config",
            cfg.to_str().unwrap(),
            "--out-dir",
            out.to_str().unwrap(),
        ])
        .env("OSL_DATA_DIR", dir.path())
        .status()
        .unwrap()
        .code()
        .unwrap();
    assert_eq!(code, 0);
}
