use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const MODEL: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/models/nsa_auth.model");

fn fgf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fgf"))
        .args(args)
        .env_remove("FGF_SEED")
        .output()
        .expect("fgf runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// A fresh scratch directory per test.
fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("fgf-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn complexity_prints_exact_counts() {
    let o = fgf(&["complexity", MODEL, "--commands", "RRCConnectionRequest", "--strategy", "all"]);
    assert!(o.status.success());
    let out = stdout(&o);
    let rows: Vec<Vec<&str>> = out.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0][2], (1u64 << 45).to_string());
    assert_eq!(rows[1][2], ((1u64 << 40) + (1 << 4) + 1).to_string());
    assert_eq!(rows[2][2], "9");
}

#[test]
fn clean_model_validates_silently() {
    let o = fgf(&["validate", MODEL]);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    assert!(o.stderr.is_empty());
}

#[test]
fn violations_exit_one_with_json() {
    let dir = scratch("violations");
    let text = std::fs::read_to_string(MODEL).unwrap().replacen("length = 45", "length = 46", 1);
    let path = dir.join("bad.model");
    std::fs::write(&path, text).unwrap();
    let o = fgf(&["validate", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v.as_array().unwrap().iter().any(|x| x["element"] == "RRCConnectionRequest"));
}

#[test]
fn isolate_reports_nas_key_exposure() {
    let o = fgf(&["isolate", MODEL, "--profile", "table1_nas"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let hit = v["attack"]
        .as_array()
        .unwrap()
        .iter()
        .any(|e| e["identifier"] == "K_NASenc" && e["property"] == "Confidentiality");
    assert!(hit);
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(fgf(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(fgf(&["isolate", MODEL]).status.code(), Some(2));
    assert_eq!(fgf(&["isolate", MODEL, "--profile", "ghost"]).status.code(), Some(2));
    assert_eq!(fgf(&["analyze", MODEL, "--weights", "1,2"]).status.code(), Some(2));
    assert_eq!(fgf(&["validate", "/definitely/not/here.model"]).status.code(), Some(2));
    let o = fgf(&["complexity", MODEL, "--commands", "Nope"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Nope"));
}

#[test]
fn analyze_emits_vectors_and_ranking() {
    let o = fgf(&["analyze", MODEL]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["vectors"]["K_NASenc"], serde_json::json!([0, 5, 1, 0]));
    let ranking = v["ranking"].as_array().unwrap();
    assert_eq!(ranking.len(), v["vectors"].as_object().unwrap().len());
}

fn command_plan(dir: &Path, seed_flag: Option<&str>, seed_env: Option<&str>) -> String {
    let report = dir.join("report.json");
    if !report.exists() {
        let o = fgf(&["isolate", MODEL, "--profile", "identity_disclosure"]);
        std::fs::write(&report, o.stdout).unwrap();
    }
    let mut args = vec![
        "plan",
        MODEL,
        "--report",
        report.to_str().unwrap(),
        "--level",
        "command",
        "--scheme",
        "uniform",
        "--budget",
        "20",
    ];
    if let Some(s) = seed_flag {
        args.extend(["--seed", s]);
    }
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_fgf"));
    cmd.args(&args).env_remove("FGF_SEED");
    if let Some(s) = seed_env {
        cmd.env("FGF_SEED", s);
    }
    let o = cmd.output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    stdout(&o)
}

#[test]
fn seed_flag_beats_the_environment() {
    let dir = scratch("seed");
    let env_only = command_plan(&dir, None, Some("5"));
    let flag_five = command_plan(&dir, Some("5"), None);
    let flag_six = command_plan(&dir, Some("6"), None);
    let both = command_plan(&dir, Some("6"), Some("5"));
    assert_eq!(env_only, flag_five);
    assert_eq!(both, flag_six);
    assert_ne!(flag_five, flag_six);
}

#[test]
fn run_and_report_round_trip() {
    let dir = scratch("run");
    let cfg = dir.join("scenarios.cfg");
    std::fs::write(&cfg, "[campaign]\nlevel = scenario\n").unwrap();
    let o = fgf(&["run", cfg.to_str().unwrap(), "--parallel", "2"]);
    assert_eq!(o.status.code(), Some(0));
    let result = dir.join("result.json");
    std::fs::write(&result, &o.stdout).unwrap();

    let strict = fgf(&["run", cfg.to_str().unwrap(), "--strict"]);
    assert_eq!(strict.status.code(), Some(1));
    assert_eq!(strict.stdout, o.stdout);

    let json = fgf(&["report", result.to_str().unwrap(), "--format", "json"]);
    assert_eq!(json.stdout, o.stdout);
    let csv = stdout(&fgf(&["report", result.to_str().unwrap(), "--format", "csv"]));
    assert!(csv.starts_with("verdict,count"));
    assert!(csv.contains("ImpersonationSuccess,2"));
    let text = stdout(&fgf(&["report", result.to_str().unwrap()]));
    assert!(text.contains("NasMitmFakeBaseStation"));
}

#[test]
fn fortified_model_is_valid_and_hardened() {
    let dir = scratch("fortify");
    let out = dir.join("fortified.model");
    let o = fgf(&[
        "fortify",
        MODEL,
        "--toggle",
        "HashedImsiWithIntegrity",
        "--toggle",
        "IntegrityProtectRrcTransactionId",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(fgf(&["validate", out.to_str().unwrap()]).status.code(), Some(0));
    let o = fgf(&["isolate", out.to_str().unwrap(), "--profile", "table1_nas"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let secure = v["secure"]
        .as_array()
        .unwrap()
        .iter()
        .any(|e| e["identifier"] == "K_NASint" && e["property"] == "Authentication");
    assert!(secure);
    assert_eq!(fgf(&["fortify", MODEL, "--toggle", "Moat"]).status.code(), Some(2));
}
