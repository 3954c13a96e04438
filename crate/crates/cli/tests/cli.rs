use std::path::Path;
use std::process::{Command, Output};

use dkp_core::fields::{Field, Grid};
use dkp_core::io::write_field;
use nalgebra::DMatrix;

fn dkp(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dkp"))
        .args(args)
        .arg("--out_dir")
        .arg(out)
        .env_remove("DKP_THREADS")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn analyze_identity_has_vanishing_constants() {
    let dir = tempfile::tempdir().unwrap();
    let o = dkp(&["analyze", "identity"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("analyze.json")).unwrap()).unwrap();
    let e = &report[0];
    assert_eq!(e["gradient"]["cm"]["constant"], 0.0);
    assert_eq!(e["gradient"]["cmsup"]["constant"], 0.0);
    assert_eq!(e["split"]["cmsup"]["constant"], 0.0);
    assert!(dir.path().join("analyze.csv").exists());
    assert!(dir.path().join("profile.csv").exists());
}

#[test]
fn analyze_dkp_generic_reports_argmax() {
    let dir = tempfile::tempdir().unwrap();
    let o = dkp(&["analyze", "dkp-generic"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("analyze.json")).unwrap()).unwrap();
    let cmsup = &report[0]["split"]["cmsup"];
    assert!(cmsup["constant"].as_f64().unwrap() > 0.0);
    assert!(cmsup["argmax"]["r"].as_f64().unwrap() > 0.0);
}

#[test]
fn malformed_file_exits_2_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let g = Grid::new(2, 8, 0.5, 2, 6).unwrap();
    let path = dir.path().join("field.json");
    write_field(&path, &Field::identity(g)).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    v["values"][2][3][1][0] = serde_json::json!("oops");
    std::fs::write(&path, v.to_string()).unwrap();
    let o = dkp(&["analyze", path.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("values[2][3][1][0]"), "{}", stderr(&o));
}

#[test]
fn unknown_fixture_and_bad_config_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&dkp(&["analyze", "no-such-fixture"], dir.path())), 2);
    assert_eq!(code(&dkp(&["analyze", "identity", "--q", "0.5"], dir.path())), 2);
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"x_count": "many"}"#).unwrap();
    let o = dkp(&["analyze", "identity", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 2);
    let o = Command::new(env!("CARGO_BIN_EXE_dkp"))
        .args(["fixtures", "list"])
        .env("DKP_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn transform_identity_and_dkp_generic() {
    let dir = tempfile::tempdir().unwrap();
    let o = dkp(&["transform", "identity", "dkp-generic", "--x_count", "32", "--t_min", "0.03125"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let read = |name: &str| -> serde_json::Value {
        serde_json::from_str(&std::fs::read_to_string(dir.path().join(name).join("report.json")).unwrap()).unwrap()
    };
    assert_eq!(read("identity")["N"], 1);
    let generic = read("dkp-generic");
    assert!(generic["N"].as_u64().unwrap() >= 1);
    assert_eq!(generic["last_row_exact"], true);
    assert!(dir.path().join("dkp-generic").join("stages.csv").exists());
}

#[test]
fn transform_non_elliptic_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let g = Grid::new(2, 8, 0.5, 2, 6).unwrap();
    let path = dir.path().join("bad.json");
    let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
    write_field(&path, &Field::constant_matrix(g, "bad", &m).unwrap()).unwrap();
    let o = dkp(&["transform", path.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("not uniformly elliptic"), "{}", stderr(&o));
}

#[test]
fn verify_passes_and_coarse_delta_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let o = dkp(&["verify", "identity", "diag-b"], dir.path());
    assert_eq!(code(&o), 0, "{}{}", stderr(&o), String::from_utf8_lossy(&o.stdout));
    let mut rows = csv::Reader::from_path(dir.path().join("verify.csv")).unwrap();
    let records: Vec<csv::StringRecord> = rows.records().map(|r| r.unwrap()).collect();
    let linear = records
        .iter()
        .find(|r| &r[0] == "regularity" && &r[1] == "identity" && &r[2] == "y")
        .unwrap();
    assert!((linear[3].parse::<f64>().unwrap() - 1.0).abs() < 1e-9);
    assert!(records.iter().any(|r| &r[0] == "regularity under change of variable" && &r[1] == "diag-b"));

    let o = dkp(&["verify", "identity", "--delta", "0.25"], dir.path());
    assert_eq!(code(&o), 4);
    assert!(stderr(&o).contains("insufficient resolution"));
}

#[test]
fn reports_are_deterministic_across_thread_counts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["transform", "diag-b", "--x_count", "32", "--t_min", "0.03125"];
    assert_eq!(code(&dkp(&args, a.path())), 0);
    let o = Command::new(env!("CARGO_BIN_EXE_dkp"))
        .args(args)
        .arg("--out_dir")
        .arg(b.path())
        .env("DKP_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    for f in ["report.json", "composite.json", "stages.csv", "b_final.json"] {
        let x = std::fs::read(a.path().join("diag-b").join(f)).unwrap();
        let y = std::fs::read(b.path().join("diag-b").join(f)).unwrap();
        assert_eq!(x, y, "{f} differs");
    }
}

#[test]
fn config_file_matches_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    let out_cfg = dir.path().join("from-config");
    std::fs::write(
        &cfg,
        serde_json::json!({"inputs": ["diag-b"], "x_count": 32, "t_min": 0.03125, "out_dir": out_cfg}).to_string(),
    )
    .unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_dkp"))
        .args(["analyze", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out_flags = dir.path().join("from-flags");
    assert_eq!(code(&dkp(&["analyze", "diag-b", "--x_count", "32", "--t_min", "0.03125"], &out_flags)), 0);
    assert_eq!(
        std::fs::read(out_cfg.join("analyze.json")).unwrap(),
        std::fs::read(out_flags.join("analyze.json")).unwrap()
    );
}
