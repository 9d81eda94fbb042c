//! End-to-end checks of the binary: exit codes, output formats, and
//! rerun determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_resonax"));
    // keep the suite independent of the environment it runs in
    cmd.env_remove("RESONAX_THREADS");
    cmd
}

fn repo_config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

#[test]
fn validate_prints_the_sheet_count() {
    let out = bin()
        .args(["validate", repo_config("two_channel.json").to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("channels: 2"), "{text}");
    assert!(text.contains("sheets: 4"), "{text}");
}

#[test]
fn missing_config_exits_two() {
    let out = bin()
        .args(["validate", "/nonexistent/model.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_json_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.json");
    std::fs::write(&path, "{not json").unwrap();
    let out = bin()
        .args(["validate", path.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn descending_thresholds_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("descending.json");
    std::fs::write(
        &path,
        r#"{"channels": [{"threshold": 1.0}, {"threshold": 0.0}],
            "potential": {"kind": "zero"}}"#,
    )
    .unwrap();
    let out = bin()
        .args(["validate", path.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn bad_sheet_arguments_exit_three() {
    let config = repo_config("two_channel.json");
    let config = config.to_str().unwrap();
    // a bit that is not 0/1
    let out = bin()
        .args([
            "scan", config, "--sheet", "1,2", "--region", "2.0,3.0,-0.5,-0.1",
            "--out", "/tmp/unused.csv",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    // wrong bit count for the channel count
    let out = bin()
        .args([
            "scan", config, "--sheet", "1", "--region", "2.0,3.0,-0.5,-0.1",
            "--out", "/tmp/unused.csv",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn cut_straddling_region_exits_four() {
    let out = bin()
        .args([
            "find",
            repo_config("single_channel.json").to_str().unwrap(),
            "--sheet", "1",
            "--region", "0.5,1.5,-0.3,0.3",
            "--nodes", "24",
            "--out", "/tmp/unused.json",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn scan_of_the_free_model_is_flat() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("grid.csv");
    let out = bin()
        .args([
            "scan",
            repo_config("zero.json").to_str().unwrap(),
            "--sheet", "1",
            "--region", "0.5,1.5,-0.8,-0.1",
            "--nx", "5",
            "--ny", "4",
            "--out", out_path.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(&out_path).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("re_z,im_z,re_det,im_det,abs_det"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 20);
    for row in rows {
        let abs_det: f64 = row.split(',').nth(4).unwrap().parse().unwrap();
        assert_eq!(abs_det, 1.0);
    }
}

#[test]
fn find_on_the_free_model_writes_an_empty_array() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("roots.json");
    let out = bin()
        .args([
            "find",
            repo_config("zero.json").to_str().unwrap(),
            "--sheet", "1",
            "--region", "-3.0,-1.0,-0.5,0.5",
            "--out", out_path.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(std::fs::read_to_string(&out_path).unwrap(), "[]\n");
}

#[test]
fn find_locates_the_virtual_state_and_reruns_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first.json");
    let second = dir.path().join("second.json");
    let config = repo_config("single_channel.json");
    let args = |out: &Path| {
        vec![
            "find".to_string(),
            config.to_str().unwrap().to_string(),
            "--sheet".into(), "1".into(),
            "--region".into(), "-5.5,-4.6,-0.4,0.4".into(),
            "--nx".into(), "15".into(),
            "--ny".into(), "9".into(),
            "--nodes".into(), "48".into(),
            "--out".into(), out.to_str().unwrap().to_string(),
        ]
    };
    let out = bin().args(args(&first)).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = stdout(&out);
    assert!(report.contains("\"expected\":1"), "{report}");

    let records: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&first).unwrap()).unwrap();
    let record = &records.as_array().unwrap()[0];
    assert_eq!(record["kind"], "virtual_state");
    assert_eq!(record["sheet"], serde_json::json!([1]));
    let z_re = record["z_star"][0].as_f64().unwrap();
    assert!((z_re + 5.0774246).abs() < 1e-4, "z_star {z_re}");
    assert!(record["residual"].as_f64().unwrap() < 1e-10);

    let out = bin().args(args(&second)).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(
        std::fs::read(&first).unwrap(),
        std::fs::read(&second).unwrap()
    );
}

#[test]
fn verify_passes_and_the_mutation_fixture_fails() {
    let config = repo_config("single_channel.json");
    let config = config.to_str().unwrap();
    let out = bin()
        .args(["verify", config, "--samples", "3", "--nodes", "48"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    let text = stdout(&out);
    assert!(text.contains("unitarity"), "{text}");
    assert!(text.contains("all 7 identities passed"), "{text}");

    let out = bin()
        .args([
            "verify", config, "--samples", "3", "--nodes", "48", "--mutate-a-sign",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(5));
}

#[test]
fn thread_cap_is_honored_and_validated() {
    let out = bin()
        .args(["validate", repo_config("zero.json").to_str().unwrap()])
        .env("RESONAX_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));

    let out = bin()
        .args(["validate", repo_config("zero.json").to_str().unwrap()])
        .env("RESONAX_THREADS", "abc")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}
