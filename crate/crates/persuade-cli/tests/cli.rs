//! End-to-end checks of the binary: output format, artifacts, exit codes.

use std::path::Path;
use std::process::{Command, Output};

fn persuade(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_persuade"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn write_golden_instance(dir: &Path) -> String {
    let path = dir.join("example1.json");
    let out = persuade(&[
        "generate",
        "--family",
        "example1",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    path.to_str().unwrap().to_owned()
}

#[test]
fn solve_private_prints_the_golden_value() {
    let dir = tempfile::tempdir().unwrap();
    let instance = write_golden_instance(dir.path());
    let out = persuade(&["solve", "--instance", &instance, "--mode", "private"]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("value 1.000000"), "{}", stdout(&out));
}

#[test]
fn solve_public_prints_zero_for_the_golden_instance() {
    let dir = tempfile::tempdir().unwrap();
    let instance = write_golden_instance(dir.path());
    let out = persuade(&[
        "solve", "--instance", &instance, "--mode", "public", "--q", "6",
    ]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("value 0.000000"), "{}", stdout(&out));
}

#[test]
fn oracle_public_concavifies_the_single_voter_instance() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("single.json");
    std::fs::write(
        &path,
        r#"{"states":["s0","s1"],"prior":[0.3,0.7],
            "districts":[{"id":"d","voters":[{"id":"v","u_c0":[1.0,0.0],"u_c1":[0.0,1.0]}]}]}"#,
    )
    .unwrap();
    let out = persuade(&[
        "oracle", "--instance", path.to_str().unwrap(), "--mode", "public",
    ]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("value 0.600000"), "{}", stdout(&out));
}

#[test]
fn solve_writes_report_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let instance = write_golden_instance(dir.path());
    let out_dir = dir.path().join("artifacts");
    let out = persuade(&[
        "solve",
        "--instance",
        &instance,
        "--mode",
        "private",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let json = std::fs::read_to_string(out_dir.join("private_report.json")).unwrap();
    assert!(json.contains("\"format_version\": 1"));
    assert!(json.contains("private-solve-report"));
    let csv = std::fs::read_to_string(out_dir.join("private_marginals.csv")).unwrap();
    assert!(csv.starts_with("voter,theta_A,theta_B,theta_C"));
    assert_eq!(csv.lines().count(), 8);
}

#[test]
fn dump_lp_writes_model_files() {
    let dir = tempfile::tempdir().unwrap();
    let instance = write_golden_instance(dir.path());
    let out_dir = dir.path().join("artifacts");
    let out = persuade(&[
        "solve",
        "--instance",
        &instance,
        "--mode",
        "private",
        "--out",
        out_dir.to_str().unwrap(),
        "--dump-lp",
    ]);
    assert!(out.status.success());
    let lp = std::fs::read_to_string(out_dir.join("private-dbe.lp")).unwrap();
    assert!(lp.contains("Maximize"));
    assert!(lp.contains("Subject To"));
}

#[test]
fn stability_subcommand_reports_cells() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("inst.json");
    let gen = persuade(&[
        "generate",
        "--family",
        "uniform-random",
        "--n-states",
        "2",
        "--n-districts",
        "1",
        "--voters-per-district",
        "9",
        "--seed",
        "3",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(gen.status.success());
    let out = persuade(&[
        "stability",
        "--instance",
        path.to_str().unwrap(),
        "--delta",
        "0.2",
        "--trials",
        "2000",
        "--out",
        dir.path().join("stab").to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("violations 0"), "{text}");
    let csv =
        std::fs::read_to_string(dir.path().join("stab").join("stability_cells.csv")).unwrap();
    assert!(csv.starts_with("base,alpha,model"));
}

#[test]
fn negative_control_flag_flips_the_outcome() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("inst.json");
    persuade(&[
        "generate",
        "--family",
        "uniform-random",
        "--n-states",
        "2",
        "--n-districts",
        "1",
        "--voters-per-district",
        "9",
        "--seed",
        "3",
        "--out",
        path.to_str().unwrap(),
    ]);
    let out = persuade(&[
        "stability",
        "--instance",
        path.to_str().unwrap(),
        "--delta",
        "0.4",
        "--trials",
        "2000",
        "--negative-control",
    ]);
    assert!(out.status.success());
    assert!(!stdout(&out).contains("violations 0"), "{}", stdout(&out));
}

#[test]
fn bad_input_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"states":["a"],"prior":[0.9],"districts":[]}"#).unwrap();
    let out = persuade(&[
        "solve", "--instance", path.to_str().unwrap(), "--mode", "private",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn cap_refusal_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let instance = write_golden_instance(dir.path());
    let out = persuade(&[
        "solve", "--instance", &instance, "--mode", "public", "--q", "40", "--cap", "100",
    ]);
    assert_eq!(out.status.code(), Some(3));
    // Oversized instances are refused by the oracles as well.
    let big = dir.path().join("big.json");
    let gen = persuade(&[
        "generate",
        "--family",
        "uniform-random",
        "--n-states",
        "2",
        "--n-districts",
        "1",
        "--voters-per-district",
        "15",
        "--out",
        big.to_str().unwrap(),
    ]);
    assert!(gen.status.success());
    let out = persuade(&[
        "oracle", "--instance", big.to_str().unwrap(), "--mode", "private",
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn audit_subcommand_passes_on_clean_schemes() {
    let dir = tempfile::tempdir().unwrap();
    let instance = write_golden_instance(dir.path());
    let out = persuade(&[
        "audit", "--instance", &instance, "--mode", "public", "--q", "4",
    ]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("audit pass"), "{}", stdout(&out));
}

#[test]
fn solve_mode_oracle_aliases_work() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("single.json");
    std::fs::write(
        &path,
        r#"{"states":["s0","s1"],"prior":[0.3,0.7],
            "districts":[{"id":"d","voters":[{"id":"v","u_c0":[1.0,0.0],"u_c1":[0.0,1.0]}]}]}"#,
    )
    .unwrap();
    let out = persuade(&[
        "solve", "--instance", path.to_str().unwrap(), "--mode", "oracle-public",
    ]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("value 0.600000"), "{}", stdout(&out));
}

#[test]
fn thread_env_var_is_honored() {
    let dir = tempfile::tempdir().unwrap();
    let instance = write_golden_instance(dir.path());
    let out = Command::new(env!("CARGO_BIN_EXE_persuade"))
        .args(["solve", "--instance", &instance, "--mode", "public", "--q", "6"])
        .env("PERSUADE_SOLVER_THREADS", "1")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(stdout(&out).contains("value 0.000000"));
}

#[test]
fn generation_is_reproducible_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for path in [&a, &b] {
        let out = persuade(&[
            "generate",
            "--family",
            "threshold-adversarial",
            "--n-states",
            "3",
            "--n-districts",
            "2",
            "--voters-per-district",
            "5",
            "--seed",
            "11",
            "--out",
            path.to_str().unwrap(),
        ]);
        assert!(out.status.success());
    }
    assert_eq!(
        std::fs::read_to_string(&a).unwrap(),
        std::fs::read_to_string(&b).unwrap()
    );
}
