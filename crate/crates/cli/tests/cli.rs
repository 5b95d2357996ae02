use std::fs;
use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stochpath"))
}

fn scenarios() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

#[test]
fn list_checks_is_sorted_and_filterable() {
    let out = bin().arg("list-checks").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let names: Vec<&str> = text.lines().map(|l| l.split_whitespace().next().unwrap()).collect();
    let mut sorted = names.clone();
    sorted.sort();
    assert_eq!(names, sorted);
    for n in ["continuity_n1", "quantum_potential_identity", "bell_gap"] {
        assert!(names.contains(&n));
    }
    let out = bin().args(["list-checks", "--module", "bell_correlations"]).output().unwrap();
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 1);
    let out = bin().args(["list-checks", "--module", "nope"]).output().unwrap();
    assert!(out.status.success() && out.stdout.is_empty());
}

#[test]
fn run_honours_exit_codes_and_output_root() {
    let root = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("cli_run");
    let _ = fs::remove_dir_all(&root);
    let out = bin().args(["run"]).arg(scenarios().join("product.toml")).env("STOCHPATH_OUTPUT_ROOT", &root).output().unwrap();
    assert!(root.join("product/report.json").exists());
    // the product suite carries the known velocity-squared gap
    assert_eq!(out.status.code(), Some(1));

    let bad = root.join("bad.toml");
    fs::write(&bad, fs::read_to_string(scenarios().join("stationary.toml")).unwrap().replace("n = 512", "n = 100")).unwrap();
    let out = bin().arg("run").arg(&bad).env("STOCHPATH_OUTPUT_ROOT", &root).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("grid.n"));
}

#[test]
fn converge_reports_exact_identity() {
    let root = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("cli_converge");
    let out = bin()
        .args(["converge"])
        .arg(scenarios().join("harmonic_ground.toml"))
        .args(["--check", "action_identity", "--levels", "3"])
        .env("STOCHPATH_OUTPUT_ROOT", &root)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8(out.stdout).unwrap().contains("slope exact"));
}

#[test]
fn version_prints_schema() {
    let out = bin().arg("version").output().unwrap();
    assert!(String::from_utf8(out.stdout).unwrap().contains("report schema 1"));
}
