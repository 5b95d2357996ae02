use std::fs;
use std::path::{Path, PathBuf};

use stochpath::harness::{self, ConvergenceStatus, Scenario, ScenarioConfig, Status};

fn tmp(name: &str) -> PathBuf {
    let d = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("harness").join(name);
    let _ = fs::remove_dir_all(&d);
    fs::create_dir_all(&d).unwrap();
    d
}

fn config(dir: &Path, body: &str) -> PathBuf {
    let text = format!(
        r#"
id = "probe"
output_dir = "{}"
{body}
[grid]
n = 256
x_min = -16.0
x_max = 16.0
[state]
family = "gaussian"
sigma = 1.0
k0 = 0.5
[run]
dt = 1e-3
n_steps = 20
"#,
        dir.join("out").display()
    );
    let path = dir.join("probe.toml");
    fs::write(&path, text).unwrap();
    path
}

fn read_tree(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|x| x == "csv") {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn passing_scenario_exits_zero_and_writes_reports() {
    let d = tmp("pass");
    let path = config(&d, r#"checks = ["density_axioms", "continuity_n1", "quantum_potential_identity"]"#);
    let (report, code, text) = harness::run_scenario(&path);
    assert_eq!(code, 0, "{text}");
    let report = report.unwrap();
    assert_eq!(report.checks.len(), 3);
    assert!(d.join("out/report.json").exists() && d.join("out/report.txt").exists());
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("out/report.json")).unwrap()).unwrap();
    assert_eq!(json["schema_version"], 1);
    assert_eq!(json["checks"][1]["name"], "continuity_n1");
}

#[test]
fn failing_check_still_writes_report() {
    let d = tmp("fail");
    let path = config(&d, "checks = [\"continuity_n1\"]\n[tolerances]\ncontinuity_n1 = 1e-30");
    let (report, code, _) = harness::run_scenario(&path);
    assert_eq!(code, 1);
    assert_eq!(report.unwrap().checks[0].outcome.status, Status::Fail);
    assert!(d.join("out/report.json").exists());
}

#[test]
fn config_errors_exit_two() {
    let d = tmp("parse");
    for body in [
        r#"checks = ["no_such_check"]"#,
        "checks = [\"continuity_n1\"]\n[tolerances]\ncontinuity_nl = 1e-5",
        "checks = []\nbogus = 1",
    ] {
        let path = config(&d, body);
        let (_, code, msg) = harness::run_scenario(&path);
        assert_eq!(code, 2, "{body}: {msg}");
    }
    let path = config(&d, r#"checks = ["density_axioms"]"#);
    fs::write(&path, fs::read_to_string(&path).unwrap().replace("n = 256", "n = 100")).unwrap();
    let (_, code, msg) = harness::run_scenario(&path);
    assert_eq!(code, 2);
    assert!(msg.contains("grid.n"), "{msg}");
}

#[test]
fn validation_errors_exit_three() {
    let d = tmp("validate");
    let path = config(&d, r#"checks = ["density_axioms"]"#);
    fs::write(&path, fs::read_to_string(&path).unwrap().replace("sigma = 1.0", "sigma = 1.0\nx0 = 14.5")).unwrap();
    assert_eq!(harness::run_scenario(&path).1, 3);
    // a pure state cannot run the two-particle check
    let path = config(&d, r#"checks = ["bell_gap"]"#);
    assert_eq!(harness::run_scenario(&path).1, 3);
}

#[test]
fn identical_runs_give_identical_csv_bytes() {
    let a = tmp("det_a");
    let b = tmp("det_b");
    let checks = r#"checks = ["moment_triangle", "drift_transport", "continuity_n1"]
seed = 5"#;
    for d in [&a, &b] {
        let (_, code, text) = harness::run_scenario(&config(d, checks));
        assert_eq!(code, 0, "{text}");
    }
    let (ta, tb) = (read_tree(&a.join("out")), read_tree(&b.join("out")));
    assert!(!ta.is_empty());
    assert_eq!(ta, tb);
}

#[test]
fn timestamp_header_is_opt_in() {
    let d = tmp("stamp");
    let path = config(&d, "checks = [\"moment_triangle\"]\ntimestamp = true");
    harness::run_scenario(&path);
    let csv = fs::read_to_string(d.join("out/moment_triangle/moments.csv")).unwrap();
    assert!(csv.starts_with("# generated-unix-seconds:"));
}

#[test]
fn output_root_env_is_resolved() {
    let c = ScenarioConfig::from_toml(
        "id = \"env\"\nchecks = []\n[grid]\nn = 64\nx_min = -8.0\nx_max = 8.0\n[state]\nfamily = \"gaussian\"\nsigma = 0.7\n",
    )
    .unwrap();
    assert!(c.resolve_output_dir().ends_with("env"));
}

#[test]
fn refinement_ladders() {
    let d = tmp("converge");
    let s = Scenario::load(&config(&d, r#"checks = []"#)).unwrap();
    let t = harness::convergence_study(&s, "action_identity", 3).unwrap();
    assert_eq!(t.status, ConvergenceStatus::Exact);
    assert_eq!(t.exit_code(), 0);
    let t = harness::convergence_study(&s, "quantum_hj_residual", 3).unwrap();
    assert!((t.slope - 2.0).abs() < 0.2, "{}", t.to_text());
    assert!(d.join("out/convergence_quantum_hj_residual.csv").exists());
    assert!(harness::convergence_study(&s, "density_axioms", 3).is_err());
}
