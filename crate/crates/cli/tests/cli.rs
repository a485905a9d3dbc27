use std::fs;
use std::path::Path;
use std::process::Command;

use predual_cli::config::{Mode, RunConfig};
use predual_cli::{execute, RunSummary};

fn predual() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_predual"));
    cmd.env("RUST_LOG", "warn");
    cmd
}

fn write(path: &Path, text: &str) {
    fs::write(path, text).unwrap();
}

#[test]
fn solve_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let run = |out: &str| {
        let status = predual()
            .args(["solve", "--scenario", "ex1_f1_a1", "--resolution", "8", "--tau-min", "1e-4", "--out"])
            .arg(dir.path().join(out))
            .status()
            .unwrap();
        assert_eq!(status.code(), Some(0));
    };
    run("a");
    run("b");
    for file in ["solution.vtk", "summary.json"] {
        let a = fs::read(dir.path().join("a").join(file)).unwrap();
        let b = fs::read(dir.path().join("b").join(file)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b, "{file} differs between identical runs");
    }
    assert!(dir.path().join("a/timing.json").exists());
    let text = fs::read_to_string(dir.path().join("a/summary.json")).unwrap();
    let summary: RunSummary = serde_json::from_str(&text).unwrap();
    assert_eq!(summary.mode, Mode::Solve);
    assert_eq!(serde_json::to_string_pretty(&summary).unwrap() + "\n", text);
    assert!(summary.tau_steps.iter().all(|s| s.r1 <= 1e-8 && s.r2 <= 1e-8));
}

#[test]
fn gradient_magnitude_is_active_on_the_pyramid() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = RunConfig::for_scenario(Mode::Solve, "ex1_f1_a1");
    config.output.dir = dir.path().to_path_buf();
    execute(&config).unwrap();
    let vtk = fs::read_to_string(dir.path().join("solution.vtk")).unwrap();
    let lines: Vec<&str> = vtk.lines().collect();
    let start = lines.iter().position(|l| *l == "SCALARS grad_u_mag double 1").unwrap() + 2;
    let values: Vec<f64> = lines[start..].iter().take_while(|l| !l.starts_with("VECTORS")).map(|l| l.parse().unwrap()).collect();
    assert_eq!(values.len(), 2 * 64 * 64);
    let near_one = values.iter().filter(|v| (*v - 1.0).abs() < 1e-6).count();
    assert!(near_one as f64 >= 0.99 * values.len() as f64, "{near_one} of {}", values.len());
    assert!(values.iter().all(|v| *v <= 1.0 + 1e-12));
}

#[test]
fn study_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = predual()
        .args(["study", "--scenario", "ex1_f1_a1", "--mesh-sizes", "4,8,16", "--tau-min", "1e-4", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("study.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "h,err_u,err_p,rate_u,rate_p");
    assert_eq!(lines.len(), 5);
    assert!(lines[4].starts_with("fit,,,"));
    let summary: RunSummary = serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary.study.unwrap().rows.len(), 3);
}

#[test]
fn evolve_from_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("evolve.json");
    write(
        &config,
        &format!(
            r#"{{
  "mode": "evolve",
  "problem": {{
    "nx": 6, "ny": 6,
    "boundary": ["left", "right", "bottom", "top"],
    "alpha": {{"kind": "constant", "value": 1.0}},
    "source": {{"kind": "constant", "value": 0.0}}
  }},
  "evolution": {{
    "rate": {{"source": {{"kind": "constant", "value": 1.0}}}},
    "final_time": 0.3,
    "step": 0.1
  }},
  "solver": {{"tau_min": 1e-4}},
  "output": {{"dir": {:?}}}
}}"#,
            dir.path().join("out")
        ),
    );
    let status = predual().args(["evolve", "--config"]).arg(&config).status().unwrap();
    assert_eq!(status.code(), Some(0));
    for n in 0..=3 {
        assert!(dir.path().join(format!("out/frame_{n:04}.vtk")).exists());
    }
    let summary: RunSummary = serde_json::from_str(&fs::read_to_string(dir.path().join("out/summary.json")).unwrap()).unwrap();
    assert_eq!(summary.time_steps.len(), 3);
    assert!(summary.mass_balance.iter().all(|b| b.imbalance.abs() < 1e-10));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();

    // configuration errors
    let bad = dir.path().join("bad.json");
    write(
        &bad,
        r#"{"mode": "solve", "problem": {"nx": 4, "ny": 4, "alpha": {"kind": "constant", "value": -1},
            "source": {"kind": "constant", "value": 1}}}"#,
    );
    let out = predual().args(["solve", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("problem.alpha.value"));
    let out = predual().args(["solve", "--config"]).arg(dir.path().join("missing.json")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = predual().args(["study", "--scenario", "ex1_f1_a1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = predual().args(["solve", "--scenario", "ex1_f1_a1", "--tau-min", "-1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    // solver failure: one Newton iteration cannot meet a 1e-14 tolerance
    let hard = dir.path().join("hard.json");
    write(
        &hard,
        &format!(
            r#"{{"mode": "solve", "scenario": "ex1_f1_a1", "resolution": 4,
                "solver": {{"newton_max_iter": 1, "newton_tol": 1e-14}}, "output": {{"dir": {:?}}}}}"#,
            dir.path().join("hard_out")
        ),
    );
    let out = predual().args(["solve", "--config"]).arg(&hard).output().unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));

    // I/O failure: the output directory is a regular file
    let blocker = dir.path().join("blocker");
    write(&blocker, "");
    let out = predual()
        .args(["solve", "--scenario", "ex1_f1_a1", "--resolution", "2", "--tau-min", "1", "--out"])
        .arg(&blocker)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}
