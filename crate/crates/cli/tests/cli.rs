use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_bo-ldg"));
    c.env_remove("BO_LDG_OUTPUT_DIR");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

const SMALL: &[&str] = &["--experiment", "custom", "--n", "8,16", "--a", "-15", "--b", "15", "--t-final", "0.5"];

fn converge_into(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["converge"];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(&["--output-dir", dir.to_str().unwrap()]);
    args.extend_from_slice(extra);
    run(&args)
}

#[test]
fn exact_eval_to_stdout() {
    let out = run(&["exact-eval", "--points", "3"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines[0], "x,U");
    assert_eq!(lines.len(), 4);
    let mid: Vec<f64> = lines[2].split(',').map(|s| s.parse().unwrap()).collect();
    let d = std::f64::consts::PI / 3.75;
    let want = 0.5 * d * d / (1.0 - (1.0 - d * d).sqrt());
    assert_eq!(mid[0], 0.0);
    assert!((mid[1] - want).abs() < 1e-14);
}

#[test]
fn converge_writes_reproducible_outputs() {
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    assert!(converge_into(d1.path(), &[]).status.success());
    assert!(converge_into(d2.path(), &["--snapshots"]).status.success());
    let csv1 = std::fs::read_to_string(d1.path().join("convergence.csv")).unwrap();
    let csv2 = std::fs::read_to_string(d2.path().join("convergence.csv")).unwrap();
    assert_eq!(csv1, csv2);
    let lines: Vec<_> = csv1.lines().collect();
    assert_eq!(lines[0], "N,error,rate,C1,C2");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].split(',').nth(2).unwrap().is_empty());
    assert!(d2.path().join("snapshot_N16.csv").exists());
    assert!(d1.path().join("timing.json").exists());

    // feeding the echoed config back reproduces the run
    let d3 = tempfile::tempdir().unwrap();
    let meta = d1.path().join("metadata.json");
    let out = run(&["converge", "--json-config", meta.to_str().unwrap(), "--output-dir", d3.path().to_str().unwrap()]);
    assert!(out.status.success());
    assert_eq!(std::fs::read_to_string(d3.path().join("convergence.csv")).unwrap(), csv1);
    let echo = |p: &Path| {
        let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap();
        v["config"]["output_dir"] = serde_json::Value::Null;
        v
    };
    assert_eq!(echo(&meta), echo(&d3.path().join("metadata.json")));
}

#[test]
fn config_file_overrides_flags() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("run.cfg");
    std::fs::write(&cfg, "# smaller study\nn = 6, 12\n").unwrap();
    let out = converge_into(d.path(), &["--config", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(d.path().join("convergence.csv")).unwrap();
    let ns: Vec<_> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap().to_string()).collect();
    assert_eq!(ns, ["6", "12"]);
}

#[test]
fn output_dir_from_environment() {
    let d = tempfile::tempdir().unwrap();
    let mut args = vec!["converge"];
    args.extend_from_slice(SMALL);
    let out = bin().args(&args).env("BO_LDG_OUTPUT_DIR", d.path()).output().unwrap();
    assert!(out.status.success());
    assert!(d.path().join("convergence.csv").exists());
}

#[test]
fn simulate_and_stability() {
    let d = tempfile::tempdir().unwrap();
    let mut args = vec!["simulate"];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(&["--output-dir", d.path().to_str().unwrap()]);
    assert!(run(&args).status.success());
    let snap = std::fs::read_to_string(d.path().join("snapshot_N16.csv")).unwrap();
    assert_eq!(snap.lines().count(), 1 + 16 * 8);

    let out = run(&[
        "stability", "--experiment", "stability_report", "--n", "8", "--set", "stability_trials=3",
        "--output-dir", d.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let reports: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.path().join("stability.json")).unwrap()).unwrap();
    assert_eq!(reports.as_array().unwrap().len(), 3);
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["converge", "--experiment", "nope"]).status.code(), Some(2));
    assert_eq!(run(&["converge", "--n", "16,8"]).status.code(), Some(2));
    // a file where the output directory should be
    let d = tempfile::tempdir().unwrap();
    let blocker = d.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    assert_eq!(converge_into(&blocker, &[]).status.code(), Some(4));
    // Newton cannot reach an unattainable tolerance
    let mut args = vec!["simulate"];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(&["--set", "newton_tol=1e-300", "--set", "newton_max_iter=2", "--output-dir", d.path().to_str().unwrap()]);
    let out = run(&args);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}
