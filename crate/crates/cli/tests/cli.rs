use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ledgerdedup"))
        .args(args)
        .current_dir(cwd)
        .env_remove("LEDGERDEDUP_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn last_line(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).lines().last().unwrap_or_default().to_string()
}

#[test]
fn bounds_prints_interval() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["bounds", "--sf", "0.165", "--sc", "0.1", "--n", "10"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(out.contains("min_extra_fee 0.0585") && out.contains("max_extra_fee 0.1485"), "{out}");
    assert_eq!(last_line(&o), "bounds n=10: EF in [0.0585, 0.1485]");
}

#[test]
fn bounds_with_costs_and_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["bounds", "--sf", "0.165", "--sc", "0.1", "--n", "10", "--costs", "0.01,0.002,0.05"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("min_extra_fee 0.1285"));
    assert_eq!(run(&["bounds", "--sf", "0.1", "--sc", "0.2", "--n", "2"], dir.path()).status.code(), Some(2));
    assert_eq!(run(&["bounds", "--sf", "abc", "--sc", "0.1", "--n", "2"], dir.path()).status.code(), Some(2));
    assert_eq!(run(&["bounds", "--sf", "0.2", "--sc", "0.1", "--n", "0"], dir.path()).status.code(), Some(2));
    assert_eq!(run(&["bounds", "--sf", "0.2", "--sc", "0.1", "--n", "2", "--costs", "0.1"], dir.path()).status.code(), Some(2));
}

#[test]
fn bundled_scenarios_pass_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    let traces = dir.path().join("traces");
    let o = run(&["scenario", "--bundled", "--trace-dir", traces.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    assert_eq!(last_line(&o), "scenarios: 10 passed, 0 failed");

    let script = dir.path().join("honest.toml");
    std::fs::write(&script, include_str!("../../core/scenarios/honest-file.toml")).unwrap();
    let o = run(&["scenario", "--script", script.to_str().unwrap(), "--trace-dir", traces.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let name = std::fs::read_dir(&traces).unwrap().count();
    assert!(name >= 10);
    let recorded = std::fs::read_dir(&traces)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.file_name().unwrap().to_string_lossy().starts_with("honest-file"))
        .expect("trace written");
    let o = run(&["scenario", "--script", script.to_str().unwrap(), "--replay", recorded.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(last_line(&o).ends_with("identical"));

    let mut text = std::fs::read_to_string(&recorded).unwrap();
    text = text.replacen("0.1815", "0.1816", 1);
    std::fs::write(&recorded, text).unwrap();
    let o = run(&["scenario", "--script", script.to_str().unwrap(), "--replay", recorded.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(last_line(&o).contains("differs at line"));
}

#[test]
fn known_limitation_script_expects_unfairness() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("limit.toml");
    std::fs::write(&script, include_str!("../../core/scenarios/known-limitations/disable-link-after-fee.toml")).unwrap();
    let o = run(&["scenario", "--script", script.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(last_line(&o), "scenarios: 1 passed, 0 failed");
    let flipped = std::fs::read_to_string(&script).unwrap().replace("fair = false", "fair = true");
    std::fs::write(&script, flipped).unwrap();
    let o = run(&["scenario", "--script", script.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(last_line(&o), "scenarios: 0 passed, 1 failed");
}

#[test]
fn broken_script_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("bad.toml");
    std::fs::write(&script, "name = \"x\"\nbogus = 1\n").unwrap();
    let o = run(&["scenario", "--script", script.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(last_line(&o).starts_with("error:"));
    assert_eq!(run(&["scenario"], dir.path()).status.code(), Some(2));
}

#[test]
fn experiment1_writes_csv_to_env_dir() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("env-out");
    let o = Command::new(env!("CARGO_BIN_EXE_ledgerdedup"))
        .args(["experiment1"])
        .current_dir(dir.path())
        .env("LEDGERDEDUP_OUT_DIR", &out)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let csv = std::fs::read_to_string(out.join("experiment1.csv")).unwrap();
    assert!(csv.starts_with("ef_fraction,n_fraction,users,u_user0,u_user1,u_csp0,u_csp1\n"));
    assert_eq!(csv.lines().count(), 201);
    assert!(csv.contains("\n0.1,0.1,10,2.000000,1.998400,0.650000,0.666000\n"));
}

#[test]
fn experiment1_golden_check_reports_the_outlier() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["experiment1", "--out", ".", "--check-golden"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(out.contains("outside Csp ef=0.5 n50 users=10"), "{out}");
    assert!(last_line(&o).contains("Users max delta 0.001000 (0 outside"));
}

#[test]
fn experiment1_reads_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[experiment1]\nusers = [10]\nn_fractions = [\"1\"]\nef_fractions = [\"0.1\"]\n").unwrap();
    let o = run(&["experiment1", "--config", cfg.to_str().unwrap(), "--out", "o"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(last_line(&o), "experiment1: 1 rows");
    std::fs::write(&cfg, "[experiment1]\nusers = \"ten\"\n").unwrap();
    assert_eq!(run(&["experiment1", "--config", cfg.to_str().unwrap()], dir.path()).status.code(), Some(2));
}

#[test]
fn gen_dataset_then_experiment2() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["gen-dataset", "--packages", "30", "--requests", "900", "--seed", "3", "--out", "ds"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let o = run(
        &["experiment2", "--dataset", "ds/by_inst.txt", "--sizes", "ds/sizes.txt", "--csps", "1", "--out", "r", "--check-ordering"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    assert_eq!(last_line(&o), "experiment2: 30 packages, 900 requests, 1 providers, ordering holds for 1/1");
    let csv = std::fs::read_to_string(dir.path().join("r/experiment2.csv")).unwrap();
    assert!(csv.starts_with("csp,u0,u1,u2,af_in,af_out\n"));
}

#[test]
fn experiment2_full_scale_default_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["experiment2", "--out", "."], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(last_line(&o).starts_with("experiment2: 403 packages, 270738 requests, 5 providers"));
    let o = run(&["experiment2", "--out", ".", "--check-ordering"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn experiment2_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("l.txt"), "1 foo 3 0 0 0 0\n").unwrap();
    std::fs::write(dir.path().join("s.txt"), "bar 10\n").unwrap();
    let o = run(&["experiment2", "--dataset", "l.txt", "--sizes", "s.txt"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(last_line(&o).contains("foo"));
    assert_eq!(run(&["experiment2", "--dataset", "l.txt"], dir.path()).status.code(), Some(2));
    std::fs::write(dir.path().join("s.txt"), "foo 10\n").unwrap();
    assert_eq!(run(&["experiment2", "--dataset", "l.txt", "--sizes", "s.txt", "--csps", "0"], dir.path()).status.code(), Some(2));
}
