use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
user_counts = [10]
drops = 2
seed_base = 7

[scenario]
macro_count = 1
picos_per_macro = 2

[search]
max_iter_total = 30
diversification = 3
"#;

fn hetnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hetnet"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn setup() -> (tempfile::TempDir, String) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    fs::write(&cfg, SMALL).unwrap();
    let cfg = cfg.to_str().unwrap().to_string();
    (dir, cfg)
}

fn lines(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().count()
}

#[test]
fn generate_writes_one_directory_per_drop() {
    let (dir, cfg) = setup();
    let out = dir.path().join("gen");
    let o = hetnet(&["generate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(lines(&out.join("users10_drop0/cells.csv")), 4);
    assert_eq!(lines(&out.join("users10_drop1/users.csv")), 11);
    assert!(fs::read_to_string(out.join("metadata.txt")).unwrap().contains("seed_base = 7"));
}

#[test]
fn optimize_keeps_the_decision_trace() {
    let (dir, cfg) = setup();
    let out = dir.path().join("opt");
    let o = hetnet(&["optimize", "--config", &cfg, "--seed", "3", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("trace_10_0_proposed.csv").exists());
    assert_eq!(lines(&out.join("users.csv")), 11);
    assert_eq!(lines(&out.join("summary.csv")), 2);
    let meta = fs::read_to_string(out.join("metadata.txt")).unwrap();
    assert!(meta.contains("seed_base = 3"));
    assert!(meta.contains("tenure = 2"));
}

#[test]
fn baseline_sweep_and_report_agree() {
    let (dir, cfg) = setup();
    let out = dir.path().join("base");
    let o = hetnet(&["baseline", "--config", &cfg, "--biases", "0,10", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("reuse1_0dB") && stdout.contains("reuse1_10dB"));
    assert_eq!(lines(&out.join("drops.csv")), 5);

    let again = dir.path().join("again");
    let o = hetnet(&["report", out.to_str().unwrap(), "--out", again.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        fs::read_to_string(out.join("summary.csv")).unwrap(),
        fs::read_to_string(again.join("summary.csv")).unwrap()
    );
}

#[test]
fn experiment_with_pattern_file() {
    let (dir, cfg) = setup();
    let patterns = dir.path().join("patterns.txt");
    fs::write(&patterns, "# one macro, two picos\n011\n100\n111\n").unwrap();
    let out = dir.path().join("exp");
    let o = hetnet(&[
        "experiment",
        "--config",
        &cfg,
        "--patterns",
        "file",
        "--pattern-file",
        patterns.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let shares = fs::read_to_string(out.join("allocations.csv")).unwrap();
    for line in shares.lines().skip(1).filter(|l| l.contains(",proposed,")) {
        let pattern = line.split(',').nth(3).unwrap();
        assert!(["011", "100", "111"].contains(&pattern), "{line}");
    }
}

#[test]
fn oracle_suite_runs() {
    let (dir, cfg) = setup();
    let out = dir.path().join("oracle");
    let o = hetnet(&["oracle", "--config", &cfg, "--instances", "4", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    assert_eq!(lines(&out.join("oracle.csv")), 5);
}

#[test]
fn bad_input_fails_cleanly() {
    let (dir, _) = setup();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "drops = 0\n").unwrap();
    let o = hetnet(&["experiment", "--config", bad.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("drops"));

    let o = hetnet(&["experiment", "--patterns", "file"]);
    assert!(!o.status.success());
}
