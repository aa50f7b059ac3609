use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_paneljump"))
}

fn fixture() -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures/three_units.csv")
        .display()
        .to_string()
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

const SMALL: [&str; 4] = ["--bandwidth", "fixed:0.6", "--alpha", "0.05"];

#[test]
fn critical_value_matches_table() {
    let o = run(&[
        "critical-value",
        "--n",
        "13",
        "--alpha",
        "0.05",
        "--sided",
        "upper",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "2.657\n");
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(
        run(&["critical-value", "--n", "3", "--nonsense"]).status.code(),
        Some(2)
    );
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(
        run(&["critical-value", "--n", "3", "--alpha", "0"]).status.code(),
        Some(2)
    );
    let o = run(&["jump-test", "--data", &fixture(), "--bandwidth", "wide"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!o.stderr.is_empty());
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn data_errors_exit_three_without_output_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    let missing = dir.path().join("missing.csv");
    let o = run(&[
        "jump-test",
        "--data",
        missing.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(!out.exists());

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "unit,time,y,x\na,1,1.0,0.1\na,1,2.0,0.2\n").unwrap();
    let o = run(&[
        "jump-test",
        "--data",
        bad.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("duplicate"));
    assert!(!out.exists());
    // only the input remains: no report and no temporary file
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
}

#[test]
fn numerical_failure_exits_four() {
    let o = run(&[
        "jump-test",
        "--data",
        &fixture(),
        "--threshold",
        "5",
        "--bandwidth",
        "fixed:0.3",
    ]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn jump_test_output_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let paths: Vec<PathBuf> = (0..2).map(|i| dir.path().join(format!("r{i}.csv"))).collect();
    let data = fixture();
    for p in &paths {
        let mut args = vec!["jump-test", "--data", data.as_str(), "--out", p.to_str().unwrap()];
        args.extend(SMALL);
        let o = run(&args);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = std::fs::read(&paths[0]).unwrap();
    assert_eq!(a, std::fs::read(&paths[1]).unwrap());
    assert!(String::from_utf8(a)
        .unwrap()
        .starts_with("unit,threshold,bandwidth,gamma_hat"));
}

#[test]
fn per_unit_thresholds_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let th = dir.path().join("c.csv");
    std::fs::write(&th, "unit,c\nalpha,0.0\nbeta,0.0\ngamma,-0.1\n").unwrap();
    let th = format!("file:{}", th.display());
    let data = fixture();
    let mut args = vec!["jump-test", "--data", data.as_str(), "--threshold", th.as_str()];
    args.extend(SMALL);
    let o = run(&args);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).lines().any(|l| l.starts_with("gamma,-0.1,")));
}

#[test]
fn homogeneity_and_search_run() {
    let data = fixture();
    let mut args = vec![
        "homogeneity-test",
        "--data",
        data.as_str(),
        "--center",
        "median",
        "--format",
        "markdown",
    ];
    args.extend(SMALL);
    let o = run(&args);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("| center | median |"));

    let mut args = vec![
        "threshold-search",
        "--data",
        data.as_str(),
        "--threshold",
        "grid:-0.1,0,0.1",
    ];
    args.extend(SMALL);
    let o = run(&args);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("grid spacing"));
}

#[test]
fn simulate_prints_size_table() {
    let o = bin()
        .args([
            "simulate", "--dgp", "1", "--n", "10", "--t", "100", "--reps", "5", "--seed", "7",
        ])
        .env("PANELJUMP_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.starts_with("test,dgp,n,t,reps,failed,alpha,rate,std_err\n"));
    assert_eq!(text.lines().count(), 4);
}
