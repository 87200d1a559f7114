use std::path::Path;
use std::process::{Command, Output};

use polydisc::GridFunction;

fn polydisc(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polydisc")).args(args).current_dir(cwd).output().unwrap()
}

fn write_grid(path: &Path, dim: usize, l: u32, phase: f64) {
    let n = 1usize << (l as usize * dim);
    let values: Vec<f64> = (0..n).map(|i| ((i as f64) * 0.37 + phase).sin()).collect();
    let grid = GridFunction::from_real(dim, l, &values).unwrap();
    std::fs::write(path, grid.to_csv_string().unwrap()).unwrap();
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let runs = [
        vec!["lemma-decompose", "--interval", "0.25,0.5", "--terms", "3"],
        vec!["verify-domination", "--dim", "1", "--type-vector", "1", "--resolutions", "5", "--trials", "2"],
        vec!["symbol-check", "--symbol", "mikhlin", "--samples", "40"],
        vec!["norm-scan", "--symbol", "riesz", "--resolutions", "5,6", "--trials", "3", "--p", "2", "--q", "2", "--r", "1"],
        vec!["stopping-trace", "--resolutions", "5", "--k-max", "1", "--p", "2", "--q", "2"],
    ];
    for args in runs {
        let a = polydisc(&args, dir.path());
        let b = polydisc(&args, dir.path());
        assert_eq!(a.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&a.stderr));
        assert!(!a.stdout.is_empty());
        assert_eq!(a.stdout, b.stdout, "{args:?}");
    }
}

#[test]
fn out_flag_writes_the_same_bytes_as_stdout() {
    let dir = tempfile::tempdir().unwrap();
    write_grid(&dir.path().join("f.csv"), 1, 6, 0.0);
    write_grid(&dir.path().join("g.csv"), 1, 6, 1.0);
    let args = ["apply-tm", "--symbol", "riesz", "--f", "f.csv", "--g", "g.csv"];
    let piped = polydisc(&args, dir.path());
    assert_eq!(piped.status.code(), Some(0), "{}", String::from_utf8_lossy(&piped.stderr));
    let mut with_out = args.to_vec();
    with_out.extend(["--out", "tm.csv"]);
    let written = polydisc(&with_out, dir.path());
    assert_eq!(written.status.code(), Some(0));
    assert!(written.stdout.is_empty());
    assert_eq!(std::fs::read(dir.path().join("tm.csv")).unwrap(), piped.stdout);
}

#[test]
fn hybrid_eval_reads_a_collection_file() {
    let dir = tempfile::tempdir().unwrap();
    write_grid(&dir.path().join("f.csv"), 2, 4, 0.5);
    std::fs::write(dir.path().join("rects.txt"), "-1:0,-1:1\n-2:3,-1:0\n").unwrap();
    let out = polydisc(&["hybrid-eval", "--pattern", "SS", "--input", "f.csv", "--collection", "rects.txt"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let grid = GridFunction::read_csv(out.stdout.as_slice()).unwrap();
    assert_eq!((grid.dim(), grid.len()), (2, 256));
}

#[test]
fn config_file_overrides_flags() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.json"), r#"{"terms": 2, "interval": "0.5,0.75"}"#).unwrap();
    let from_config = polydisc(&["lemma-decompose", "--terms", "5", "--config", "c.json"], dir.path());
    let from_flags = polydisc(&["lemma-decompose", "--terms", "2", "--interval", "0.5,0.75"], dir.path());
    assert_eq!(from_config.status.code(), Some(0), "{}", String::from_utf8_lossy(&from_config.stderr));
    assert_eq!(from_config.stdout, from_flags.stdout);
    // header plus rows k = 0..=2
    assert_eq!(String::from_utf8(from_config.stdout).unwrap().lines().count(), 4);
}

#[test]
fn invariant_breach_exits_with_one_and_still_writes() {
    let dir = tempfile::tempdir().unwrap();
    // two trials are too few for the SM ratio to settle between L = 4 and 5
    let args = ["norm-scan", "--pattern", "SM", "--resolutions", "4,5", "--trials", "2", "--p", "2", "--q", "2", "--r", "1"];
    let out = polydisc(&args, dir.path());
    assert_eq!(out.status.code(), Some(1));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["growth"].as_f64().unwrap() > 1.25);
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("wrong_kind.json"), r#"{"kind": "apply_tm"}"#).unwrap();
    std::fs::write(dir.path().join("unknown.json"), r#"{"bogus": 1}"#).unwrap();
    let cases: [&[&str]; 7] = [
        &["no-such-command"],
        &["lemma-decompose", "--resolutions", "1"],
        &["norm-scan", "--p", "0"],
        &["norm-scan", "--p", "2", "--q", "2", "--r", "2"],
        &["lemma-decompose", "--config", "wrong_kind.json"],
        &["lemma-decompose", "--config", "unknown.json"],
        &["hybrid-eval", "--pattern", "SS", "--input", "missing.csv"],
    ];
    for args in cases {
        let out = polydisc(args, dir.path());
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(out.stdout.is_empty(), "{args:?}");
        assert!(!out.stderr.is_empty(), "{args:?}");
    }
}

#[test]
fn help_exits_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let out = polydisc(&["--help"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8(out.stdout).unwrap().contains("stopping-trace"));
}
