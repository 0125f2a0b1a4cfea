//! End-to-end runs of the `sgv` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sgv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sgv")).args(args).output().unwrap()
}

fn synth_small(dir: &Path) {
    let world = dir.join("world.conf");
    fs::write(&world, "num_places = 30\nnum_queries = 5\n").unwrap();
    let out = sgv(&["synth", "--config", world.to_str().unwrap(), "--out", dir.join("data").to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn synth_run_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    synth_small(dir.path());
    let conf = dir.path().join("run.conf");
    fs::write(&conf, "manifest = data/manifest.txt\nout = results.jsonl\nstrategy = sgv\nn_topk = 10\n").unwrap();

    let run = sgv(&["run", "--config", conf.to_str().unwrap(), "--threads", "2"]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let results = dir.path().join("results.jsonl");
    assert!(results.is_file());

    let report = sgv(&["report", results.to_str().unwrap()]);
    assert!(report.status.success());
    let text = String::from_utf8_lossy(&report.stdout);
    assert!(text.contains("re-ranked") && text.contains("pose: success"), "{text}");

    let bench = sgv(&[
        "bench",
        "--config",
        conf.to_str().unwrap(),
        "--strategy",
        "sgv,none",
        "--n-topk",
        "2,5",
        "--out",
        dir.path().join("bench.jsonl").to_str().unwrap(),
    ]);
    assert!(bench.status.success(), "{}", String::from_utf8_lossy(&bench.stderr));
    assert_eq!(fs::read_to_string(dir.path().join("bench.jsonl")).unwrap().lines().count(), 5);
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = sgv(&["run", "--config", dir.path().join("nope.conf").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(1));

    let conf = dir.path().join("bad.conf");
    fs::write(&conf, "manifest = m.txt\nfrobnicate = 3\n").unwrap();
    let unknown = sgv(&["run", "--config", conf.to_str().unwrap()]);
    assert_eq!(unknown.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("line 2"));

    assert_eq!(sgv(&["run", "--config", "x", "--strategy", "bogus"]).status.code(), Some(1));
}

#[test]
fn data_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("run.conf");
    fs::write(dir.path().join("manifest.txt"), "db a scans/a.sgv\n").unwrap();
    fs::write(&conf, "manifest = manifest.txt\n").unwrap();
    assert_eq!(sgv(&["run", "--config", conf.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(sgv(&["report", dir.path().join("absent.jsonl").to_str().unwrap()]).status.code(), Some(2));
}
