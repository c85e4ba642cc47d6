use std::path::Path;
use std::process::{Command, Output};

fn wsnsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wsnsim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

const LINE: &str = "seed = 1\nstop_s = 2\nfield.width_m = 100\nfield.height_m = 10\n\
                    node = 0 0\nnode = 10 0\nnode = 20 0\nnode = 30 0\ndisk_range_m = 12\n";

#[test]
fn run_writes_outputs_and_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let scn = write(tmp.path(), "line.scn", LINE);
    let out = tmp.path().join("out");
    let o = wsnsim(&["run", "--scenario", &scn, "--out", out.to_str().unwrap()]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let trace = std::fs::read_to_string(out.join("trace.tsv")).unwrap();
    assert_eq!(trace.matches(" first pkt=").count(), 3);
    assert!(out.join("scalars.tsv").exists());
    assert!(out.join("scenario.effective").exists());
    assert!(String::from_utf8_lossy(&o.stdout).contains("events dispatched"));
}

#[test]
fn overrides_reach_the_effective_scenario() {
    let tmp = tempfile::tempdir().unwrap();
    let scn = write(tmp.path(), "line.scn", LINE);
    let out = tmp.path().join("out");
    let o = wsnsim(&[
        "run",
        "--scenario",
        &scn,
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "9",
        "--stop-at",
        "0.5",
        "--partitions",
        "2",
        "--log-filter",
        "nodes=0-1",
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let eff = std::fs::read_to_string(out.join("scenario.effective")).unwrap();
    for want in [
        "seed = 9",
        "stop_s = 0.5",
        "partitions = 2",
        "log.filter = nodes=0-1",
    ] {
        assert!(eff.lines().any(|l| l == want), "missing {want:?} in\n{eff}");
    }
    let trace = std::fs::read_to_string(out.join("trace.tsv")).unwrap();
    assert!(trace.lines().all(|l| {
        let node = l.split('\t').nth(2).unwrap();
        node == "0" || node == "1"
    }));
}

#[test]
fn check_validates_without_writing() {
    let tmp = tempfile::tempdir().unwrap();
    let scn = write(tmp.path(), "line.scn", LINE);
    let out = tmp.path().join("out");
    let o = wsnsim(&[
        "run",
        "--scenario",
        &scn,
        "--check",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("ok (4 nodes"));
    assert!(!out.exists());
}

#[test]
fn bad_scenario_exits_one_with_line_number() {
    let tmp = tempfile::tempdir().unwrap();
    let scn = write(tmp.path(), "bad.scn", &format!("{LINE}warp.drive = 9\n"));
    let o = wsnsim(&["run", "--scenario", &scn, "--check"]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 10"), "{err}");
    assert!(err.contains("warp.drive"), "{err}");
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(wsnsim(&["run"]).status.code(), Some(1));
    assert_eq!(wsnsim(&["fly"]).status.code(), Some(1));
    assert_eq!(
        wsnsim(&["run", "--scenario", "/nonexistent/x.scn"])
            .status
            .code(),
        Some(1)
    );
    let tmp = tempfile::tempdir().unwrap();
    let scn = write(tmp.path(), "line.scn", LINE);
    let o = wsnsim(&[
        "run",
        "--scenario",
        &scn,
        "--log-filter",
        "kinds=bogus",
        "--check",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(wsnsim(&["--help"]).status.code(), Some(0));
}

#[test]
fn runtime_failure_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let scn = write(tmp.path(), "line.scn", LINE);
    // output path is an existing regular file
    let blocker = write(tmp.path(), "blocker", "");
    let o = wsnsim(&["run", "--scenario", &scn, "--out", &blocker]);
    assert_eq!(
        o.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
}
