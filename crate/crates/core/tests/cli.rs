//! End-to-end runs of the `active-irs` binary: exit codes and outputs.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use active_irs::experiments::ResultTable;
use active_irs::ia::ConvergenceTrace;

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_active-irs"))
        .args(args)
        .output()
        .expect("spawn active-irs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

const TINY: &str = "\
scenario = tiny
sweep = sinr_req
values = 2
drops = 1
schemes = proposed, baseline1, baseline2
irs_elements = 4
seed = 5
";

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(code(&cli(&[])), 1);
    assert_eq!(code(&cli(&["frobnicate"])), 1);
    assert_eq!(code(&cli(&["sweep"])), 1);
    assert_eq!(code(&cli(&["sweep", "--config", "x", "--sinr-units", "neper"])), 1);
    assert_eq!(code(&cli(&["--help"])), 0);
}

#[test]
fn bad_config_contents_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = write(dir.path(), "u.conf", &format!("{TINY}colour = blue\n"));
    let o = cli(&["sweep", "--config", &unknown]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("colour"));
    let garbled = write(dir.path(), "g.conf", "sweep sinr_req\n");
    assert_eq!(code(&cli(&["sweep", "--config", &garbled])), 1);
    let bad_value = write(dir.path(), "b.conf", &TINY.replace("drops = 1", "drops = many"));
    assert_eq!(code(&cli(&["sweep", "--config", &bad_value])), 1);
}

#[test]
fn io_failures_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&cli(&["sweep", "--config", "/nonexistent/x.conf"])), 2);
    let cfg = write(dir.path(), "t.conf", TINY);
    let o = cli(&["sweep", "--config", &cfg, "--out", "/nonexistent/dir/out.csv"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn sweep_writes_table_and_sidecars_independent_of_workers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "t.conf", TINY);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let o = cli(&["sweep", "--config", &cfg, "--out", a.to_str().unwrap(), "--workers", "1"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = cli(&["sweep", "--config", &cfg, "--out", b.to_str().unwrap(), "--workers", "3"]);
    assert_eq!(code(&o), 0);
    let (ta, tb) = (fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(ta, tb);
    let table = ResultTable::read_csv(ta.as_slice()).unwrap();
    assert_eq!(table.rows.len(), 3);
    assert!(table.rows.iter().all(|r| r.value == 2.0 && r.seed != 5));
    assert!(dir.path().join("a.summary.csv").exists());
    assert!(dir.path().join("a.timing.csv").exists());
    // summary goes to stdout too
    assert!(String::from_utf8_lossy(&o.stdout).contains("proposed"));
}

#[test]
fn seed_flag_changes_the_draws() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "t.conf", &TINY.replace("proposed, ", ""));
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    assert_eq!(code(&cli(&["sweep", "--config", &cfg, "--out", a.to_str().unwrap()])), 0);
    assert_eq!(
        code(&cli(&["sweep", "--config", &cfg, "--out", b.to_str().unwrap(), "--seed", "6"])),
        0
    );
    assert_ne!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn single_prints_report_and_writes_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.conf", "irs_elements = 4\nsinr_req = 2\n");
    let trace = dir.path().join("trace.csv");
    let dump = dir.path().join("sub.txt");
    let o = cli(&[
        "single",
        "--config",
        &cfg,
        "--out",
        trace.to_str().unwrap(),
        "--dump-conic",
        dump.to_str().unwrap(),
        "--seed",
        "3",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(out.contains("baseline1") && out.contains("proposed") && out.contains("feasible true"));
    let text = fs::read_to_string(&trace).unwrap();
    assert_eq!(text.lines().next().unwrap(), ConvergenceTrace::HEADER.join(","));
    assert!(text.lines().count() >= 3);
    assert!(fs::metadata(&dump).unwrap().len() > 0);
}

#[test]
fn linear_units_flag_overrides_file() {
    let dir = tempfile::tempdir().unwrap();
    // 2.5 linear is about 4 dB; read as dB it would be a different target
    let cfg = write(dir.path(), "s.conf", "irs_elements = 4\nsinr_req = 2.5\nsinr_units = db\n");
    let o = cli(&["single", "--config", &cfg, "--sinr-units", "linear"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("target 3.9794 dB"));
}
