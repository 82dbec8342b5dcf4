use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_stlfleet");

fn desk_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/desk.json")
}

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(BIN)
        .args(args)
        .arg("--out-dir")
        .arg(out)
        .output()
        .unwrap()
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Desk mission with some fields replaced, written to `dir`.
fn variant(dir: &Path, edit: impl FnOnce(&mut Value)) -> PathBuf {
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(desk_path()).unwrap()).unwrap();
    edit(&mut v);
    let path = dir.join("mission.json");
    std::fs::write(&path, v.to_string()).unwrap();
    path
}

#[test]
fn help_exits_zero() {
    let out = Command::new(BIN).arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for cmd in ["plan", "replay", "monitor", "route"] {
        assert!(text.contains(cmd), "{text}");
    }
}

#[test]
fn plan_then_monitor_then_replay_without_events() {
    let tmp = tempfile::tempdir().unwrap();
    let desk = desk_path();
    let desk = desk.to_str().unwrap();

    let plan_dir = tmp.path().join("plan");
    let out = run(&["plan", desk], &plan_dir);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["route.json", "trajectory.csv", "report.json", "plot.dat"] {
        assert!(plan_dir.join(f).is_file(), "{f} missing");
    }
    let report = json(plan_dir.join("report.json"));
    assert_eq!(report["certified"], true);
    assert!(report["robustness"]["exact"].as_f64().unwrap() >= 0.1);

    let traj = plan_dir.join("trajectory.csv");
    let mon_dir = tmp.path().join("monitor");
    let out = run(&["monitor", desk, traj.to_str().unwrap()], &mon_dir);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let mon = json(mon_dir.join("monitor_report.json"));
    assert_eq!(mon["robustness"]["exact"], report["robustness"]["exact"]);

    // no events: the executed trace is the plan
    let rep_dir = tmp.path().join("replay");
    let out = run(&["replay", desk], &rep_dir);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        std::fs::read(rep_dir.join("trace.csv")).unwrap(),
        std::fs::read(&traj).unwrap()
    );
}

#[test]
fn short_horizon_is_best_effort_with_a_binding_clause() {
    let tmp = tempfile::tempdir().unwrap();
    let mission = variant(tmp.path(), |v| v["horizon"] = Value::from(20.0));
    let dir = tmp.path().join("out");
    let out = run(&["plan", mission.to_str().unwrap(), "--starts", "2"], &dir);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("binding clause"), "{stdout}");
    let report = json(dir.join("report.json"));
    assert_eq!(report["certified"], false);
    assert!(report["required_horizon"].as_f64().unwrap() > 20.0);
    assert!(report["robustness"]["binding"].is_string());
}

#[test]
fn input_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let desk = desk_path();
    let dir = tmp.path().join("out");

    let events = tmp.path().join("late.csv");
    std::fs::write(&events, "step,vehicle,mode\n999,0,total-loss\n").unwrap();
    let out = run(&["replay", desk.to_str().unwrap(), "--events", events.to_str().unwrap()], &dir);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("999"));

    let garbled = tmp.path().join("garbled.csv");
    std::fs::write(&garbled, "step,vehicle,mode\nsoon,0,total-loss\n").unwrap();
    let out = run(&["replay", desk.to_str().unwrap(), "--events", garbled.to_str().unwrap()], &dir);
    assert_eq!(out.status.code(), Some(1));

    let mission = variant(tmp.path(), |v| {
        v["colour"] = Value::from("red");
        v.as_object_mut().unwrap().remove("separation");
    });
    let out = run(&["plan", mission.to_str().unwrap()], &dir);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("colour") && stderr.contains("separation"), "{stderr}");

    let out = run(&["plan", tmp.path().join("absent.json").to_str().unwrap()], &dir);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn route_writes_the_solution() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("out");
    let out = run(&["route", desk_path().to_str().unwrap()], &dir);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let route = json(dir.join("route.json"));
    assert_eq!(route["status"], "optimal");
    assert!((route["objective"].as_f64().unwrap() - 70.541712).abs() < 1e-6);
}
