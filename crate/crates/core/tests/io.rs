use serde_json::Value;
use stlfleet::io::{mission_to_json, parse_mission, IoError};
use stlfleet::mission::MissionSpec;
use stlfleet::plan::{plan, PlanOptions};
use stlfleet::trajectory::{read_csv, write_csv, CSV_COLUMNS, CSV_MAGIC};

const DESK: &str = include_str!("fixtures/desk.json");

fn desk() -> MissionSpec {
    parse_mission(DESK).unwrap().spec
}

#[test]
fn desk_fixture_loads() {
    let doc = parse_mission(DESK).unwrap();
    assert_eq!(doc.spec.vehicles.len(), 2);
    assert_eq!(doc.spec.targets.len(), 4);
    assert_eq!(doc.spec.obstacles.len(), 3);
    assert_eq!(doc.spec.steps(), 70);
    assert!(doc.events.is_empty());
}

#[test]
fn round_trip_is_field_identical() {
    let doc = parse_mission(DESK).unwrap();
    let text = mission_to_json(&doc).unwrap();
    let again = parse_mission(&text).unwrap();
    assert_eq!(again, doc);
    let a: Value = serde_json::from_str(DESK).unwrap();
    let b: Value = serde_json::from_str(&text).unwrap();
    for (key, value) in a.as_object().unwrap() {
        assert_eq!(Some(value), b.get(key), "{key}");
    }
}

#[test]
fn target_outside_the_workspace_is_named() {
    let mut v: Value = serde_json::from_str(DESK).unwrap();
    v["targets"][2] = serde_json::json!({"lower": [40.0, 0.0, 9.0], "upper": [42.0, 2.0, 11.0]});
    match parse_mission(&v.to_string()) {
        Err(IoError::Invalid(errs)) => {
            assert!(errs.iter().any(|e| e == "target 2 lies outside the workspace"), "{errs:?}")
        }
        other => panic!("expected a validation error, got {other:?}"),
    }
}

#[test]
fn malformed_json_is_rejected() {
    assert!(matches!(parse_mission("{\"version\": 1,"), Err(IoError::Json(_))));
    assert!(matches!(parse_mission("[1, 2]"), Err(IoError::Schema(_))));
}

#[test]
fn trajectory_csv_layout_is_pinned() {
    let spec = desk();
    let p = plan(&spec, &PlanOptions::default()).unwrap();
    let mut buf = Vec::new();
    write_csv(p.trajectory(), &mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(CSV_MAGIC));
    assert_eq!(lines.next(), Some(CSV_COLUMNS.join(",").as_str()));
    assert_eq!(
        CSV_COLUMNS.join(","),
        "vehicle,step,t,px,py,pz,vx,vy,vz,ax,ay,az,c"
    );
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(&first[..3], ["0", "0", "0"]);
    assert_eq!(text.lines().count(), 2 + 2 * (spec.steps() + 1));

    let back = read_csv(buf.as_slice(), spec.sampling_period).unwrap();
    assert_eq!(&back, p.trajectory());
}
