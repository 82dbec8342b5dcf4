//! File formats: mission JSON, failure-event CSV, JSON reports and gnuplot data.

use std::fmt::Write as _;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};
use thiserror::Error;

use crate::mission::MissionSpec;
use crate::replan::{FailureEvent, FailureMode};
use crate::trajectory::{CertifyReport, OptimizerParams, Trajectory};

pub const MISSION_VERSION: u64 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("mission file is not valid JSON: {0}")]
    Json(String),
    #[error("mission file does not match the schema:\n  - {}", .0.join("\n  - "))]
    Schema(Vec<String>),
    #[error("invalid mission:\n  - {}", .0.join("\n  - "))]
    Invalid(Vec<String>),
    #[error("events file: {0}")]
    Events(String),
    #[error("serialization: {0}")]
    Serialize(String),
}

/// Parsed mission file.
#[derive(Clone, Debug, PartialEq)]
pub struct MissionDocument {
    pub spec: MissionSpec,
    pub optimizer: Option<OptimizerParams>,
    pub events: Vec<FailureEvent>,
}

const REQUIRED: [&str; 9] = [
    "version",
    "workspace",
    "depots",
    "vehicles",
    "horizon",
    "install_dwell",
    "refill_dwell",
    "separation",
    "sampling_period",
];
const OPTIONAL: [&str; 6] = [
    "obstacles",
    "targets",
    "stations",
    "robustness_margin",
    "optimizer",
    "events",
];

fn take<T: DeserializeOwned>(obj: &Map<String, Value>, key: &str, errs: &mut Vec<String>) -> Option<T> {
    let v = obj.get(key)?;
    match serde_json::from_value(v.clone()) {
        Ok(x) => Some(x),
        Err(e) => {
            errs.push(format!("`{key}`: {e}"));
            None
        }
    }
}

/// Arrays are checked element by element so each bad entry is reported.
fn take_list<T: DeserializeOwned>(obj: &Map<String, Value>, key: &str, errs: &mut Vec<String>) {
    match obj.get(key) {
        Some(Value::Array(items)) => {
            for (i, item) in items.iter().enumerate() {
                if let Err(e) = serde_json::from_value::<T>(item.clone()) {
                    errs.push(format!("`{key}[{i}]`: {e}"));
                }
            }
        }
        Some(_) => errs.push(format!("`{key}`: expected an array")),
        None => {}
    }
}

fn schema_errors(obj: &Map<String, Value>) -> Vec<String> {
    let mut errs = Vec::new();
    for key in obj.keys() {
        if !REQUIRED.contains(&key.as_str()) && !OPTIONAL.contains(&key.as_str()) {
            errs.push(format!("unknown field `{key}`"));
        }
    }
    for key in REQUIRED {
        if !obj.contains_key(key) {
            errs.push(format!("missing field `{key}`"));
        }
    }
    if let Some(v) = take::<u64>(obj, "version", &mut errs) {
        if v != MISSION_VERSION {
            errs.push(format!("`version`: unsupported version {v}, expected {MISSION_VERSION}"));
        }
    }
    take::<crate::mission::Box3>(obj, "workspace", &mut errs);
    for key in ["obstacles", "targets", "stations", "depots"] {
        take_list::<crate::mission::Box3>(obj, key, &mut errs);
    }
    take_list::<crate::mission::VehicleSpec>(obj, "vehicles", &mut errs);
    take_list::<FailureEvent>(obj, "events", &mut errs);
    for key in [
        "horizon",
        "install_dwell",
        "refill_dwell",
        "separation",
        "sampling_period",
        "robustness_margin",
    ] {
        take::<f64>(obj, key, &mut errs);
    }
    take::<OptimizerParams>(obj, "optimizer", &mut errs);
    errs
}

/// Parse and validate a mission file, reporting every problem found.
pub fn parse_mission(text: &str) -> Result<MissionDocument, IoError> {
    let value: Value = serde_json::from_str(text).map_err(|e| IoError::Json(e.to_string()))?;
    let Value::Object(mut obj) = value else {
        return Err(IoError::Schema(vec!["top level must be an object".into()]));
    };
    let errs = schema_errors(&obj);
    if !errs.is_empty() {
        return Err(IoError::Schema(errs));
    }
    obj.remove("version");
    let optimizer = obj
        .remove("optimizer")
        .map(serde_json::from_value::<OptimizerParams>)
        .transpose()
        .map_err(|e| IoError::Schema(vec![e.to_string()]))?;
    let events = obj
        .remove("events")
        .map(serde_json::from_value::<Vec<FailureEvent>>)
        .transpose()
        .map_err(|e| IoError::Schema(vec![e.to_string()]))?
        .unwrap_or_default();
    let spec: MissionSpec =
        serde_json::from_value(Value::Object(obj)).map_err(|e| IoError::Schema(vec![e.to_string()]))?;

    let mut invalid = Vec::new();
    if let Err(crate::mission::MissionError::Invalid(e)) = spec.validate() {
        invalid.extend(e);
    }
    if let Some(p) = &optimizer {
        if let Err(e) = p.validate() {
            invalid.push(e.to_string());
        }
    }
    if let Err(e) = check_events(&events, &spec) {
        invalid.extend(e);
    }
    if !invalid.is_empty() {
        return Err(IoError::Invalid(invalid));
    }
    Ok(MissionDocument {
        spec,
        optimizer,
        events,
    })
}

/// Events must name existing vehicles and fall inside the horizon.
pub fn check_events(events: &[FailureEvent], spec: &MissionSpec) -> Result<(), Vec<String>> {
    let steps = spec.steps();
    let mut errs = Vec::new();
    for (i, e) in events.iter().enumerate() {
        if e.vehicle >= spec.vehicles.len() {
            errs.push(format!(
                "event {i}: vehicle {} does not exist (fleet of {})",
                e.vehicle,
                spec.vehicles.len()
            ));
        }
        if e.step >= steps {
            errs.push(format!("event {i}: step {} is not before the horizon ({steps} steps)", e.step));
        }
    }
    if errs.is_empty() {
        Ok(())
    } else {
        Err(errs)
    }
}

#[derive(Serialize)]
struct MissionOut<'a> {
    version: u64,
    #[serde(flatten)]
    spec: &'a MissionSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    optimizer: Option<&'a OptimizerParams>,
    #[serde(skip_serializing_if = "<[_]>::is_empty")]
    events: &'a [FailureEvent],
}

pub fn mission_to_json(doc: &MissionDocument) -> Result<String, IoError> {
    to_json(&MissionOut {
        version: MISSION_VERSION,
        spec: &doc.spec,
        optimizer: doc.optimizer.as_ref(),
        events: &doc.events,
    })
}

/// Pretty JSON with a trailing newline. Field order follows the types, so
/// equal values always give identical bytes.
pub fn to_json<T: Serialize>(value: &T) -> Result<String, IoError> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| IoError::Serialize(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub const EVENTS_HEADER: [&str; 3] = ["step", "vehicle", "mode"];

/// `step,vehicle,mode` rows; blank lines and `#` comments are skipped.
pub fn read_events_csv(text: &str) -> Result<Vec<FailureEvent>, IoError> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| IoError::Events(e.to_string()))?.clone();
    if header.iter().ne(EVENTS_HEADER) {
        return Err(IoError::Events(format!(
            "header {:?}, expected {:?}",
            header.iter().collect::<Vec<_>>(),
            EVENTS_HEADER
        )));
    }
    let mut out = Vec::new();
    for record in r.records() {
        let record = record.map_err(|e| IoError::Events(e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        let bad = |what: &str, e: String| IoError::Events(format!("line {line}, {what}: {e}"));
        if record.len() != 3 {
            return Err(bad("row", format!("{} fields, expected 3", record.len())));
        }
        let step = record[0].parse().map_err(|e: std::num::ParseIntError| bad("step", e.to_string()))?;
        let vehicle = record[1].parse().map_err(|e: std::num::ParseIntError| bad("vehicle", e.to_string()))?;
        let mode: FailureMode = record[2].parse().map_err(|e| bad("mode", e))?;
        out.push(FailureEvent { step, vehicle, mode });
    }
    Ok(out)
}

pub fn write_events_csv(events: &[FailureEvent]) -> String {
    let mut s = EVENTS_HEADER.join(",");
    s.push('\n');
    for e in events {
        let _ = writeln!(s, "{},{},{}", e.step, e.vehicle, e.mode.name());
    }
    s
}

/// Gnuplot data with three indexed blocks: positions per vehicle, pairwise
/// distances, and per-clause robustness. Missing samples are `NaN`.
pub fn plot_data(traj: &Trajectory, report: Option<&CertifyReport>) -> String {
    let n = traj.steps();
    let fleet = traj.vehicles.len();
    let mut s = String::new();

    s.push_str("# index 0: positions\n# t");
    for d in 0..fleet {
        let _ = write!(s, " x{d} y{d} z{d}");
    }
    s.push('\n');
    for k in 0..=n {
        let _ = write!(s, "{}", k as f64 * traj.dt);
        for track in &traj.vehicles {
            match track.position.get(k) {
                Some(p) => {
                    let _ = write!(s, " {} {} {}", p[0], p[1], p[2]);
                }
                None => s.push_str(" NaN NaN NaN"),
            }
        }
        s.push('\n');
    }

    s.push_str("\n\n# index 1: pairwise distances\n# t");
    for a in 0..fleet {
        for b in a + 1..fleet {
            let _ = write!(s, " d{a}_{b}");
        }
    }
    s.push('\n');
    for k in 0..=n {
        let _ = write!(s, "{}", k as f64 * traj.dt);
        for a in 0..fleet {
            for b in a + 1..fleet {
                match (traj.vehicles[a].position.get(k), traj.vehicles[b].position.get(k)) {
                    (Some(p), Some(q)) => {
                        let _ = write!(s, " {}", crate::mission::distance(p, q));
                    }
                    _ => s.push_str(" NaN"),
                }
            }
        }
        s.push('\n');
    }

    s.push_str("\n\n# index 2: robustness by clause\n# clause exact smooth label\n");
    if let Some(rep) = report {
        for (i, c) in rep.clauses.iter().enumerate() {
            let _ = writeln!(s, "{i} {} {} \"{}\"", c.exact, c.smooth, c.label);
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mission::fixtures::*;

    fn doc() -> MissionDocument {
        MissionDocument {
            spec: line_spec(),
            optimizer: Some(OptimizerParams {
                starts: 2,
                ..Default::default()
            }),
            events: vec![FailureEvent {
                step: 4,
                vehicle: 0,
                mode: FailureMode::TotalLoss,
            }],
        }
    }

    #[test]
    fn mission_round_trip() {
        let d = doc();
        let text = mission_to_json(&d).unwrap();
        assert!(text.contains("\"version\": 1"));
        assert!(text.contains("\"total-loss\""));
        assert_eq!(parse_mission(&text).unwrap(), d);
        assert_eq!(mission_to_json(&parse_mission(&text).unwrap()).unwrap(), text);
    }

    #[test]
    fn schema_errors_are_all_reported() {
        let mut v: Value = serde_json::from_str(&mission_to_json(&doc()).unwrap()).unwrap();
        let obj = v.as_object_mut().unwrap();
        obj.insert("colour".into(), Value::from("red"));
        obj.remove("horizon");
        obj.insert("version".into(), Value::from(2));
        obj["vehicles"][0]["speed"] = Value::from(3);
        let Err(IoError::Schema(errs)) = parse_mission(&v.to_string()) else {
            panic!("expected schema errors");
        };
        assert_eq!(errs.len(), 4, "{errs:?}");
        assert!(errs.iter().any(|e| e.contains("colour")));
        assert!(errs.iter().any(|e| e.contains("missing field `horizon`")));
        assert!(errs.iter().any(|e| e.contains("version 2")));
        assert!(errs.iter().any(|e| e.contains("vehicles[0]")));
    }

    #[test]
    fn validation_errors_are_all_reported() {
        let mut d = doc();
        d.spec.sampling_period = -1.0;
        d.spec.targets.push(d.spec.targets[0]);
        d.events[0].vehicle = 3;
        let text = mission_to_json(&d).unwrap();
        let Err(IoError::Invalid(errs)) = parse_mission(&text) else {
            panic!("expected validation errors");
        };
        assert!(errs.iter().any(|e| e.contains("sampling_period")));
        assert!(errs.iter().any(|e| e.contains("overlap")));
        assert!(errs.iter().any(|e| e.contains("vehicle 3")));
    }

    #[test]
    fn events_csv_round_trip() {
        let events = doc().events;
        let text = write_events_csv(&events);
        assert_eq!(text, "step,vehicle,mode\n4,0,total-loss\n");
        assert_eq!(read_events_csv(&text).unwrap(), events);
        assert!(read_events_csv("step,vehicle,mode\n1,0,melted\n").is_err());
        assert!(read_events_csv("when,who\n1,0\n").is_err());
    }

    #[test]
    fn plot_blocks() {
        let spec = line_spec();
        let traj = crate::trajectory::propagate(&spec, vec![vec![[0.0; 3]; spec.steps()]]).unwrap();
        let text = plot_data(&traj, None);
        assert_eq!(text.matches("\n\n\n# index").count(), 2);
        assert!(text.starts_with("# index 0: positions\n# t x0 y0 z0\n0 0 0 5\n"));
    }
}
