use std::io::{Read, Write};

use super::{Trajectory, TrajectoryError, VehicleTrack};

/// First line of every trajectory file.
pub const CSV_MAGIC: &str = "# trajectory-csv v1";

pub const CSV_COLUMNS: [&str; 13] = [
    "vehicle", "step", "t", "px", "py", "pz", "vx", "vy", "vz", "ax", "ay", "az", "c",
];

fn csv_err(e: impl std::fmt::Display) -> TrajectoryError {
    TrajectoryError::Csv(e.to_string())
}

/// One row per vehicle and sample, ordered by vehicle then step. The last
/// sample of each vehicle carries zero acceleration.
pub fn write_csv<W: Write>(traj: &Trajectory, mut out: W) -> Result<(), TrajectoryError> {
    writeln!(out, "{CSV_MAGIC}").map_err(csv_err)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS).map_err(csv_err)?;
    for (d, track) in traj.vehicles.iter().enumerate() {
        for k in 0..track.position.len() {
            let p = track.position[k];
            let v = track.velocity[k];
            let a = track.acceleration.get(k).copied().unwrap_or([0.0; 3]);
            let t = k as f64 * traj.dt;
            let fields = [
                d.to_string(),
                k.to_string(),
                t.to_string(),
                p[0].to_string(),
                p[1].to_string(),
                p[2].to_string(),
                v[0].to_string(),
                v[1].to_string(),
                v[2].to_string(),
                a[0].to_string(),
                a[1].to_string(),
                a[2].to_string(),
                track.capacity[k].to_string(),
            ];
            w.write_record(&fields).map_err(csv_err)?;
        }
    }
    w.flush().map_err(csv_err)?;
    Ok(())
}

/// Parse a trajectory file written by [`write_csv`] sampled every `dt`.
pub fn read_csv<R: Read>(input: R, dt: f64) -> Result<Trajectory, TrajectoryError> {
    let mut text = String::new();
    let mut input = input;
    input.read_to_string(&mut text).map_err(csv_err)?;
    let Some(body) = text.strip_prefix(CSV_MAGIC) else {
        return Err(csv_err(format!("missing `{CSV_MAGIC}` header line")));
    };
    let mut r = csv::Reader::from_reader(body.trim_start_matches(['\r', '\n']).as_bytes());
    let header = r.headers().map_err(csv_err)?.clone();
    if header.iter().ne(CSV_COLUMNS) {
        return Err(csv_err(format!(
            "columns {:?}, expected {:?}",
            header.iter().collect::<Vec<_>>(),
            CSV_COLUMNS
        )));
    }
    let mut vehicles: Vec<VehicleTrack> = Vec::new();
    for (line, record) in r.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let row = line + 2;
        let num = |i: usize| -> Result<f64, TrajectoryError> {
            record[i]
                .parse::<f64>()
                .map_err(|e| csv_err(format!("row {row}, column {}: {e}", CSV_COLUMNS[i])))
        };
        let int = |i: usize| -> Result<usize, TrajectoryError> {
            record[i]
                .parse::<usize>()
                .map_err(|e| csv_err(format!("row {row}, column {}: {e}", CSV_COLUMNS[i])))
        };
        let d = int(0)?;
        let k = int(1)?;
        if d == vehicles.len() {
            vehicles.push(VehicleTrack {
                position: Vec::new(),
                velocity: Vec::new(),
                acceleration: Vec::new(),
                capacity: Vec::new(),
            });
        }
        if d + 1 != vehicles.len() || k != vehicles[d].position.len() {
            return Err(csv_err(format!(
                "row {row}: rows must be ordered by vehicle then step"
            )));
        }
        if (num(2)? - k as f64 * dt).abs() > 1e-9 * (1.0 + k as f64 * dt) {
            return Err(csv_err(format!("row {row}: time does not match step {k}")));
        }
        let track = &mut vehicles[d];
        track.position.push([num(3)?, num(4)?, num(5)?]);
        track.velocity.push([num(6)?, num(7)?, num(8)?]);
        track.acceleration.push([num(9)?, num(10)?, num(11)?]);
        track.capacity.push(int(12)? as u32);
    }
    if vehicles.is_empty() {
        return Err(csv_err("no samples"));
    }
    // tracks of lost vehicles end early, so lengths may differ
    for track in &mut vehicles {
        track.acceleration.pop();
    }
    Ok(Trajectory { dt, vehicles })
}
