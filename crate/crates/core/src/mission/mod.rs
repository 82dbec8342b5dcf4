//! Declarative mission scenarios and their compilation into STL.

mod compile;

pub use compile::{
    box_membership_predicates, capacity_channel, compile, compile_with_last_targets,
    obstacle_avoidance, position_channels, separation_formula, velocity_channels, Binding,
    Clause, ClauseKind, CompiledMission, SymbolEntry,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Slack used when converting durations to step counts.
const STEP_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MissionError {
    #[error("invalid mission:\n  - {}", .0.join("\n  - "))]
    Invalid(Vec<String>),
}

/// Axis-aligned box, open on every face.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Box3 {
    pub lower: [f64; 3],
    pub upper: [f64; 3],
}

impl Box3 {
    pub fn new(lower: [f64; 3], upper: [f64; 3]) -> Self {
        Self { lower, upper }
    }

    /// Box of half-width `half` centred on `center`.
    pub fn around(center: [f64; 3], half: f64) -> Self {
        Self {
            lower: center.map(|c| c - half),
            upper: center.map(|c| c + half),
        }
    }

    pub fn is_valid(&self) -> bool {
        (0..3).all(|j| {
            self.lower[j].is_finite() && self.upper[j].is_finite() && self.lower[j] < self.upper[j]
        })
    }

    pub fn centroid(&self) -> [f64; 3] {
        [0, 1, 2].map(|j| 0.5 * (self.lower[j] + self.upper[j]))
    }

    pub fn extent(&self) -> [f64; 3] {
        [0, 1, 2].map(|j| self.upper[j] - self.lower[j])
    }

    /// Signed membership margin: positive strictly inside, min over the six faces.
    pub fn margin(&self, p: &[f64; 3]) -> f64 {
        (0..3)
            .map(|j| (p[j] - self.lower[j]).min(self.upper[j] - p[j]))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, p: &[f64; 3]) -> bool {
        self.margin(p) > 0.0
    }

    /// Open boxes share interior points.
    pub fn intersects(&self, other: &Box3) -> bool {
        (0..3).all(|j| self.lower[j] < other.upper[j] && other.lower[j] < self.upper[j])
    }

    pub fn within(&self, outer: &Box3) -> bool {
        (0..3).all(|j| self.lower[j] >= outer.lower[j] && self.upper[j] <= outer.upper[j])
    }

    pub fn longest_axis(&self) -> usize {
        let e = self.extent();
        let mut best = 0;
        for j in 1..3 {
            if e[j] > e[best] {
                best = j;
            }
        }
        best
    }
}

pub fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleSpec {
    /// Index into `MissionSpec::depots`.
    pub depot: usize,
    /// Magazine size in diverters.
    pub capacity: u32,
    /// m/s, per world axis.
    pub velocity_min: [f64; 3],
    pub velocity_max: [f64; 3],
    /// m/s^2, per world axis.
    pub acceleration_min: [f64; 3],
    pub acceleration_max: [f64; 3],
    /// Explicit home region; when absent the nearest refilling station is used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub home: Option<Box3>,
    /// Start position; defaults to the depot centroid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_position: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_velocity: Option<[f64; 3]>,
    /// Diverters on board at the start; defaults to `capacity`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_capacity: Option<u32>,
}

/// Scenario description. Lengths in meters, durations in seconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MissionSpec {
    pub workspace: Box3,
    #[serde(default)]
    pub obstacles: Vec<Box3>,
    #[serde(default)]
    pub targets: Vec<Box3>,
    #[serde(default)]
    pub stations: Vec<Box3>,
    pub depots: Vec<Box3>,
    pub vehicles: Vec<VehicleSpec>,
    /// Mission horizon T_N.
    pub horizon: f64,
    /// Installation dwell inside a target.
    pub install_dwell: f64,
    /// Refill dwell inside a station.
    pub refill_dwell: f64,
    /// Minimum pairwise vehicle distance.
    pub separation: f64,
    pub sampling_period: f64,
    /// Required exact robustness for a plan to count as certified.
    pub robustness_margin: f64,
}

impl MissionSpec {
    /// Number of sampling intervals N; signals carry N + 1 samples.
    pub fn steps(&self) -> usize {
        floor_steps(self.horizon, self.sampling_period)
    }

    /// Installation window length in steps (rounded toward the interior).
    pub fn install_steps(&self) -> usize {
        floor_steps(self.install_dwell, self.sampling_period)
    }

    pub fn refill_steps(&self) -> usize {
        floor_steps(self.refill_dwell, self.sampling_period)
    }

    /// Steps a schedule holds inside a target so the full dwell elapses.
    pub fn install_hold_steps(&self) -> usize {
        ceil_steps(self.install_dwell, self.sampling_period).max(self.install_steps())
    }

    pub fn refill_hold_steps(&self) -> usize {
        ceil_steps(self.refill_dwell, self.sampling_period).max(self.refill_steps())
    }

    /// Fleet magazine size (the fleet is homogeneous).
    pub fn capacity(&self) -> u32 {
        self.vehicles.first().map_or(1, |v| v.capacity)
    }

    pub fn initial_position(&self, d: usize) -> [f64; 3] {
        let v = &self.vehicles[d];
        v.initial_position
            .unwrap_or_else(|| self.depots[v.depot].centroid())
    }

    pub fn initial_velocity(&self, d: usize) -> [f64; 3] {
        self.vehicles[d].initial_velocity.unwrap_or([0.0; 3])
    }

    pub fn initial_capacity(&self, d: usize) -> u32 {
        let v = &self.vehicles[d];
        v.initial_capacity.unwrap_or(v.capacity)
    }

    /// Station whose centroid is closest to `point` (lowest index on ties).
    pub fn nearest_station(&self, point: &[f64; 3]) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, s) in self.stations.iter().enumerate() {
            let d = distance(point, &s.centroid());
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((i, d));
            }
        }
        best.map(|(i, _)| i)
    }

    /// Parking point for vehicle `d` inside station `s`: stations are split
    /// into evenly spaced slots along their longest axis so vehicles sharing
    /// a station do not collide.
    pub fn station_slot(&self, s: usize, d: usize) -> [f64; 3] {
        let b = &self.stations[s];
        let mut p = b.centroid();
        let axis = b.longest_axis();
        let n = self.vehicles.len() as f64;
        p[axis] = b.lower[axis] + (d as f64 + 1.0) / (n + 1.0) * b.extent()[axis];
        p
    }

    /// Check every invariant and report all violations at once.
    pub fn validate(&self) -> Result<(), MissionError> {
        let mut errs = Vec::new();
        let positive = |x: f64| x > 0.0 && x.is_finite();
        if !positive(self.sampling_period) {
            errs.push(format!(
                "sampling_period must be positive, got {}",
                self.sampling_period
            ));
        }
        if !positive(self.horizon) {
            errs.push(format!("horizon must be positive, got {}", self.horizon));
        }
        if !(self.install_dwell >= 0.0 && self.install_dwell < self.horizon) {
            errs.push(format!(
                "install_dwell {} must lie in [0, horizon)",
                self.install_dwell
            ));
        }
        if !(self.refill_dwell >= 0.0 && self.refill_dwell < self.horizon) {
            errs.push(format!(
                "refill_dwell {} must lie in [0, horizon)",
                self.refill_dwell
            ));
        }
        if !positive(self.separation) {
            errs.push(format!("separation must be positive, got {}", self.separation));
        }
        if !(self.robustness_margin >= 0.0 && self.robustness_margin.is_finite()) {
            errs.push(format!(
                "robustness_margin must be non-negative, got {}",
                self.robustness_margin
            ));
        }
        if errs.is_empty() && self.steps() == 0 {
            errs.push("horizon is shorter than one sampling period".into());
        }

        if !self.workspace.is_valid() {
            errs.push("workspace bounds are not strictly increasing".into());
        }
        let groups: [(&str, &Vec<Box3>); 4] = [
            ("obstacle", &self.obstacles),
            ("target", &self.targets),
            ("station", &self.stations),
            ("depot", &self.depots),
        ];
        for (name, boxes) in groups {
            for (i, b) in boxes.iter().enumerate() {
                if !b.is_valid() {
                    errs.push(format!("{name} {i} bounds are not strictly increasing"));
                } else if !b.within(&self.workspace) {
                    errs.push(format!("{name} {i} lies outside the workspace"));
                }
            }
        }
        for (i, t) in self.targets.iter().enumerate() {
            for (q, o) in self.obstacles.iter().enumerate() {
                if t.intersects(o) {
                    errs.push(format!("target {i} intersects obstacle {q}"));
                }
            }
            for (j, u) in self.targets.iter().enumerate().skip(i + 1) {
                if t.intersects(u) {
                    errs.push(format!("targets {i} and {j} overlap"));
                }
            }
        }

        if self.vehicles.is_empty() {
            errs.push("fleet is empty".into());
        }
        let cap = self.capacity();
        for (d, v) in self.vehicles.iter().enumerate() {
            if v.depot >= self.depots.len() {
                errs.push(format!(
                    "vehicle {d} references depot {} but only {} are declared",
                    v.depot,
                    self.depots.len()
                ));
            }
            if v.capacity < 1 {
                errs.push(format!("vehicle {d} capacity must be at least 1"));
            }
            if v.capacity != cap {
                errs.push(format!(
                    "vehicle {d} capacity {} differs from fleet capacity {cap}; heterogeneous fleets are unsupported",
                    v.capacity
                ));
            }
            if let Some(c0) = v.initial_capacity {
                if c0 > v.capacity {
                    errs.push(format!(
                        "vehicle {d} initial_capacity {c0} exceeds capacity {}",
                        v.capacity
                    ));
                }
            }
            for j in 0..3 {
                if !(v.velocity_min[j] < 0.0 && v.velocity_max[j] > 0.0) {
                    errs.push(format!(
                        "vehicle {d} velocity bounds on axis {j} must straddle zero"
                    ));
                }
                if !(v.acceleration_min[j] < 0.0 && v.acceleration_max[j] > 0.0) {
                    errs.push(format!(
                        "vehicle {d} acceleration bounds on axis {j} must straddle zero"
                    ));
                }
            }
            if let Some(h) = &v.home {
                if !h.is_valid() {
                    errs.push(format!("vehicle {d} home bounds are not strictly increasing"));
                } else if !h.within(&self.workspace) {
                    errs.push(format!("vehicle {d} home lies outside the workspace"));
                }
            }
            if let Some(p) = v.initial_position {
                if !self.workspace.contains(&p) {
                    errs.push(format!("vehicle {d} initial_position lies outside the workspace"));
                }
            }
            if let Some(vel) = v.initial_velocity {
                if vel.iter().any(|x| !x.is_finite()) {
                    errs.push(format!("vehicle {d} initial_velocity is not finite"));
                }
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(MissionError::Invalid(errs))
        }
    }
}

pub(crate) fn floor_steps(duration: f64, dt: f64) -> usize {
    (duration / dt + STEP_EPS).floor().max(0.0) as usize
}

pub(crate) fn ceil_steps(duration: f64, dt: f64) -> usize {
    (duration / dt - STEP_EPS).ceil().max(0.0) as usize
}
