//! Double-integrator trajectories, warm starts from route schedules, and
//! robustness-maximising refinement.

mod certify;
mod csv_io;
mod optimize;
mod warm;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mission::{
    capacity_channel, position_channels, velocity_channels, MissionError, MissionSpec,
};
use crate::routing::RoutingError;
use crate::stl::{Signal, StlError};

pub use certify::{certify, CertifyReport, ClauseRobustness};
pub use csv_io::{read_csv, write_csv, CSV_COLUMNS, CSV_MAGIC};
pub use optimize::{optimize, OptimizeResult, OptimizerParams, StartSummary};
pub use warm::warm_start;

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error(transparent)]
    Stl(#[from] StlError),
    #[error(transparent)]
    Mission(#[from] MissionError),
    #[error(transparent)]
    Routing(#[from] RoutingError),
    #[error("trajectory shape: {0}")]
    Shape(String),
    #[error("trajectory csv: {0}")]
    Csv(String),
    #[error("invalid optimizer parameters: {0}")]
    Params(String),
}

/// Sampled motion of one vehicle. Positions, velocities and capacities have
/// `N + 1` samples; accelerations act over the `N` intervals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleTrack {
    pub position: Vec<[f64; 3]>,
    pub velocity: Vec<[f64; 3]>,
    pub acceleration: Vec<[f64; 3]>,
    pub capacity: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub dt: f64,
    pub vehicles: Vec<VehicleTrack>,
}

/// Exact rollout of `p+ = p + v dt + a dt^2 / 2`, `v+ = v + a dt`.
pub fn rollout(
    p0: [f64; 3],
    v0: [f64; 3],
    accel: &[[f64; 3]],
    dt: f64,
) -> (Vec<[f64; 3]>, Vec<[f64; 3]>) {
    let mut pos = Vec::with_capacity(accel.len() + 1);
    let mut vel = Vec::with_capacity(accel.len() + 1);
    pos.push(p0);
    vel.push(v0);
    for a in accel {
        let (p, v) = step(pos.last().unwrap(), vel.last().unwrap(), a, dt);
        pos.push(p);
        vel.push(v);
    }
    (pos, vel)
}

#[inline]
pub(crate) fn step(p: &[f64; 3], v: &[f64; 3], a: &[f64; 3], dt: f64) -> ([f64; 3], [f64; 3]) {
    let mut pn = [0.0; 3];
    let mut vn = [0.0; 3];
    for j in 0..3 {
        pn[j] = p[j] + v[j] * dt + 0.5 * a[j] * dt * dt;
        vn[j] = v[j] + a[j] * dt;
    }
    (pn, vn)
}

/// Result of replaying the magazine rules along a position track.
#[derive(Clone, Debug, PartialEq)]
pub struct MagazineScan {
    /// Level at each sample.
    pub capacity: Vec<u32>,
    /// `(target, sample)` for every completed installation, where `sample`
    /// is the last dwell sample.
    pub installs: Vec<(usize, usize)>,
    /// Level after the last sample has been processed.
    pub final_level: u32,
}

/// Magazine level along a position track.
///
/// A visit to a target counts once `install_steps + 1` consecutive samples
/// lie strictly inside it with a non-empty magazine; the level drops on the
/// following sample. A station visit of `refill_steps + 1` samples refills
/// the magazine the same way. Each visit counts at most once.
pub fn derive_capacity(spec: &MissionSpec, positions: &[[f64; 3]], initial: u32) -> Vec<u32> {
    scan_magazine(spec, positions, initial).capacity
}

pub fn scan_magazine(spec: &MissionSpec, positions: &[[f64; 3]], initial: u32) -> MagazineScan {
    let need_install = spec.install_steps() + 1;
    let need_refill = spec.refill_steps() + 1;
    let full = spec.capacity();
    let region = |boxes: &[crate::mission::Box3], p: &[f64; 3]| boxes.iter().position(|b| b.contains(p));

    let mut level = initial;
    let mut out = Vec::with_capacity(positions.len());
    let mut installs = Vec::new();
    let (mut target, mut target_run, mut installed) = (None, 0usize, false);
    let (mut station, mut station_run, mut refilled) = (None, 0usize, false);
    for (k, p) in positions.iter().enumerate() {
        out.push(level);

        let here = region(&spec.targets, p);
        if here != target {
            target = here;
            target_run = 0;
            installed = false;
        }
        if target.is_some() && level > 0 {
            target_run += 1;
        } else {
            target_run = 0;
        }

        let here = region(&spec.stations, p);
        if here != station {
            station = here;
            station_run = 0;
            refilled = false;
        }
        if station.is_some() {
            station_run += 1;
        }

        if target_run >= need_install && !installed {
            installed = true;
            level -= 1;
            installs.push((target.unwrap(), k));
        }
        if station_run >= need_refill && !refilled {
            refilled = true;
            level = full;
        }
    }
    MagazineScan {
        capacity: out,
        installs,
        final_level: level,
    }
}

/// Last target each vehicle completed an installation in, if any.
pub fn last_serviced(spec: &MissionSpec, traj: &Trajectory) -> Vec<Option<usize>> {
    traj.vehicles
        .iter()
        .enumerate()
        .map(|(d, t)| {
            let initial = t.capacity.first().copied().unwrap_or(spec.initial_capacity(d));
            scan_magazine(spec, &t.position, initial)
                .installs
                .last()
                .map(|&(q, _)| q)
        })
        .collect()
}

/// Roll out per-vehicle accelerations from the mission's initial states.
pub fn propagate(
    spec: &MissionSpec,
    accelerations: Vec<Vec<[f64; 3]>>,
) -> Result<Trajectory, TrajectoryError> {
    if accelerations.len() != spec.vehicles.len() {
        return Err(TrajectoryError::Shape(format!(
            "{} acceleration tracks for {} vehicles",
            accelerations.len(),
            spec.vehicles.len()
        )));
    }
    let dt = spec.sampling_period;
    let vehicles = accelerations
        .into_iter()
        .enumerate()
        .map(|(d, acceleration)| {
            let (position, velocity) = rollout(
                spec.initial_position(d),
                spec.initial_velocity(d),
                &acceleration,
                dt,
            );
            let capacity = derive_capacity(spec, &position, spec.initial_capacity(d));
            VehicleTrack {
                position,
                velocity,
                acceleration,
                capacity,
            }
        })
        .collect();
    Ok(Trajectory { dt, vehicles })
}

impl Trajectory {
    /// Number of intervals N of the longest track.
    pub fn steps(&self) -> usize {
        self.vehicles
            .iter()
            .map(|v| v.position.len().saturating_sub(1))
            .max()
            .unwrap_or(0)
    }

    /// Joint signal with channels `p{d}.*`, `v{d}.*`, `c{d}` per vehicle.
    pub fn to_signal(&self) -> Result<Signal, TrajectoryError> {
        let mut signal = Signal::new(self.dt)?;
        for (d, track) in self.vehicles.iter().enumerate() {
            for (j, name) in position_channels(d).into_iter().enumerate() {
                signal.push_channel(name, track.position.iter().map(|p| p[j]).collect())?;
            }
            for (j, name) in velocity_channels(d).into_iter().enumerate() {
                signal.push_channel(name, track.velocity.iter().map(|v| v[j]).collect())?;
            }
            signal.push_channel(
                capacity_channel(d),
                track.capacity.iter().map(|&c| f64::from(c)).collect(),
            )?;
        }
        Ok(signal)
    }

    /// Largest deviation from the double-integrator recurrence.
    pub fn dynamics_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for track in &self.vehicles {
            for (k, a) in track.acceleration.iter().enumerate() {
                let (p, v) = step(&track.position[k], &track.velocity[k], a, self.dt);
                for j in 0..3 {
                    worst = worst
                        .max((p[j] - track.position[k + 1][j]).abs())
                        .max((v[j] - track.velocity[k + 1][j]).abs());
                }
            }
        }
        worst
    }

    /// Whether every acceleration lies inside its vehicle's box.
    pub fn accelerations_within(&self, spec: &MissionSpec) -> bool {
        self.vehicles.iter().zip(&spec.vehicles).all(|(track, v)| {
            track.acceleration.iter().all(|a| {
                (0..3).all(|j| a[j] >= v.acceleration_min[j] && a[j] <= v.acceleration_max[j])
            })
        })
    }

    /// Largest velocity bound excess (0 when all bounds hold).
    pub fn velocity_violation(&self, spec: &MissionSpec) -> f64 {
        let mut worst: f64 = 0.0;
        for (track, v) in self.vehicles.iter().zip(&spec.vehicles) {
            for vel in &track.velocity {
                for j in 0..3 {
                    worst = worst
                        .max(vel[j] - v.velocity_max[j])
                        .max(v.velocity_min[j] - vel[j]);
                }
            }
        }
        worst
    }

    /// Smallest pairwise distance at each sample.
    pub fn min_separation(&self) -> Vec<f64> {
        (0..=self.steps())
            .map(|k| {
                let mut best = f64::INFINITY;
                let here: Vec<_> = self
                    .vehicles
                    .iter()
                    .filter_map(|v| v.position.get(k))
                    .collect();
                for a in 0..here.len() {
                    for b in a + 1..here.len() {
                        best = best.min(crate::mission::distance(here[a], here[b]));
                    }
                }
                best
            })
            .collect()
    }
}
