//! Failure injection and replanning over the unfinished part of a mission.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mission::{compile, MissionSpec};
use crate::plan::{plan, Plan, PlanError, PlanOptions};
use crate::trajectory::{
    certify, scan_magazine, CertifyReport, Trajectory, TrajectoryError, VehicleTrack,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailureMode {
    /// The vehicle stops contributing for the rest of the mission.
    TotalLoss,
}

impl FailureMode {
    pub fn name(&self) -> &'static str {
        match self {
            FailureMode::TotalLoss => "total-loss",
        }
    }
}

impl std::str::FromStr for FailureMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "total-loss" => Ok(FailureMode::TotalLoss),
            other => Err(format!("unknown failure mode `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FailureEvent {
    pub step: usize,
    pub vehicle: usize,
    pub mode: FailureMode,
}

#[derive(Debug, Error)]
pub enum ReplanError {
    #[error("event for vehicle {vehicle} but the fleet has {fleet} vehicles")]
    UnknownVehicle { vehicle: usize, fleet: usize },
    #[error("event at step {step} is not before the horizon of {horizon} steps")]
    PastHorizon { step: usize, horizon: usize },
    #[error("plan covers {plan} vehicles, mission has {fleet}")]
    Shape { plan: usize, fleet: usize },
    #[error("every vehicle has failed; nothing can be replanned")]
    NoSurvivors,
    #[error("residual mission needs {} s but only {} s remain (extend the horizon by {} s)", .0.required_horizon, .0.available, .0.extension)]
    HorizonTooShort(HorizonShortfall),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
}

/// Residual schedule does not fit the time left.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HorizonShortfall {
    pub required_horizon: f64,
    pub available: f64,
    /// Minimal horizon extension that fits the schedule.
    pub extension: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LogEntry {
    pub step: usize,
    pub vehicle: usize,
    pub message: String,
}

/// What happened up to the replanning step.
#[derive(Clone, Debug, PartialEq)]
pub struct ExecutionTrace {
    /// Step at which the residual mission starts.
    pub step: usize,
    /// Realised samples `0..=step`; a lost vehicle's track ends where it failed.
    pub trajectory: Trajectory,
    /// Step of failure per vehicle.
    pub failed: Vec<Option<usize>>,
    /// Targets whose full installation dwell was flown.
    pub completed: BTreeSet<usize>,
    /// Magazine level per vehicle after the last realised sample.
    pub capacity: Vec<u32>,
    pub log: Vec<LogEntry>,
}

impl ExecutionTrace {
    pub fn survivors(&self) -> Vec<usize> {
        (0..self.failed.len()).filter(|&d| self.failed[d].is_none()).collect()
    }
}

/// Replay `plan` until the last event, or to the end when there are none. Tracks that already end early count
/// as failed at their last sample.
pub fn simulate(
    plan: &Trajectory,
    spec: &MissionSpec,
    events: &[FailureEvent],
) -> Result<ExecutionTrace, ReplanError> {
    let fleet = spec.vehicles.len();
    if plan.vehicles.len() != fleet {
        return Err(ReplanError::Shape {
            plan: plan.vehicles.len(),
            fleet,
        });
    }
    let horizon = plan.steps();
    let mut events = events.to_vec();
    events.sort();
    let mut failed: Vec<Option<usize>> = plan
        .vehicles
        .iter()
        .map(|t| {
            let last = t.position.len() - 1;
            (last < horizon).then_some(last)
        })
        .collect();
    let mut log = Vec::new();
    for e in &events {
        if e.vehicle >= fleet {
            return Err(ReplanError::UnknownVehicle {
                vehicle: e.vehicle,
                fleet,
            });
        }
        if e.step >= horizon {
            return Err(ReplanError::PastHorizon { step: e.step, horizon });
        }
        match failed[e.vehicle] {
            Some(at) if at <= e.step => log.push(LogEntry {
                step: e.step,
                vehicle: e.vehicle,
                message: format!("already lost at step {at}; event ignored"),
            }),
            _ => {
                failed[e.vehicle] = Some(e.step);
                log.push(LogEntry {
                    step: e.step,
                    vehicle: e.vehicle,
                    message: e.mode.name().to_string(),
                });
            }
        }
    }
    // without events the whole plan is flown
    let step = events.last().map_or(horizon, |e| e.step);

    let mut completed = BTreeSet::new();
    let mut capacity = Vec::with_capacity(fleet);
    let mut vehicles = Vec::with_capacity(fleet);
    for (d, track) in plan.vehicles.iter().enumerate() {
        let end = failed[d].map_or(step, |f| f.min(step));
        let end = end.min(track.position.len() - 1);
        let kept = VehicleTrack {
            position: track.position[..=end].to_vec(),
            velocity: track.velocity[..=end].to_vec(),
            acceleration: track.acceleration[..end].to_vec(),
            capacity: track.capacity[..=end].to_vec(),
        };
        let scan = scan_magazine(spec, &kept.position, spec.initial_capacity(d));
        for &(t, k) in &scan.installs {
            if completed.insert(t) {
                log.push(LogEntry {
                    step: k,
                    vehicle: d,
                    message: format!("installed target {t}"),
                });
            }
        }
        capacity.push(scan.final_level);
        vehicles.push(kept);
    }
    log.sort_by_key(|e| e.step);
    Ok(ExecutionTrace {
        step,
        trajectory: Trajectory {
            dt: plan.dt,
            vehicles,
        },
        failed,
        completed,
        capacity,
        log,
    })
}

/// Mission left over after `trace`, with index maps back to the original.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualMission {
    pub spec: MissionSpec,
    /// Residual vehicle index to original.
    pub vehicles: Vec<usize>,
    /// Residual target index to original.
    pub targets: Vec<usize>,
}

pub fn residual_mission(trace: &ExecutionTrace, spec: &MissionSpec) -> Result<ResidualMission, ReplanError> {
    let vehicles = trace.survivors();
    if vehicles.is_empty() {
        return Err(ReplanError::NoSurvivors);
    }
    let targets: Vec<usize> = (0..spec.targets.len())
        .filter(|t| !trace.completed.contains(t))
        .collect();
    let mut residual = spec.clone();
    residual.targets = targets.iter().map(|&t| spec.targets[t]).collect();
    residual.vehicles = vehicles
        .iter()
        .map(|&d| {
            let track = &trace.trajectory.vehicles[d];
            let mut v = spec.vehicles[d].clone();
            v.initial_position = Some(track.position[trace.step]);
            v.initial_velocity = Some(track.velocity[trace.step]);
            v.initial_capacity = Some(trace.capacity[d]);
            v
        })
        .collect();
    let remaining = spec.steps().saturating_sub(trace.step);
    residual.horizon = remaining as f64 * spec.sampling_period;
    if targets.is_empty() {
        // dwell times only shape target and refill clauses, which are gone;
        // zero them so a short tail still validates
        residual.install_dwell = 0.0;
        residual.refill_dwell = 0.0;
    }
    Ok(ResidualMission {
        spec: residual,
        vehicles,
        targets,
    })
}

#[derive(Clone, Debug)]
pub struct ReplanOutcome {
    pub residual: ResidualMission,
    /// Fresh plan for the residual mission, absent when no targets remained.
    pub plan: Option<Plan>,
    /// Residual trajectory starting at the replanning step.
    pub suffix: Trajectory,
    pub report: CertifyReport,
    /// Executed prefix followed by the residual plan, in original indices.
    pub merged: Trajectory,
    /// Set when the residual schedule does not fit the remaining time.
    pub shortfall: Option<HorizonShortfall>,
}

impl ReplanOutcome {
    pub fn certified(&self) -> bool {
        self.report.satisfied && self.shortfall.is_none()
    }

    pub fn shortfall_error(&self) -> Option<ReplanError> {
        self.shortfall.map(ReplanError::HorizonTooShort)
    }
}

/// Plan the residual mission and splice it onto the executed prefix.
/// `original` is the plan that was being flown; when every target is done
/// the survivors simply keep flying it.
pub fn replan(
    trace: &ExecutionTrace,
    spec: &MissionSpec,
    original: &Trajectory,
    options: &PlanOptions,
) -> Result<ReplanOutcome, ReplanError> {
    let residual = residual_mission(trace, spec)?;
    let k = trace.step;
    let epsilon = options
        .optimizer
        .epsilon
        .unwrap_or(spec.robustness_margin);

    let (fresh, suffix, report, shortfall) = if residual.targets.is_empty() {
        let vehicles = residual
            .vehicles
            .iter()
            .map(|&d| {
                let t = &original.vehicles[d];
                VehicleTrack {
                    position: t.position[k..].to_vec(),
                    velocity: t.velocity[k..].to_vec(),
                    acceleration: t.acceleration[k..].to_vec(),
                    capacity: scan_magazine(spec, &t.position[k..], trace.capacity[d]).capacity,
                }
            })
            .collect();
        let suffix = Trajectory {
            dt: original.dt,
            vehicles,
        };
        let mission = compile(&residual.spec).map_err(PlanError::from)?;
        let report = certify(&mission, &suffix, options.optimizer.beta, epsilon)?;
        (None, suffix, report, None)
    } else {
        let p = plan(&residual.spec, options)?;
        let shortfall = p.required_horizon.map(|required_horizon| {
            let available = residual.spec.horizon;
            HorizonShortfall {
                required_horizon,
                available,
                extension: required_horizon - available,
            }
        });
        let suffix = p.trajectory().clone();
        let report = p.report().clone();
        (Some(p), suffix, report, shortfall)
    };

    let mut merged = trace.trajectory.clone();
    for (r, &d) in residual.vehicles.iter().enumerate() {
        let tail = &suffix.vehicles[r];
        let track = &mut merged.vehicles[d];
        track.position.extend_from_slice(&tail.position[1..]);
        track.velocity.extend_from_slice(&tail.velocity[1..]);
        track.acceleration.extend_from_slice(&tail.acceleration);
        // the residual starts from the post-install level at the seam
        track.capacity.extend_from_slice(&tail.capacity[1..]);
    }
    Ok(ReplanOutcome {
        residual,
        plan: fresh,
        suffix,
        report,
        merged,
        shortfall,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mission::fixtures::*;

    fn two_vehicle() -> MissionSpec {
        let mut spec = line_spec();
        spec.depots.push(crate::mission::Box3::around([8.0, 0.0, 1.0], 0.5));
        spec.vehicles.push(vehicle(1, 2));
        spec
    }

    #[test]
    fn no_events_keeps_the_plan() {
        let spec = two_vehicle();
        let p = plan(&spec, &PlanOptions::default()).unwrap();
        let trace = simulate(p.trajectory(), &spec, &[]).unwrap();
        assert_eq!(trace.step, spec.steps());
        assert_eq!(&trace.trajectory, p.trajectory());
        assert_eq!(trace.completed.len(), 2);
        assert_eq!(trace.survivors(), vec![0, 1]);
    }

    #[test]
    fn lost_vehicle_track_stops_at_failure() {
        let spec = two_vehicle();
        let p = plan(&spec, &PlanOptions::default()).unwrap();
        let ev = FailureEvent {
            step: 3,
            vehicle: 1,
            mode: FailureMode::TotalLoss,
        };
        let trace = simulate(p.trajectory(), &spec, &[ev]).unwrap();
        assert_eq!(trace.trajectory.vehicles[1].position.len(), 4);
        assert_eq!(trace.failed, vec![None, Some(3)]);
        let out = replan(&trace, &spec, p.trajectory(), &PlanOptions::default()).unwrap();
        assert_eq!(out.residual.vehicles, vec![0]);
        let merged = &out.merged;
        assert_eq!(merged.vehicles[0].position.len(), spec.steps() + 1);
        assert_eq!(merged.vehicles[1].position.len(), 4);
        assert!(merged.dynamics_residual() < 1e-9);
        // seam matches the trace exactly
        assert_eq!(out.suffix.vehicles[0].position[0], trace.trajectory.vehicles[0].position[3]);
        assert_eq!(out.suffix.vehicles[0].velocity[0], trace.trajectory.vehicles[0].velocity[3]);
    }

    #[test]
    fn failure_after_everything_is_done_keeps_suffix() {
        let spec = two_vehicle();
        let p = plan(&spec, &PlanOptions::default()).unwrap();
        let n = spec.steps();
        let ev = FailureEvent {
            step: n - 1,
            vehicle: 1,
            mode: FailureMode::TotalLoss,
        };
        let trace = simulate(p.trajectory(), &spec, &[ev]).unwrap();
        assert_eq!(trace.completed.len(), spec.targets.len());
        let out = replan(&trace, &spec, p.trajectory(), &PlanOptions::default()).unwrap();
        assert!(out.plan.is_none());
        assert_eq!(out.merged.vehicles[0], p.trajectory().vehicles[0]);
    }

    #[test]
    fn bad_events_are_rejected() {
        let spec = line_spec();
        let p = plan(&spec, &PlanOptions::default()).unwrap();
        let ev = |step, vehicle| FailureEvent {
            step,
            vehicle,
            mode: FailureMode::TotalLoss,
        };
        assert!(matches!(
            simulate(p.trajectory(), &spec, &[ev(1, 4)]),
            Err(ReplanError::UnknownVehicle { .. })
        ));
        assert!(matches!(
            simulate(p.trajectory(), &spec, &[ev(10_000, 0)]),
            Err(ReplanError::PastHorizon { .. })
        ));
        let trace = simulate(p.trajectory(), &spec, &[ev(2, 0)]).unwrap();
        assert!(matches!(
            replan(&trace, &spec, p.trajectory(), &PlanOptions::default()),
            Err(ReplanError::NoSurvivors)
        ));
    }
}
