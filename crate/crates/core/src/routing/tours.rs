//! Timing of routes: waypoint arrival steps under per-axis velocity and
//! acceleration limits.

use serde::{Deserialize, Serialize};

use super::{from_um, to_um, RouteSolution, RoutingError, VertexKind};
use crate::mission::{ceil_steps, distance, Box3, MissionSpec, VehicleSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum WaypointKind {
    Target { target: usize },
    Station { station: usize },
    /// Detour point over an obstacle the straight leg would cross.
    Via,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    #[serde(flatten)]
    pub kind: WaypointKind,
    pub position: [f64; 3],
    pub arrival_step: usize,
    pub dwell_steps: usize,
}

impl Waypoint {
    pub fn departure_step(&self) -> usize {
        self.arrival_step + self.dwell_steps
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleSchedule {
    pub vehicle: usize,
    pub start: [f64; 3],
    pub start_velocity: [f64; 3],
    /// Steps spent braking to rest before the first leg.
    pub brake_steps: usize,
    pub waypoints: Vec<Waypoint>,
    /// Step at which the vehicle comes to rest for good.
    pub finish_step: usize,
    /// Routed distance between centroids, as priced by the routing model.
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub dt: f64,
    pub horizon_steps: usize,
    pub vehicles: Vec<VehicleSchedule>,
}

impl Schedule {
    pub fn end_step(&self) -> usize {
        self.vehicles.iter().map(|v| v.finish_step).max().unwrap_or(0)
    }

    pub fn distance(&self) -> f64 {
        from_um(self.vehicles.iter().map(|v| to_um(v.distance)).sum())
    }
}

/// Largest speed and acceleration along unit direction `u` that keep every
/// axis inside its bounds.
pub(crate) fn directional_limits(u: &[f64; 3], vehicle: &VehicleSpec) -> (f64, f64) {
    let mut speed = f64::INFINITY;
    let mut accel = f64::INFINITY;
    for j in 0..3 {
        if u[j] == 0.0 {
            continue;
        }
        let vmax = if u[j] > 0.0 {
            vehicle.velocity_max[j] / u[j]
        } else {
            vehicle.velocity_min[j] / u[j]
        };
        let amax = vehicle.acceleration_max[j].min(-vehicle.acceleration_min[j]) / u[j].abs();
        speed = speed.min(vmax);
        accel = accel.min(amax);
    }
    (speed, accel)
}

/// Rest-to-rest travel time over `length` with speed cap `vmax` and
/// acceleration cap `amax` (either may be infinite).
pub fn trapezoid_time(length: f64, vmax: f64, amax: f64) -> f64 {
    if length <= 0.0 {
        return 0.0;
    }
    if amax.is_infinite() {
        return length / vmax;
    }
    if vmax.is_infinite() || length < vmax * vmax / amax {
        2.0 * (length / amax).sqrt()
    } else {
        length / vmax + vmax / amax
    }
}

/// Smallest number of acceleration steps `m` realising a discrete
/// accelerate/coast/decelerate profile over `steps` intervals, if any.
pub(crate) fn profile_split(
    length: f64,
    steps: usize,
    dt: f64,
    vmax: f64,
    amax: f64,
) -> Option<(usize, f64)> {
    for m in 1..=steps / 2 {
        let alpha = length / (m as f64 * dt * dt * (steps - m) as f64);
        if alpha <= amax * (1.0 + 1e-12) {
            let peak = alpha * m as f64 * dt;
            return (peak <= vmax * (1.0 + 1e-12)).then_some((m, alpha));
        }
    }
    None
}

/// Steps needed to fly from `from` to `to` starting and ending at rest.
pub fn leg_steps(from: &[f64; 3], to: &[f64; 3], vehicle: &VehicleSpec, dt: f64) -> usize {
    let length = distance(from, to);
    if length <= 0.0 {
        return 0;
    }
    let u = [
        (to[0] - from[0]) / length,
        (to[1] - from[1]) / length,
        (to[2] - from[2]) / length,
    ];
    let (vmax, amax) = directional_limits(&u, vehicle);
    let mut n = ceil_steps(trapezoid_time(length, vmax, amax), dt).max(1);
    if amax.is_finite() {
        n = n.max(2);
        while profile_split(length, n, dt, vmax, amax).is_none() {
            n += 1;
        }
    }
    n
}

/// Steps needed to brake from `v0` to rest at constant deceleration.
pub(crate) fn brake_steps(v0: &[f64; 3], vehicle: &VehicleSpec, dt: f64) -> usize {
    if v0.iter().all(|&v| v == 0.0) {
        return 0;
    }
    let mut m = 1usize;
    loop {
        let ok = (0..3).all(|j| {
            let a = -v0[j] / (m as f64 * dt);
            a >= vehicle.acceleration_min[j] && a <= vehicle.acceleration_max[j]
        });
        if ok {
            return m;
        }
        m += 1;
    }
}

/// Time the routes of `sol` into per-vehicle waypoint schedules.
/// Height kept above an obstacle top when climbing over it.
pub const DETOUR_CLEARANCE: f64 = 1.0;

/// Whether segment `a`-`b` meets `region` grown by `grow` on every side.
pub(crate) fn segment_hits(a: &[f64; 3], b: &[f64; 3], region: &Box3, grow: f64) -> bool {
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for j in 0..3 {
        let lo = region.lower[j] - grow;
        let hi = region.upper[j] + grow;
        let d = b[j] - a[j];
        if d == 0.0 {
            if a[j] <= lo || a[j] >= hi {
                return false;
            }
            continue;
        }
        let (mut u, mut w) = ((lo - a[j]) / d, (hi - a[j]) / d);
        if u > w {
            std::mem::swap(&mut u, &mut w);
        }
        t0 = t0.max(u);
        t1 = t1.min(w);
        if t0 >= t1 {
            return false;
        }
    }
    true
}

/// Via points lifting the leg `a`-`b` over any obstacle it passes closer
/// than the robustness margin: straight up, across, and down again. Empty when the leg is clear or the ceiling is
/// too low to pass over, in which case the optimizer has to find a way round.
pub fn detour(a: &[f64; 3], b: &[f64; 3], spec: &MissionSpec) -> Vec<[f64; 3]> {
    let c = DETOUR_CLEARANCE;
    let grow = spec.robustness_margin;
    let blocking = |p: &[f64; 3], q: &[f64; 3]| {
        spec.obstacles
            .iter()
            .filter(|o| segment_hits(p, q, o, grow))
            .map(|o| o.upper[2])
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let top = blocking(a, b);
    if top == f64::NEG_INFINITY {
        return Vec::new();
    }
    let ceiling = spec.workspace.upper[2] - c;
    let mut z = top + c;
    for _ in 0..=spec.obstacles.len() {
        if z > ceiling {
            return Vec::new();
        }
        let up = [a[0], a[1], z];
        let down = [b[0], b[1], z];
        let next = blocking(a, &up).max(blocking(&up, &down)).max(blocking(&down, b));
        if next == f64::NEG_INFINITY {
            return vec![up, down];
        }
        z = z.max(next + c);
    }
    Vec::new()
}

/// Fly from `from` to `to`, pushing any detour points, and return the arrival step.
fn fly(
    from: &[f64; 3],
    to: &[f64; 3],
    mut step: usize,
    spec: &MissionSpec,
    vehicle: &VehicleSpec,
    waypoints: &mut Vec<Waypoint>,
) -> usize {
    let dt = spec.sampling_period;
    let mut here = *from;
    for via in detour(from, to, spec) {
        step += leg_steps(&here, &via, vehicle, dt);
        here = via;
        waypoints.push(Waypoint {
            kind: WaypointKind::Via,
            position: via,
            arrival_step: step,
            dwell_steps: 0,
        });
    }
    step + leg_steps(&here, to, vehicle, dt)
}

pub fn extract_tours(sol: &RouteSolution, spec: &MissionSpec) -> Result<Schedule, RoutingError> {
    if !sol.status.has_routes() {
        return Err(RoutingError::NoSolution(sol.status.name().to_string()));
    }
    let dt = spec.sampling_period;
    let fleet = spec.vehicles.len();
    let stations = spec.stations.len();
    let hold_install = spec.install_hold_steps();
    let hold_refill = spec.refill_hold_steps();
    let capacity = spec.capacity() as usize;

    // Vertex numbering mirrors the routing model.
    let kind_of = |v: usize| -> VertexKind {
        if v < fleet {
            VertexKind::Depot { vehicle: v }
        } else if v < fleet + stations {
            VertexKind::Station {
                station: v - fleet,
            }
        } else {
            VertexKind::Target {
                target: v - fleet - stations,
            }
        }
    };
    let centroid = |v: usize| -> [f64; 3] {
        match kind_of(v) {
            VertexKind::Depot { vehicle } => spec.initial_position(vehicle),
            VertexKind::Station { station } => spec.stations[station].centroid(),
            VertexKind::Target { target } => spec.targets[target].centroid(),
        }
    };

    let mut vehicles = Vec::with_capacity(fleet);
    for d in 0..fleet {
        let vehicle = &spec.vehicles[d];
        let p0 = spec.initial_position(d);
        let v0 = spec.initial_velocity(d);
        let brake = brake_steps(&v0, vehicle, dt);
        let brake_time = brake as f64 * dt;
        let mut here = [
            p0[0] + 0.5 * v0[0] * brake_time,
            p0[1] + 0.5 * v0[1] * brake_time,
            p0[2] + 0.5 * v0[2] * brake_time,
        ];
        let mut step = brake;
        let mut waypoints: Vec<Waypoint> = Vec::new();
        let mut routed_um = 0i64;
        let mut magazine = spec.initial_capacity(d) as usize;

        let trips = sol.route(d).map(|r| r.trips.as_slice()).unwrap_or(&[]);
        for (k, trip) in trips.iter().enumerate() {
            if k > 0 {
                if let Some(last) = waypoints.last_mut() {
                    // Top up before a trip the magazine cannot cover.
                    if magazine < trip.load() {
                        last.dwell_steps = hold_refill;
                        step = last.departure_step();
                        magazine = capacity;
                    }
                }
                let VertexKind::Station { station } = kind_of(trip.start) else {
                    unreachable!("trips after the first start at a station");
                };
                let slot = spec.station_slot(station, d);
                if slot != here {
                    // Transfer between stations is not priced by the routing model.
                    step = fly(&here, &slot, step, spec, vehicle, &mut waypoints);
                    here = slot;
                    waypoints.push(Waypoint {
                        kind: WaypointKind::Station { station },
                        position: slot,
                        arrival_step: step,
                        dwell_steps: 0,
                    });
                }
            }
            let mut prev = trip.start;
            for &v in trip.targets.iter().chain(std::iter::once(&trip.end)) {
                routed_um += to_um(distance(&centroid(prev), &centroid(v)));
                prev = v;
                let (kind, position, dwell) = match kind_of(v) {
                    VertexKind::Target { target } => (
                        WaypointKind::Target { target },
                        spec.targets[target].centroid(),
                        hold_install,
                    ),
                    VertexKind::Station { station } => (
                        WaypointKind::Station { station },
                        spec.station_slot(station, d),
                        0,
                    ),
                    VertexKind::Depot { .. } => unreachable!("trips never end at a depot"),
                };
                step = fly(&here, &position, step, spec, vehicle, &mut waypoints);
                here = position;
                waypoints.push(Waypoint {
                    kind,
                    position,
                    arrival_step: step,
                    dwell_steps: dwell,
                });
                step += dwell;
            }
            magazine = magazine.saturating_sub(trip.load());
        }
        vehicles.push(VehicleSchedule {
            vehicle: d,
            start: p0,
            start_velocity: v0,
            brake_steps: brake,
            finish_step: step,
            waypoints,
            distance: from_um(routed_um),
        });
    }

    let schedule = Schedule {
        dt,
        horizon_steps: spec.steps(),
        vehicles,
    };
    let end = schedule.end_step();
    if end > schedule.horizon_steps {
        return Err(RoutingError::ScheduleOverflow {
            required_horizon: end as f64 * dt,
            horizon: spec.horizon,
            schedule: Box::new(schedule),
        });
    }
    Ok(schedule)
}
