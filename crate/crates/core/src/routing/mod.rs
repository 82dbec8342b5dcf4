//! Capacitated multi-vehicle routing: an undirected two-index MILP solved by
//! branch-and-bound over an in-repo simplex, plus tour timing.

mod bnb;
mod check;
pub mod simplex;
mod tours;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mission::{distance, MissionError, MissionSpec};

pub use bnb::{solve, Budget, Cut, NodeRecord, SolveStats};
pub use check::{verify_solution, CheckError};
pub(crate) use tours::{directional_limits, profile_split};
pub use tours::{
    detour, extract_tours, leg_steps, trapezoid_time, Schedule, VehicleSchedule, Waypoint,
    WaypointKind, DETOUR_CLEARANCE,
};

#[derive(Debug, Error)]
pub enum RoutingError {
    #[error(transparent)]
    Mission(#[from] MissionError),
    #[error("no routes to extract: solver status is {0}")]
    NoSolution(String),
    #[error("schedule needs a horizon of {required_horizon} s, mission allows {horizon} s")]
    ScheduleOverflow {
        required_horizon: f64,
        horizon: f64,
        schedule: Box<Schedule>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum VertexKind {
    Depot { vehicle: usize },
    Station { station: usize },
    Target { target: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vertex {
    #[serde(flatten)]
    pub kind: VertexKind,
    pub position: [f64; 3],
}

impl Vertex {
    pub fn is_facility(&self) -> bool {
        !matches!(self.kind, VertexKind::Target { .. })
    }
}

/// Routing instance. Vertices are ordered depots (one per vehicle, at the
/// vehicle's start position), then stations, then targets. Edge `e` joins
/// `edges[e] = (i, j)` with `i < j`; variable `z[e][d]` lives at index
/// `e * vehicles + d`, followed by `y[t][d]` at `num_z + t * vehicles + d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoutingModel {
    pub vertices: Vec<Vertex>,
    pub vehicles: usize,
    pub stations: usize,
    pub targets: usize,
    pub capacity: u32,
    pub initial_capacity: Vec<u32>,
    pub edges: Vec<(usize, usize)>,
    /// Edge weights in integer micrometres so objective comparisons are exact.
    pub weights_um: Vec<i64>,
    /// Upper bound of `z` per edge and vehicle (0 disables the edge).
    pub edge_upper: Vec<Vec<u8>>,
    pub warnings: Vec<String>,
}

pub fn lower_bound_h(size: usize, capacity: usize) -> usize {
    assert!(capacity >= 1, "capacity must be positive");
    size.div_ceil(capacity)
}

pub(crate) fn to_um(meters: f64) -> i64 {
    (meters * 1e6).round() as i64
}

pub(crate) fn from_um(um: i64) -> f64 {
    um as f64 / 1e6
}

impl RoutingModel {
    pub fn depot_vertex(&self, d: usize) -> usize {
        d
    }

    pub fn station_vertex(&self, s: usize) -> usize {
        self.vehicles + s
    }

    pub fn target_vertex(&self, t: usize) -> usize {
        self.vehicles + self.stations + t
    }

    /// Target index of a vertex, if it is a target.
    pub fn target_of(&self, v: usize) -> Option<usize> {
        v.checked_sub(self.vehicles + self.stations)
    }

    pub fn num_z(&self) -> usize {
        self.edges.len() * self.vehicles
    }

    pub fn num_vars(&self) -> usize {
        self.num_z() + self.targets * self.vehicles
    }

    pub fn z_index(&self, e: usize, d: usize) -> usize {
        e * self.vehicles + d
    }

    pub fn y_index(&self, t: usize, d: usize) -> usize {
        self.num_z() + t * self.vehicles + d
    }

    /// Index of the edge joining `i` and `j`.
    pub fn edge(&self, i: usize, j: usize) -> usize {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        let n = self.vertices.len();
        // edges are enumerated row by row over the strict upper triangle
        a * n - a * (a + 1) / 2 + (b - a - 1)
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        if i == j {
            0.0
        } else {
            from_um(self.weights_um[self.edge(i, j)])
        }
    }

    pub fn weight_um(&self, i: usize, j: usize) -> i64 {
        if i == j {
            0
        } else {
            self.weights_um[self.edge(i, j)]
        }
    }

    pub fn upper(&self, i: usize, j: usize, d: usize) -> u8 {
        self.edge_upper[self.edge(i, j)][d]
    }

    /// Whether vehicle `d` may leave its depot straight for a station
    /// (an idle route). Allowed when it starts empty or targets are scarce.
    pub fn idle_departure(&self, d: usize) -> bool {
        self.initial_capacity[d] == 0 || self.targets < self.vehicles
    }
}

/// Instantiate the routing model for `spec`.
pub fn build_model(spec: &MissionSpec) -> Result<RoutingModel, RoutingError> {
    spec.validate()?;
    let fleet = spec.vehicles.len();
    let mut vertices = Vec::new();
    for d in 0..fleet {
        vertices.push(Vertex {
            kind: VertexKind::Depot { vehicle: d },
            position: spec.initial_position(d),
        });
    }
    for (s, b) in spec.stations.iter().enumerate() {
        vertices.push(Vertex {
            kind: VertexKind::Station { station: s },
            position: b.centroid(),
        });
    }
    for (t, b) in spec.targets.iter().enumerate() {
        vertices.push(Vertex {
            kind: VertexKind::Target { target: t },
            position: b.centroid(),
        });
    }

    let initial_capacity: Vec<u32> = (0..fleet).map(|d| spec.initial_capacity(d)).collect();
    let mut model = RoutingModel {
        vertices,
        vehicles: fleet,
        stations: spec.stations.len(),
        targets: spec.targets.len(),
        capacity: spec.capacity(),
        initial_capacity,
        edges: Vec::new(),
        weights_um: Vec::new(),
        edge_upper: Vec::new(),
        warnings: Vec::new(),
    };

    let n = model.vertices.len();
    for i in 0..n {
        for j in i + 1..n {
            model.edges.push((i, j));
            model
                .weights_um
                .push(to_um(distance(&model.vertices[i].position, &model.vertices[j].position)));
            let uppers = (0..fleet).map(|d| edge_upper(&model, i, j, d)).collect();
            model.edge_upper.push(uppers);
        }
    }

    let trips_per_vehicle = if spec.install_dwell > 0.0 {
        (spec.horizon / spec.install_dwell).floor() as usize
    } else {
        usize::MAX
    };
    let reachable = trips_per_vehicle.saturating_mul(fleet);
    if reachable < model.targets {
        model.warnings.push(format!(
            "likely infeasible: {} targets but at most {} installations fit in the horizon",
            model.targets, reachable
        ));
    }
    if model.targets > 0 && model.stations == 0 {
        let total: u32 = model.initial_capacity.iter().sum();
        if (total as usize) < model.targets {
            model.warnings.push(format!(
                "likely infeasible: {} targets but only {} diverters on board and no station",
                model.targets, total
            ));
        }
    }
    Ok(model)
}

fn edge_upper(model: &RoutingModel, i: usize, j: usize, d: usize) -> u8 {
    use VertexKind::*;
    let ki = model.vertices[i].kind;
    let kj = model.vertices[j].kind;
    match (ki, kj) {
        (Target { .. }, Target { .. }) => 1,
        (Station { .. }, Target { .. }) | (Target { .. }, Station { .. }) => 2,
        (Depot { vehicle }, Target { .. }) | (Target { .. }, Depot { vehicle }) => {
            u8::from(vehicle == d && model.initial_capacity[d] > 0)
        }
        (Depot { vehicle }, Station { .. }) | (Station { .. }, Depot { vehicle }) => {
            u8::from(vehicle == d && model.idle_departure(d))
        }
        _ => 0,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Feasible { gap: f64 },
    Infeasible { hint: String },
    BudgetExhausted,
}

impl SolveStatus {
    pub fn has_routes(&self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::Feasible { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Feasible { .. } => "feasible",
            SolveStatus::Infeasible { .. } => "infeasible",
            SolveStatus::BudgetExhausted => "budget_exhausted",
        }
    }
}

/// Facility-to-facility run of targets.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trip {
    /// Starting vertex (the depot for the first trip, else a station).
    pub start: usize,
    pub targets: Vec<usize>,
    /// Station vertex where the trip ends.
    pub end: usize,
}

impl Trip {
    pub fn load(&self) -> usize {
        self.targets.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleRoute {
    pub vehicle: usize,
    pub trips: Vec<Trip>,
}

impl VehicleRoute {
    pub fn targets(&self) -> impl Iterator<Item = usize> + '_ {
        self.trips.iter().flat_map(|t| t.targets.iter().copied())
    }

    pub fn last_target(&self) -> Option<usize> {
        self.trips.iter().rev().find_map(|t| t.targets.last().copied())
    }
}

/// Nonzero edge variable of a solution.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeUse {
    pub i: usize,
    pub j: usize,
    pub vehicle: usize,
    pub count: u8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RouteSolution {
    #[serde(flatten)]
    pub status: SolveStatus,
    /// Total distance in metres (exactly `objective_um / 1e6`).
    pub objective: f64,
    pub objective_um: i64,
    /// Best proven lower bound in metres.
    pub bound: f64,
    pub routes: Vec<VehicleRoute>,
    pub edges: Vec<EdgeUse>,
    /// `assignment[t]` is the vehicle visiting target `t`.
    pub assignment: Vec<usize>,
    #[serde(skip)]
    pub stats: SolveStats,
}

impl RouteSolution {
    /// Target vertices in target index order are mapped back by the model.
    pub fn route(&self, d: usize) -> Option<&VehicleRoute> {
        self.routes.iter().find(|r| r.vehicle == d)
    }

    /// Last target per vehicle (target indices).
    pub fn last_targets(&self, model: &RoutingModel) -> Vec<Option<usize>> {
        (0..model.vehicles)
            .map(|d| {
                self.route(d)
                    .and_then(VehicleRoute::last_target)
                    .and_then(|v| model.target_of(v))
            })
            .collect()
    }
}
