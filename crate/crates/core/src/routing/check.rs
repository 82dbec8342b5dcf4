//! Independent verification of a routing solution against the model's
//! constraint families. Works from the edge list alone, then cross-checks
//! the decoded routes.

use thiserror::Error;

use super::{lower_bound_h, RouteSolution, RoutingModel};

#[derive(Debug, Error, PartialEq)]
pub enum CheckError {
    #[error("solution has no routes (status {0})")]
    NoRoutes(String),
    #[error("edge ({i}, {j}) used {count} times by vehicle {vehicle}, bound {upper}")]
    EdgeBound {
        i: usize,
        j: usize,
        vehicle: usize,
        count: u8,
        upper: u8,
    },
    #[error("target vertex {vertex} has degree {degree}, expected 2")]
    TargetDegree { vertex: usize, degree: u32 },
    #[error("target vertex {vertex} has degree {degree} for vehicle {vehicle} but assignment {assigned}")]
    Linkage {
        vertex: usize,
        vehicle: usize,
        degree: u32,
        assigned: bool,
    },
    #[error("vehicle {vehicle} leaves its depot {degree} times")]
    DepotDegree { vehicle: usize, degree: u32 },
    #[error("targets {targets:?} are not connected to any facility")]
    Detached { targets: Vec<usize> },
    #[error("targets {targets:?} cross their boundary {crossing} times, need {need}")]
    Capacity {
        targets: Vec<usize>,
        crossing: u32,
        need: u32,
    },
    #[error("vehicle {vehicle} trip {trip} carries {load} targets, limit {limit}")]
    TripLoad {
        vehicle: usize,
        trip: usize,
        load: usize,
        limit: usize,
    },
    #[error("objective {claimed} um does not match edge weights {actual} um")]
    Objective { claimed: i64, actual: i64 },
    #[error("route of vehicle {vehicle}: {reason}")]
    Route { vehicle: usize, reason: String },
}

/// Verify `sol` and return every violation found.
pub fn verify_solution(model: &RoutingModel, sol: &RouteSolution) -> Result<(), Vec<CheckError>> {
    if !sol.status.has_routes() {
        return Err(vec![CheckError::NoRoutes(sol.status.name().to_string())]);
    }
    let n = model.vertices.len();
    let fleet = model.vehicles;
    let mut errors = Vec::new();

    // count[d][i][j]
    let mut count = vec![vec![vec![0u32; n]; n]; fleet];
    let mut total_um = 0i64;
    for u in &sol.edges {
        let upper = model.upper(u.i, u.j, u.vehicle);
        if u.count > upper {
            errors.push(CheckError::EdgeBound {
                i: u.i,
                j: u.j,
                vehicle: u.vehicle,
                count: u.count,
                upper,
            });
        }
        count[u.vehicle][u.i][u.j] += u32::from(u.count);
        count[u.vehicle][u.j][u.i] += u32::from(u.count);
        total_um += i64::from(u.count) * model.weight_um(u.i, u.j);
    }
    if total_um != sol.objective_um {
        errors.push(CheckError::Objective {
            claimed: sol.objective_um,
            actual: total_um,
        });
    }

    let degree = |d: usize, v: usize| -> u32 { count[d][v].iter().sum() };
    for t in 0..model.targets {
        let v = model.target_vertex(t);
        let total: u32 = (0..fleet).map(|d| degree(d, v)).sum();
        if total != 2 {
            errors.push(CheckError::TargetDegree {
                vertex: v,
                degree: total,
            });
        }
        for d in 0..fleet {
            let assigned = sol.assignment.get(t) == Some(&d);
            let deg = degree(d, v);
            if deg != if assigned { 2 } else { 0 } {
                errors.push(CheckError::Linkage {
                    vertex: v,
                    vehicle: d,
                    degree: deg,
                    assigned,
                });
            }
        }
    }
    for d in 0..fleet {
        let deg = degree(d, model.depot_vertex(d));
        if deg != 1 {
            errors.push(CheckError::DepotDegree {
                vehicle: d,
                degree: deg,
            });
        }
    }

    // Components of target-target edges, all vehicles pooled.
    let is_target = |v: usize| model.target_of(v).is_some();
    let mut seen = vec![false; n];
    for start in (0..n).filter(|&v| is_target(v)) {
        if seen[start] {
            continue;
        }
        let mut comp = vec![start];
        seen[start] = true;
        let mut k = 0;
        while k < comp.len() {
            let a = comp[k];
            k += 1;
            for b in 0..n {
                if is_target(b) && !seen[b] && (0..fleet).any(|d| count[d][a][b] > 0) {
                    seen[b] = true;
                    comp.push(b);
                }
            }
        }
        comp.sort_unstable();
        let crossing: u32 = comp
            .iter()
            .map(|&a| {
                (0..n)
                    .filter(|b| !comp.contains(b))
                    .map(|b| (0..fleet).map(|d| count[d][a][b]).sum::<u32>())
                    .sum::<u32>()
            })
            .sum();
        if crossing == 0 {
            errors.push(CheckError::Detached {
                targets: comp.clone(),
            });
        }
        let need = 2 * lower_bound_h(comp.len(), model.capacity as usize) as u32;
        if crossing < need {
            errors.push(CheckError::Capacity {
                targets: comp,
                crossing,
                need,
            });
        }
    }

    // Decoded routes must use exactly the edge multiset and respect loads.
    let mut route_count = vec![vec![vec![0u32; n]; n]; fleet];
    let mut visits = vec![0u32; n];
    for route in &sol.routes {
        let d = route.vehicle;
        if d >= fleet {
            errors.push(CheckError::Route {
                vehicle: d,
                reason: "unknown vehicle".into(),
            });
            continue;
        }
        let mut magazine = model.initial_capacity[d] as usize;
        for (k, trip) in route.trips.iter().enumerate() {
            if k == 0 && trip.start != model.depot_vertex(d) {
                errors.push(CheckError::Route {
                    vehicle: d,
                    reason: "first trip does not start at the depot".into(),
                });
            }
            if k > 0 && (trip.start < model.vehicles || is_target(trip.start)) {
                errors.push(CheckError::Route {
                    vehicle: d,
                    reason: format!("trip {k} does not start at a station"),
                });
            }
            if trip.end < model.vehicles || is_target(trip.end) {
                errors.push(CheckError::Route {
                    vehicle: d,
                    reason: format!("trip {k} does not end at a station"),
                });
            }
            if k > 0 {
                magazine = model.capacity as usize;
            }
            if trip.load() > magazine {
                errors.push(CheckError::TripLoad {
                    vehicle: d,
                    trip: k,
                    load: trip.load(),
                    limit: magazine,
                });
            }
            let mut path = vec![trip.start];
            path.extend(&trip.targets);
            path.push(trip.end);
            for w in path.windows(2) {
                route_count[d][w[0]][w[1]] += 1;
                route_count[d][w[1]][w[0]] += 1;
            }
            for &t in &trip.targets {
                visits[t] += 1;
            }
        }
    }
    for d in 0..fleet {
        if route_count[d] != count[d] {
            errors.push(CheckError::Route {
                vehicle: d,
                reason: "trips do not reproduce the edge variables".into(),
            });
        }
    }
    for t in 0..model.targets {
        let v = model.target_vertex(t);
        if visits[v] != 1 {
            errors.push(CheckError::Route {
                vehicle: sol.assignment.get(t).copied().unwrap_or(usize::MAX),
                reason: format!("target vertex {v} visited {} times", visits[v]),
            });
        }
    }

    if errors.is_empty() {
        Ok(())
    } else {
        Err(errors)
    }
}
