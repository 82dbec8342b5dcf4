use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::time::{Duration, Instant};

use serde::Serialize;

use super::simplex::{self, LpOutcome, Row, Sense};
use super::{
    from_um, lower_bound_h, EdgeUse, RouteSolution, RoutingModel, SolveStatus, Trip,
    VehicleRoute,
};

const INT_TOL: f64 = 1e-6;
const CUT_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Budget {
    pub node_limit: usize,
    pub time_limit: Duration,
}

impl Default for Budget {
    fn default() -> Self {
        Self {
            node_limit: 100_000,
            time_limit: Duration::from_secs(60),
        }
    }
}

/// Lazily generated inequality.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Cut {
    /// Edges leaving the target set `targets` (vertex ids) number at least
    /// `2 * ceil(|S| / capacity)`.
    Capacity { targets: Vec<usize> },
    /// Vehicle `vehicle` cannot carry all of `targets` on its first trip:
    /// depot edges into `S` plus edges inside `S` are at most `|S| - 1`.
    InitialLoad { vehicle: usize, targets: Vec<usize> },
}

impl Cut {
    pub fn row(&self, model: &RoutingModel) -> Row {
        match self {
            Cut::Capacity { targets } => {
                let inside: HashSet<usize> = targets.iter().copied().collect();
                let mut coeffs = Vec::new();
                for &i in targets {
                    for v in 0..model.vertices.len() {
                        if inside.contains(&v) {
                            continue;
                        }
                        let e = model.edge(i, v);
                        for d in 0..model.vehicles {
                            if model.edge_upper[e][d] > 0 {
                                coeffs.push((model.z_index(e, d), 1.0));
                            }
                        }
                    }
                }
                let h = lower_bound_h(targets.len(), model.capacity as usize);
                Row::new(coeffs, Sense::Ge, 2.0 * h as f64)
            }
            Cut::InitialLoad { vehicle, targets } => {
                let d = *vehicle;
                let depot = model.depot_vertex(d);
                let mut coeffs = Vec::new();
                for (a, &i) in targets.iter().enumerate() {
                    coeffs.push((model.z_index(model.edge(depot, i), d), 1.0));
                    for &j in &targets[a + 1..] {
                        coeffs.push((model.z_index(model.edge(i, j), d), 1.0));
                    }
                }
                Row::new(coeffs, Sense::Le, targets.len() as f64 - 1.0)
            }
        }
    }

    /// Signed slack of the cut at `x` (negative when violated).
    pub fn slack(&self, model: &RoutingModel, x: &[f64]) -> f64 {
        let row = self.row(model);
        let lhs: f64 = row.coeffs.iter().map(|&(j, c)| c * x[j]).sum();
        match row.sense {
            Sense::Ge => lhs - row.rhs,
            Sense::Le => row.rhs - lhs,
            Sense::Eq => -(lhs - row.rhs).abs(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NodeRecord {
    pub parent_bound: f64,
    pub bound: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SolveStats {
    pub nodes: usize,
    pub lp_solves: usize,
    pub root_bound: f64,
    pub cuts: Vec<Cut>,
    pub tree: Vec<NodeRecord>,
}

struct Node {
    bound: f64,
    seq: u64,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // BinaryHeap is a max-heap: smallest bound, then oldest node, pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

struct Search<'a> {
    model: &'a RoutingModel,
    cost: Vec<f64>,
    rows: Vec<Row>,
    pool: HashSet<Cut>,
    stats: SolveStats,
    incumbent: Option<(i64, Vec<u8>)>,
    /// Set when some node could not be resolved (LP iteration limit).
    lossy: bool,
}

enum NodeResult {
    Pruned,
    Integral,
    Branch(f64, usize, f64),
}

/// Base constraint families, tagged so the root can explain infeasibility.
fn base_rows(model: &RoutingModel) -> Vec<(&'static str, Row)> {
    let mut rows = Vec::new();
    let fleet = model.vehicles;
    let n = model.vertices.len();
    for t in 0..model.targets {
        let j = model.target_vertex(t);
        let mut coeffs = Vec::new();
        for i in (0..n).filter(|&i| i != j) {
            let e = model.edge(i, j);
            for d in 0..fleet {
                coeffs.push((model.z_index(e, d), 1.0));
            }
        }
        rows.push(("target degree", Row::new(coeffs, Sense::Eq, 2.0)));
    }
    for t in 0..model.targets {
        let j = model.target_vertex(t);
        for d in 0..fleet {
            let mut coeffs: Vec<(usize, f64)> = (0..n)
                .filter(|&i| i != j)
                .map(|i| (model.z_index(model.edge(i, j), d), 1.0))
                .collect();
            coeffs.push((model.y_index(t, d), -2.0));
            rows.push(("assignment linkage", Row::new(coeffs, Sense::Eq, 0.0)));
        }
    }
    for d in 0..fleet {
        let depot = model.depot_vertex(d);
        let coeffs = (0..n)
            .filter(|&i| i != depot)
            .map(|i| (model.z_index(model.edge(depot, i), d), 1.0))
            .collect();
        rows.push(("depot departure", Row::new(coeffs, Sense::Eq, 1.0)));
    }
    rows
}

fn initial_bounds(model: &RoutingModel) -> (Vec<f64>, Vec<f64>) {
    let lower = vec![0.0; model.num_vars()];
    let mut upper = vec![1.0; model.num_vars()];
    for e in 0..model.edges.len() {
        for d in 0..model.vehicles {
            upper[model.z_index(e, d)] = f64::from(model.edge_upper[e][d]);
        }
    }
    (lower, upper)
}

fn objective(model: &RoutingModel) -> Vec<f64> {
    let mut cost = vec![0.0; model.num_vars()];
    for e in 0..model.edges.len() {
        for d in 0..model.vehicles {
            cost[model.z_index(e, d)] = from_um(model.weights_um[e]);
        }
    }
    cost
}

fn is_integral(v: f64) -> bool {
    (v - v.round()).abs() <= INT_TOL
}

impl Search<'_> {
    fn add_cut(&mut self, cut: Cut) -> bool {
        if self.pool.insert(cut.clone()) {
            self.rows.push(cut.row(self.model));
            self.stats.cuts.push(cut);
            true
        } else {
            false
        }
    }

    fn separate(&self, x: &[f64], integral: bool) -> Vec<Cut> {
        let model = self.model;
        let fleet = model.vehicles;
        let nt = model.targets;
        let load = |i: usize, j: usize| -> f64 {
            let e = model.edge(i, j);
            (0..fleet).map(|d| x[model.z_index(e, d)]).sum()
        };

        // Components of the target-target support graph.
        let mut parent: Vec<usize> = (0..nt).collect();
        fn find(p: &mut [usize], mut a: usize) -> usize {
            while p[a] != a {
                p[a] = p[p[a]];
                a = p[a];
            }
            a
        }
        for a in 0..nt {
            for b in a + 1..nt {
                if load(model.target_vertex(a), model.target_vertex(b)) > CUT_TOL {
                    let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                    if ra != rb {
                        parent[ra.max(rb)] = ra.min(rb);
                    }
                }
            }
        }
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); nt];
        for t in 0..nt {
            let r = find(&mut parent, t);
            groups[r].push(model.target_vertex(t));
        }

        let mut cuts = Vec::new();
        for set in groups.into_iter().filter(|g| !g.is_empty()) {
            let cut = Cut::Capacity { targets: set };
            if cut.slack(model, x) < -CUT_TOL {
                cuts.push(cut);
            }
        }

        if integral {
            for d in 0..fleet {
                let trip = first_trip(model, x, d);
                if trip.len() > model.initial_capacity[d] as usize {
                    let mut targets = trip;
                    targets.sort_unstable();
                    let cut = Cut::InitialLoad {
                        vehicle: d,
                        targets,
                    };
                    if cut.slack(model, x) < -CUT_TOL {
                        cuts.push(cut);
                    }
                }
            }
        }
        cuts
    }

    fn process(&mut self, lower: &[f64], upper: &[f64]) -> NodeResult {
        loop {
            self.stats.lp_solves += 1;
            let (x, value) = match simplex::solve(&self.cost, lower, upper, &self.rows) {
                LpOutcome::Optimal { x, objective } => (x, objective),
                LpOutcome::Infeasible => return NodeResult::Pruned,
                LpOutcome::Unbounded | LpOutcome::IterationLimit => {
                    self.lossy = true;
                    return NodeResult::Pruned;
                }
            };
            if let Some((best, _)) = &self.incumbent {
                if value * 1e6 >= *best as f64 - 0.5 {
                    return NodeResult::Pruned;
                }
            }
            let integral = x.iter().all(|&v| is_integral(v));
            let z_integral = x[..self.model.num_z()].iter().all(|&v| is_integral(v));
            let mut added = false;
            for cut in self.separate(&x, z_integral) {
                added |= self.add_cut(cut);
            }
            if added {
                continue;
            }
            self.stats.tree.last_mut().unwrap().bound = value;
            if integral {
                let z: Vec<u8> = x.iter().map(|v| v.round() as u8).collect();
                let total: i64 = (0..self.model.edges.len())
                    .map(|e| {
                        (0..self.model.vehicles)
                            .map(|d| i64::from(z[self.model.z_index(e, d)]))
                            .sum::<i64>()
                            * self.model.weights_um[e]
                    })
                    .sum();
                if self.incumbent.as_ref().is_none_or(|(best, _)| total < *best) {
                    self.incumbent = Some((total, z));
                }
                return NodeResult::Integral;
            }
            let var = branch_variable(self.model, &x);
            return NodeResult::Branch(value, var, x[var]);
        }
    }
}

/// Most fractional variable, z before y, lowest index on ties.
fn branch_variable(model: &RoutingModel, x: &[f64]) -> usize {
    let pick = |range: std::ops::Range<usize>| -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for j in range {
            let f = x[j] - x[j].floor();
            let score = f.min(1.0 - f);
            if score > INT_TOL && best.is_none_or(|(_, s)| score > s + 1e-12) {
                best = Some((j, score));
            }
        }
        best.map(|(j, _)| j)
    };
    pick(0..model.num_z())
        .or_else(|| pick(model.num_z()..model.num_vars()))
        .expect("fractional solution has a fractional variable")
}

/// Targets (vertex ids, in visiting order) on vehicle `d`'s first trip.
fn first_trip(model: &RoutingModel, x: &[f64], d: usize) -> Vec<usize> {
    let n = model.vertices.len();
    let used = |i: usize, j: usize| x[model.z_index(model.edge(i, j), d)].round() as i64;
    let depot = model.depot_vertex(d);
    let mut trip = Vec::new();
    let mut prev = depot;
    let Some(mut cur) = (0..n).find(|&v| v != depot && model.target_of(v).is_some() && used(depot, v) > 0)
    else {
        return trip;
    };
    loop {
        trip.push(cur);
        let next = (0..n).find(|&v| {
            v != cur && v != prev && model.target_of(v).is_some() && !trip.contains(&v) && used(cur, v) > 0
        });
        match next {
            Some(v) => {
                prev = cur;
                cur = v;
            }
            None => return trip,
        }
    }
}

/// Root-level diagnosis: which constraint family makes the relaxation infeasible.
fn infeasibility_hint(model: &RoutingModel, cost: &[f64]) -> String {
    let (lower, upper) = initial_bounds(model);
    let tagged = base_rows(model);
    for family in ["depot departure", "assignment linkage", "target degree"] {
        let rows: Vec<Row> = tagged
            .iter()
            .filter(|(f, _)| *f != family)
            .map(|(_, r)| r.clone())
            .collect();
        if matches!(
            simplex::solve(cost, &lower, &upper, &rows),
            LpOutcome::Optimal { .. }
        ) {
            return format!("relaxation becomes feasible without the {family} constraints");
        }
    }
    "relaxation stays infeasible under every single family removal".to_string()
}

pub fn solve(model: &RoutingModel, budget: Budget) -> RouteSolution {
    if model.targets == 0 {
        return RouteSolution {
            status: SolveStatus::Optimal,
            objective: 0.0,
            objective_um: 0,
            bound: 0.0,
            routes: (0..model.vehicles)
                .map(|d| VehicleRoute {
                    vehicle: d,
                    trips: Vec::new(),
                })
                .collect(),
            edges: Vec::new(),
            assignment: Vec::new(),
            stats: SolveStats::default(),
        };
    }

    let start = Instant::now();
    let cost = objective(model);
    let mut search = Search {
        model,
        cost: cost.clone(),
        rows: base_rows(model).into_iter().map(|(_, r)| r).collect(),
        pool: HashSet::new(),
        stats: SolveStats::default(),
        incumbent: None,
        lossy: false,
    };

    let (lower, upper) = initial_bounds(model);
    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    heap.push(Node {
        bound: f64::NEG_INFINITY,
        seq,
        lower,
        upper,
    });
    let mut exhausted = false;
    let mut root_infeasible = false;

    while let Some(node) = heap.pop() {
        if let Some((best, _)) = &search.incumbent {
            if node.bound * 1e6 >= *best as f64 - 0.5 {
                continue;
            }
        }
        if search.stats.nodes >= budget.node_limit || start.elapsed() >= budget.time_limit {
            heap.push(node);
            exhausted = true;
            break;
        }
        search.stats.nodes += 1;
        search.stats.tree.push(NodeRecord {
            parent_bound: node.bound,
            bound: f64::INFINITY,
        });
        let result = search.process(&node.lower, &node.upper);
        if search.stats.nodes == 1 {
            let root = search.stats.tree[0].bound;
            search.stats.root_bound = root;
            if matches!(result, NodeResult::Pruned) && root.is_infinite() && !search.lossy {
                root_infeasible = true;
            }
        }
        if let NodeResult::Branch(bound, var, value) = result {
            let mut down_upper = node.upper.clone();
            down_upper[var] = value.floor();
            let mut up_lower = node.lower.clone();
            up_lower[var] = value.ceil();
            seq += 1;
            heap.push(Node {
                bound,
                seq,
                lower: node.lower,
                upper: down_upper,
            });
            seq += 1;
            heap.push(Node {
                bound,
                seq,
                lower: up_lower,
                upper: node.upper,
            });
        }
    }

    let open_bound = heap.iter().map(|n| n.bound).fold(f64::INFINITY, f64::min);
    let Some((best, z)) = search.incumbent.take() else {
        let status = if exhausted || search.lossy {
            SolveStatus::BudgetExhausted
        } else if root_infeasible {
            SolveStatus::Infeasible {
                hint: infeasibility_hint(model, &cost),
            }
        } else {
            SolveStatus::Infeasible {
                hint: "relaxation is feasible but no integral plan meets the capacity constraints"
                    .to_string(),
            }
        };
        return RouteSolution {
            status,
            objective: f64::INFINITY,
            objective_um: i64::MAX,
            bound: if exhausted { open_bound } else { f64::INFINITY },
            routes: Vec::new(),
            edges: Vec::new(),
            assignment: Vec::new(),
            stats: search.stats,
        };
    };

    let objective = from_um(best);
    let bound = open_bound.min(objective);
    let status = if exhausted || search.lossy {
        SolveStatus::Feasible {
            gap: (objective - bound) / objective.max(1e-9),
        }
    } else {
        SolveStatus::Optimal
    };
    let (routes, edges, assignment) = decode(model, &z);
    RouteSolution {
        status,
        objective,
        objective_um: best,
        bound,
        routes,
        edges,
        assignment,
        stats: search.stats,
    }
}

/// Turn an integral `z, y` vector into ordered routes.
fn decode(model: &RoutingModel, z: &[u8]) -> (Vec<VehicleRoute>, Vec<EdgeUse>, Vec<usize>) {
    let n = model.vertices.len();
    let mut edges: Vec<EdgeUse> = Vec::new();
    for (e, &(i, j)) in model.edges.iter().enumerate() {
        for d in 0..model.vehicles {
            let count = z[model.z_index(e, d)];
            if count > 0 {
                edges.push(EdgeUse {
                    i,
                    j,
                    vehicle: d,
                    count,
                });
            }
        }
    }
    let assignment = (0..model.targets)
        .map(|t| {
            (0..model.vehicles)
                .find(|&d| z[model.y_index(t, d)] == 1)
                .expect("every target is assigned")
        })
        .collect();

    let routes = (0..model.vehicles)
        .map(|d| {
            let mut left = vec![vec![0u8; n]; n];
            for u in edges.iter().filter(|u| u.vehicle == d) {
                left[u.i][u.j] = u.count;
                left[u.j][u.i] = u.count;
            }
            let walk = |left: &mut Vec<Vec<u8>>, from: usize, to: usize| -> Trip {
                let mut targets = Vec::new();
                let mut cur = to;
                left[from][cur] -= 1;
                left[cur][from] -= 1;
                while model.target_of(cur).is_some() {
                    targets.push(cur);
                    let next = (0..n)
                        .find(|&v| left[cur][v] > 0)
                        .expect("target degree is two");
                    left[cur][next] -= 1;
                    left[next][cur] -= 1;
                    cur = next;
                }
                Trip {
                    start: from,
                    targets,
                    end: cur,
                }
            };

            let depot = model.depot_vertex(d);
            let mut trips = Vec::new();
            if let Some(first) = (0..n).find(|&v| left[depot][v] > 0) {
                trips.push(walk(&mut left, depot, first));
            }
            let mut pending = Vec::new();
            for s in 0..model.stations {
                let sv = model.station_vertex(s);
                while let Some(t) = (0..n).find(|&v| left[sv][v] > 0) {
                    pending.push(walk(&mut left, sv, t));
                }
            }
            // Chain trips so each starts where the previous ended when possible.
            while !pending.is_empty() {
                let here = trips.last().map(|t: &Trip| t.end);
                let k = pending
                    .iter()
                    .position(|t| Some(t.start) == here || Some(t.end) == here)
                    .unwrap_or(0);
                let mut trip = pending.remove(k);
                if Some(trip.start) != here && Some(trip.end) == here {
                    trip.targets.reverse();
                    std::mem::swap(&mut trip.start, &mut trip.end);
                }
                trips.push(trip);
            }
            for trip in &mut trips {
                earliest_service_order(model, trip);
            }
            VehicleRoute { vehicle: d, trips }
        })
        .collect();

    // Rebuild the edge list from the reordered trips.
    let mut counts = std::collections::BTreeMap::new();
    for route in &routes {
        let route: &VehicleRoute = route;
        for trip in &route.trips {
            let mut path = vec![trip.start];
            path.extend(&trip.targets);
            path.push(trip.end);
            for w in path.windows(2) {
                let key = (w[0].min(w[1]), w[0].max(w[1]), route.vehicle);
                *counts.entry(key).or_insert(0u8) += 1;
            }
        }
    }
    let edges = counts
        .into_iter()
        .map(|((i, j, vehicle), count)| EdgeUse {
            i,
            j,
            vehicle,
            count,
        })
        .collect();
    (routes, edges, assignment)
}

const MAX_REORDER: usize = 7;

/// Among orderings of a trip's targets with exactly the same length, keep
/// the one that serves targets soonest (smallest sum of distances flown
/// before each arrival). Ties keep the earlier permutation.
fn earliest_service_order(model: &RoutingModel, trip: &mut Trip) {
    let k = trip.targets.len();
    if k < 2 || k > MAX_REORDER {
        return;
    }
    let score = |order: &[usize]| -> (i64, i64) {
        let mut flown = 0i64;
        let mut latency = 0i64;
        let mut prev = trip.start;
        for &v in order {
            flown += model.weight_um(prev, v);
            latency += flown;
            prev = v;
        }
        (flown + model.weight_um(prev, trip.end), latency)
    };
    let (length, mut best_latency) = score(&trip.targets);
    let mut best = trip.targets.clone();
    let mut order = trip.targets.clone();
    order.sort_unstable();
    loop {
        let (l, lat) = score(&order);
        if l == length && lat < best_latency {
            best_latency = lat;
            best = order.clone();
        }
        if !next_permutation(&mut order) {
            break;
        }
    }
    trip.targets = best;
}

fn next_permutation(v: &mut [usize]) -> bool {
    let Some(i) = (1..v.len()).rev().find(|&i| v[i - 1] < v[i]) else {
        return false;
    };
    let j = (i..v.len()).rev().find(|&j| v[j] > v[i - 1]).unwrap();
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}
