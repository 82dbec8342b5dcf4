#![allow(dead_code)]

use std::collections::HashMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stlfleet::mission::{Box3, MissionSpec, VehicleSpec};
use stlfleet::routing::RoutingModel;

pub fn vehicle(depot: usize, capacity: u32) -> VehicleSpec {
    VehicleSpec {
        depot,
        capacity,
        velocity_min: [-2.0; 3],
        velocity_max: [2.0; 3],
        acceleration_min: [-1.0; 3],
        acceleration_max: [1.0; 3],
        home: None,
        initial_position: None,
        initial_velocity: None,
        initial_capacity: None,
    }
}

/// Random routing instance on an integer grid (so ties are common).
pub fn random_instance(seed: u64, targets: usize, vehicles: usize, capacity: u32) -> MissionSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut used: Vec<[f64; 3]> = Vec::new();
    let mut fresh = |rng: &mut ChaCha8Rng| loop {
        let p = [
            rng.random_range(-6..=6) as f64,
            rng.random_range(-6..=6) as f64,
            rng.random_range(2..=8) as f64,
        ];
        if !used.contains(&p) {
            used.push(p);
            return p;
        }
    };
    let stations = rng.random_range(1..=2);
    let station_boxes = (0..stations)
        .map(|_| Box3::around(fresh(&mut rng), 0.3))
        .collect();
    let depots: Vec<Box3> = (0..vehicles)
        .map(|_| Box3::around(fresh(&mut rng), 0.3))
        .collect();
    let target_boxes = (0..targets)
        .map(|_| Box3::around(fresh(&mut rng), 0.3))
        .collect();
    MissionSpec {
        workspace: Box3::new([-10.0, -10.0, 0.0], [10.0, 10.0, 10.0]),
        obstacles: vec![],
        targets: target_boxes,
        stations: station_boxes,
        depots,
        vehicles: (0..vehicles).map(|d| vehicle(d, capacity)).collect(),
        horizon: 200.0,
        install_dwell: 2.0,
        refill_dwell: 1.0,
        separation: 0.5,
        sampling_period: 1.0,
        robustness_margin: 0.1,
    }
}

/// Explicit feasible plan: per vehicle, a list of trips, each
/// (start vertex, target vertices, end vertex).
pub type Plan = Vec<Vec<(usize, Vec<usize>, usize)>>;

fn path_um(model: &RoutingModel, start: usize, seq: &[usize], end: usize) -> i64 {
    let mut prev = start;
    let mut total = 0;
    for &v in seq.iter().chain(std::iter::once(&end)) {
        total += model.weight_um(prev, v);
        prev = v;
    }
    total
}

fn stations(model: &RoutingModel) -> Vec<usize> {
    (0..model.stations).map(|s| model.station_vertex(s)).collect()
}

/// Cheapest way to fly `seq` from `start` (None = any station) to any station.
fn trip_um(model: &RoutingModel, start: Option<usize>, seq: &[usize]) -> Option<(i64, usize, usize)> {
    let st = stations(model);
    let starts = match start {
        Some(s) => vec![s],
        None => st.clone(),
    };
    let mut best: Option<(i64, usize, usize)> = None;
    for &a in &starts {
        for &b in &st {
            let c = path_um(model, a, seq, b);
            if best.is_none_or(|(bc, _, _)| c < bc) {
                best = Some((c, a, b));
            }
        }
    }
    best
}

fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.is_empty() {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let x = rest.remove(i);
        for mut p in permutations(&rest) {
            p.insert(0, x);
            out.push(p);
        }
    }
    out
}

fn idle_allowed(model: &RoutingModel, d: usize) -> bool {
    model.initial_capacity[d] == 0 || model.targets < model.vehicles
}

/// Best plan for vehicle `d` serving exactly `set` (target vertices).
fn vehicle_best(model: &RoutingModel, d: usize, set: &[usize]) -> Option<(i64, Vec<(usize, Vec<usize>, usize)>)> {
    let depot = model.depot_vertex(d);
    let cap = model.capacity as usize;
    let first_cap = model.initial_capacity[d] as usize;
    if set.is_empty() {
        if !idle_allowed(model, d) {
            return None;
        }
        return stations(model)
            .into_iter()
            .map(|s| (model.weight_um(depot, s), vec![(depot, vec![], s)]))
            .min_by_key(|(c, _)| *c);
    }
    let mut best: Option<(i64, Vec<(usize, Vec<usize>, usize)>)> = None;
    let k = set.len();
    for perm in permutations(set) {
        // bit i set = trip boundary after position i
        for cuts in 0..(1u32 << (k - 1)) {
            let mut segments: Vec<Vec<usize>> = vec![vec![perm[0]]];
            for i in 1..k {
                if cuts & (1 << (i - 1)) != 0 {
                    segments.push(Vec::new());
                }
                segments.last_mut().unwrap().push(perm[i]);
            }
            for idle_first in [false, true] {
                if idle_first && !idle_allowed(model, d) {
                    continue;
                }
                if !idle_first && first_cap == 0 {
                    continue;
                }
                let mut total = 0i64;
                let mut plan = Vec::new();
                let mut ok = true;
                if idle_first {
                    let (c, s) = stations(model)
                        .into_iter()
                        .map(|s| (model.weight_um(depot, s), s))
                        .min()
                        .unwrap();
                    total += c;
                    plan.push((depot, vec![], s));
                }
                for (i, seg) in segments.iter().enumerate() {
                    let from_depot = i == 0 && !idle_first;
                    let limit = if from_depot { first_cap } else { cap };
                    if seg.len() > limit {
                        ok = false;
                        break;
                    }
                    let (c, a, b) = trip_um(model, from_depot.then_some(depot), seg).unwrap();
                    total += c;
                    plan.push((a, seg.clone(), b));
                }
                if ok && best.as_ref().is_none_or(|(bc, _)| total < *bc) {
                    best = Some((total, plan));
                }
            }
        }
    }
    best
}

/// Exhaustive optimum over assignments, orders and trip splits.
/// Returns the optimum in micrometres and, for every assignment, its best plan.
pub fn brute_force(model: &RoutingModel) -> (Option<i64>, Vec<Plan>) {
    let targets: Vec<usize> = (0..model.targets).map(|t| model.target_vertex(t)).collect();
    let fleet = model.vehicles;
    let mut cache: HashMap<(usize, Vec<usize>), Option<(i64, Vec<(usize, Vec<usize>, usize)>)>> =
        HashMap::new();
    let mut best: Option<i64> = None;
    let mut plans = Vec::new();
    let combos = fleet.pow(targets.len() as u32);
    for code in 0..combos {
        let mut sets = vec![Vec::new(); fleet];
        let mut c = code;
        for &t in &targets {
            sets[c % fleet].push(t);
            c /= fleet;
        }
        let mut total = 0i64;
        let mut plan = Vec::new();
        let mut ok = true;
        for (d, set) in sets.into_iter().enumerate() {
            let entry = cache
                .entry((d, set.clone()))
                .or_insert_with(|| vehicle_best(model, d, &set));
            match entry {
                Some((cost, p)) => {
                    total += *cost;
                    plan.push(p.clone());
                }
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            plans.push(plan);
            best = Some(best.map_or(total, |b| b.min(total)));
        }
    }
    (best, plans)
}

/// Random feasible plans (random assignment, order, splits and stations).
pub fn random_plans(model: &RoutingModel, seed: u64, count: usize) -> Vec<Plan> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let st = stations(model);
    let cap = model.capacity as usize;
    let mut out = Vec::new();
    let mut attempts = 0;
    while out.len() < count && attempts < count * 20 {
        attempts += 1;
        let mut targets: Vec<usize> = (0..model.targets).map(|t| model.target_vertex(t)).collect();
        targets.shuffle(&mut rng);
        let mut sets = vec![Vec::new(); model.vehicles];
        for t in targets {
            sets[rng.random_range(0..model.vehicles)].push(t);
        }
        let mut plan = Vec::new();
        let mut ok = true;
        for (d, set) in sets.into_iter().enumerate() {
            let depot = model.depot_vertex(d);
            let mut trips = Vec::new();
            let idle = set.is_empty() || model.initial_capacity[d] == 0 || (idle_allowed(model, d) && rng.random_bool(0.3));
            if idle {
                if !idle_allowed(model, d) {
                    ok = false;
                    break;
                }
                trips.push((depot, vec![], *st.choose(&mut rng).unwrap()));
            }
            let mut rest = set.as_slice();
            while !rest.is_empty() {
                let from_depot = trips.is_empty();
                let limit = if from_depot { model.initial_capacity[d] as usize } else { cap };
                let take = rng.random_range(1..=limit.min(rest.len()));
                let start = if from_depot { depot } else { *st.choose(&mut rng).unwrap() };
                trips.push((start, rest[..take].to_vec(), *st.choose(&mut rng).unwrap()));
                rest = &rest[take..];
            }
            plan.push(trips);
        }
        if ok {
            out.push(plan);
        }
    }
    out
}

/// Variable vector of a plan.
pub fn plan_vector(model: &RoutingModel, plan: &Plan) -> Vec<f64> {
    let mut x = vec![0.0; model.num_vars()];
    for (d, trips) in plan.iter().enumerate() {
        for (start, seq, end) in trips {
            let mut path = vec![*start];
            path.extend(seq);
            path.push(*end);
            for w in path.windows(2) {
                x[model.z_index(model.edge(w[0], w[1]), d)] += 1.0;
            }
            for &v in seq {
                x[model.y_index(model.target_of(v).unwrap(), d)] = 1.0;
            }
        }
    }
    x
}
