use serde::{Deserialize, Serialize};

use super::{Box3, MissionError, MissionSpec};
use crate::stl::{Relation, StlFormula};

const AXES: [&str; 3] = ["x", "y", "z"];

pub fn position_channels(d: usize) -> [String; 3] {
    AXES.map(|a| format!("p{d}.{a}"))
}

pub fn velocity_channels(d: usize) -> [String; 3] {
    AXES.map(|a| format!("v{d}.{a}"))
}

pub fn capacity_channel(d: usize) -> String {
    format!("c{d}")
}

/// Conjunction of the six face predicates of `region` over the position
/// channels `{prefix}.x`, `{prefix}.y`, `{prefix}.z`.
pub fn box_membership_predicates(region: &Box3, prefix: &str) -> StlFormula {
    let mut preds = Vec::with_capacity(6);
    for (j, axis) in AXES.iter().enumerate() {
        let ch = format!("{prefix}.{axis}");
        preds.push(StlFormula::ge(ch.clone(), 1.0, -region.lower[j]));
        preds.push(StlFormula::ge(ch, -1.0, region.upper[j]));
    }
    StlFormula::and(preds)
}

/// Disjunction of the six half-space exits of an obstacle.
pub fn obstacle_avoidance(region: &Box3, prefix: &str) -> StlFormula {
    let mut preds = Vec::with_capacity(6);
    for (j, axis) in AXES.iter().enumerate() {
        let ch = format!("{prefix}.{axis}");
        preds.push(StlFormula::ge(ch.clone(), -1.0, region.lower[j]));
        preds.push(StlFormula::ge(ch, 1.0, -region.upper[j]));
    }
    StlFormula::or(preds)
}

/// `||p_d - p_m|| >= threshold` on the joint signal.
pub fn separation_formula(d: usize, m: usize, threshold: f64) -> StlFormula {
    assert_ne!(d, m, "separation needs two distinct vehicles");
    StlFormula::distance(
        position_channels(d).to_vec(),
        position_channels(m).to_vec(),
        threshold,
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClauseKind {
    Safety { vehicle: usize },
    Target { target: usize },
    Refill { vehicle: usize },
    Home { vehicle: usize },
}

/// One top-level conjunct of the mission formula.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Clause {
    pub label: String,
    pub kind: ClauseKind,
    /// Preorder node id inside the compiled formula.
    pub node: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Binding {
    /// Path of the mission field providing the value.
    Field(String),
    /// Preorder node id of the generated sub-formula.
    Node(usize),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolEntry {
    pub symbol: String,
    pub binding: Binding,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompiledMission {
    pub formula: StlFormula,
    pub clauses: Vec<Clause>,
    pub symbols: Vec<SymbolEntry>,
    /// Home region per vehicle, if one could be assigned.
    pub homes: Vec<Option<Box3>>,
    /// Station index backing each home, when the home is a station.
    pub home_stations: Vec<Option<usize>>,
}

impl CompiledMission {
    pub fn clause(&self, label: &str) -> Option<&Clause> {
        self.clauses.iter().find(|c| c.label == label)
    }
}

/// Compile with homes chosen from each vehicle's start position.
pub fn compile(spec: &MissionSpec) -> Result<CompiledMission, MissionError> {
    compile_with_last_targets(spec, &vec![None; spec.vehicles.len()])
}

/// Compile the mission formula. `last_targets[d]` is the last target assigned
/// to vehicle `d` by routing; its nearest refilling station becomes the home
/// region unless the vehicle declares one explicitly.
pub fn compile_with_last_targets(
    spec: &MissionSpec,
    last_targets: &[Option<usize>],
) -> Result<CompiledMission, MissionError> {
    spec.validate()?;
    let fleet = spec.vehicles.len();
    let n = spec.steps();
    let ins = spec.install_steps();
    let rs = spec.refill_steps();
    let prefix = |d: usize| format!("p{d}");

    let mut home_stations = vec![None; fleet];
    let homes: Vec<Option<Box3>> = (0..fleet)
        .map(|d| {
            if let Some(h) = spec.vehicles[d].home {
                return Some(h);
            }
            let anchor = match last_targets.get(d).copied().flatten() {
                Some(q) => spec.targets[q].centroid(),
                None => spec.initial_position(d),
            };
            let s = spec.nearest_station(&anchor)?;
            home_stations[d] = Some(s);
            Some(spec.stations[s])
        })
        .collect();

    let mut clauses: Vec<(String, ClauseKind, StlFormula)> = Vec::new();

    for d in 0..fleet {
        let mut body = vec![box_membership_predicates(&spec.workspace, &prefix(d))];
        body.extend(spec.obstacles.iter().map(|o| obstacle_avoidance(o, &prefix(d))));
        body.extend((d + 1..fleet).map(|m| separation_formula(d, m, spec.separation)));
        clauses.push((
            format!("safety[{d}]"),
            ClauseKind::Safety { vehicle: d },
            StlFormula::always(0, n, StlFormula::and_all(body)),
        ));
    }

    for (q, target) in spec.targets.iter().enumerate() {
        let per_vehicle = (0..fleet)
            .map(|d| {
                StlFormula::always(
                    0,
                    ins,
                    StlFormula::and(vec![
                        StlFormula::indicator(capacity_channel(d), Relation::Gt, 0.0),
                        box_membership_predicates(target, &prefix(d)),
                    ]),
                )
            })
            .collect();
        clauses.push((
            format!("target[{q}]"),
            ClauseKind::Target { target: q },
            StlFormula::eventually(0, n - ins, StlFormula::or_any(per_vehicle)),
        ));
    }

    // Capacity can only reach zero through installations.
    if !spec.targets.is_empty() && !spec.stations.is_empty() {
        for d in 0..fleet {
            let per_station = spec
                .stations
                .iter()
                .map(|s| {
                    StlFormula::always(
                        0,
                        rs,
                        StlFormula::implies(
                            StlFormula::indicator(capacity_channel(d), Relation::Eq, 0.0),
                            box_membership_predicates(s, &prefix(d)),
                        ),
                    )
                })
                .collect();
            clauses.push((
                format!("refill[{d}]"),
                ClauseKind::Refill { vehicle: d },
                StlFormula::eventually(0, n - rs, StlFormula::or_any(per_station)),
            ));
        }
    }

    if n >= 2 {
        for (d, home) in homes.iter().enumerate() {
            let Some(home) = home else { continue };
            let inside = box_membership_predicates(home, &prefix(d));
            clauses.push((
                format!("home[{d}]"),
                ClauseKind::Home { vehicle: d },
                StlFormula::always(
                    1,
                    n - 1,
                    StlFormula::implies(inside.clone(), StlFormula::after(1, inside)),
                ),
            ));
        }
    }

    let formula = StlFormula::and(clauses.iter().map(|c| c.2.clone()).collect());
    let ids = formula.child_ids(0);
    let clauses: Vec<Clause> = clauses
        .into_iter()
        .zip(&ids)
        .map(|((label, kind, _), &node)| Clause { label, kind, node })
        .collect();

    let symbols = symbol_table(spec, &formula, &clauses, &home_stations);
    Ok(CompiledMission {
        formula,
        clauses,
        symbols,
        homes,
        home_stations,
    })
}

fn symbol_table(
    spec: &MissionSpec,
    formula: &StlFormula,
    clauses: &[Clause],
    home_stations: &[Option<usize>],
) -> Vec<SymbolEntry> {
    let field = |symbol: String, path: String| SymbolEntry {
        symbol,
        binding: Binding::Field(path),
    };
    let node = |symbol: String, id: usize| SymbolEntry {
        symbol,
        binding: Binding::Node(id),
    };
    let mut out = vec![
        field("horizon".into(), "horizon".into()),
        field("install_dwell".into(), "install_dwell".into()),
        field("refill_dwell".into(), "refill_dwell".into()),
        field("separation_threshold".into(), "separation".into()),
        field("robustness_margin".into(), "robustness_margin".into()),
        field("workspace_region".into(), "workspace".into()),
    ];
    for q in 0..spec.obstacles.len() {
        out.push(field(format!("obstacle_region[{q}]"), format!("obstacles[{q}]")));
    }
    for q in 0..spec.targets.len() {
        out.push(field(format!("target_region[{q}]"), format!("targets[{q}]")));
    }
    for q in 0..spec.stations.len() {
        out.push(field(format!("station_region[{q}]"), format!("stations[{q}]")));
    }
    for d in 0..spec.vehicles.len() {
        out.push(field(format!("capacity[{d}]"), format!("vehicles[{d}].capacity")));
        match (spec.vehicles[d].home, home_stations[d]) {
            (Some(_), _) => out.push(field(format!("home_region[{d}]"), format!("vehicles[{d}].home"))),
            (None, Some(s)) => out.push(field(format!("home_region[{d}]"), format!("stations[{s}]"))),
            (None, None) => {}
        }
    }

    let root_children = formula.children();
    for (clause, sub) in clauses.iter().zip(root_children) {
        match clause.kind {
            ClauseKind::Safety { vehicle: d } => {
                // always -> (and ->)? [workspace, obstacles..., separations...]
                let body_id = clause.node + 1;
                let body = sub.children()[0];
                let parts = match body {
                    StlFormula::And { .. } if !spec.obstacles.is_empty() || d + 1 < spec.vehicles.len() => {
                        body.child_ids(body_id)
                    }
                    _ => vec![body_id],
                };
                out.push(node(format!("workspace_membership[{d}]"), parts[0]));
                let mut i = 1;
                for q in 0..spec.obstacles.len() {
                    out.push(node(format!("obstacle_avoidance[{d}][{q}]"), parts[i]));
                    i += 1;
                }
                for m in d + 1..spec.vehicles.len() {
                    out.push(node(format!("separation[{d},{m}]"), parts[i]));
                    i += 1;
                }
            }
            ClauseKind::Target { target } => {
                out.push(node(format!("target_visit[{target}]"), clause.node))
            }
            ClauseKind::Refill { vehicle } => {
                out.push(node(format!("refill[{vehicle}]"), clause.node))
            }
            ClauseKind::Home { vehicle } => {
                out.push(node(format!("home_absorption[{vehicle}]"), clause.node))
            }
        }
    }
    out
}
