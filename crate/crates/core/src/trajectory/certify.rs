use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Trajectory, TrajectoryError};
use crate::mission::CompiledMission;
use crate::stl::Evaluator;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClauseRobustness {
    pub label: String,
    pub node: usize,
    pub exact: f64,
    pub smooth: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertifyReport {
    pub exact: f64,
    pub smooth: f64,
    pub beta: f64,
    pub epsilon: f64,
    /// Exact robustness reaches the margin.
    pub satisfied: bool,
    pub clauses: Vec<ClauseRobustness>,
    /// Label of the clause with the smallest exact robustness.
    pub binding: Option<String>,
    /// Exact value of every node evaluated at the start of the mission.
    pub node_values: BTreeMap<usize, f64>,
}

impl CertifyReport {
    pub fn binding_clause(&self) -> Option<&ClauseRobustness> {
        let label = self.binding.as_ref()?;
        self.clauses.iter().find(|c| &c.label == label)
    }
}

/// Exact and smooth robustness of the mission formula on `traj`, broken
/// down by top-level clause.
pub fn certify(
    mission: &CompiledMission,
    traj: &Trajectory,
    beta: f64,
    epsilon: f64,
) -> Result<CertifyReport, TrajectoryError> {
    let signal = traj.to_signal()?;
    let report = Evaluator::for_signal(&mission.formula, &signal)?.report(&signal, 0, beta)?;
    let children = mission.formula.children();
    let mut clauses = Vec::with_capacity(mission.clauses.len());
    for (clause, formula) in mission.clauses.iter().zip(children) {
        let ev = Evaluator::for_signal(formula, &signal)?;
        clauses.push(ClauseRobustness {
            label: clause.label.clone(),
            node: clause.node,
            exact: ev.exact(&signal, 0)?,
            smooth: ev.smooth(&signal, 0, beta)?,
        });
    }
    let binding = clauses
        .iter()
        .fold(None::<&ClauseRobustness>, |best, c| match best {
            Some(b) if b.exact <= c.exact => Some(b),
            _ => Some(c),
        })
        .map(|c| c.label.clone());
    Ok(CertifyReport {
        exact: report.exact,
        smooth: report.smooth,
        beta,
        epsilon,
        satisfied: report.exact >= epsilon,
        clauses,
        binding,
        node_values: report.node_values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mission::compile;
    use crate::mission::fixtures::*;
    use crate::trajectory::propagate;

    fn hold(spec: &crate::mission::MissionSpec, at: [f64; 3]) -> Trajectory {
        let mut spec = spec.clone();
        spec.vehicles[0].initial_position = Some(at);
        propagate(&spec, vec![vec![[0.0; 3]; spec.steps()]]).unwrap()
    }

    #[test]
    fn overall_is_min_of_clauses() {
        let mut spec = line_spec();
        spec.targets.clear();
        let mission = compile(&spec).unwrap();
        let traj = hold(&spec, [0.0, 0.0, 5.0]);
        let rep = certify(&mission, &traj, 10.0, 0.1).unwrap();
        let min = rep.clauses.iter().map(|c| c.exact).fold(f64::INFINITY, f64::min);
        assert_eq!(rep.exact, min);
        assert!(rep.exact > 0.0 && rep.satisfied);
        assert!(rep.smooth <= rep.exact);
    }

    #[test]
    fn obstacle_step_makes_safety_negative() {
        let mut spec = line_spec();
        spec.targets.clear();
        spec.obstacles = vec![crate::mission::Box3::around([4.0, 0.0, 5.0], 1.0)];
        let mission = compile(&spec).unwrap();
        let mut traj = hold(&spec, [0.0, 0.0, 5.0]);
        traj.vehicles[0].position[3] = [4.0, 0.0, 5.0];
        let rep = certify(&mission, &traj, 10.0, 0.1).unwrap();
        let safety = rep.clauses.iter().find(|c| c.label == "safety[0]").unwrap();
        assert_eq!(safety.exact, -1.0);
        assert_eq!(rep.binding.as_deref(), Some("safety[0]"));
        assert!(!rep.satisfied);
    }

    #[test]
    fn short_trajectory_is_a_horizon_error() {
        let spec = line_spec();
        let mission = compile(&spec).unwrap();
        let mut short = spec.clone();
        short.horizon = 4.0;
        let traj = hold(&short, [0.0, 0.0, 5.0]);
        assert!(certify(&mission, &traj, 10.0, 0.1).is_err());
    }
}
