//! End-to-end planning: route, schedule, warm start, refine, certify.

use thiserror::Error;

use crate::mission::{compile_with_last_targets, CompiledMission, MissionError, MissionSpec};
use crate::routing::{
    build_model, extract_tours, solve, Budget, RouteSolution, RoutingError, RoutingModel,
    Schedule, SolveStatus,
};
use crate::trajectory::{
    optimize, warm_start, CertifyReport, OptimizeResult, OptimizerParams, Trajectory,
    TrajectoryError,
};

#[derive(Debug, Error)]
pub enum PlanError {
    #[error(transparent)]
    Mission(#[from] MissionError),
    #[error(transparent)]
    Routing(#[from] RoutingError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error("routing failed ({}){}", .status.name(), hint(.status))]
    NoRoutes { status: SolveStatus },
}

fn hint(status: &SolveStatus) -> String {
    match status {
        SolveStatus::Infeasible { hint } => format!(": {hint}"),
        _ => String::new(),
    }
}

#[derive(Clone, Debug, Default)]
pub struct PlanOptions {
    pub budget: Budget,
    pub optimizer: OptimizerParams,
    /// Worker threads; falls back to `PLANNER_THREADS`.
    pub threads: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct Plan {
    pub model: RoutingModel,
    pub solution: RouteSolution,
    /// Timed waypoints, possibly running past the horizon.
    pub schedule: Schedule,
    /// Horizon the schedule needs when it does not fit.
    pub required_horizon: Option<f64>,
    pub mission: CompiledMission,
    pub warm: Trajectory,
    pub optimized: OptimizeResult,
}

impl Plan {
    pub fn trajectory(&self) -> &Trajectory {
        &self.optimized.trajectory
    }

    pub fn report(&self) -> &CertifyReport {
        &self.optimized.report
    }

    /// Certified and the schedule fits the horizon.
    pub fn certified(&self) -> bool {
        self.optimized.success && self.required_horizon.is_none()
    }
}

/// Plan `spec` from scratch. A schedule that overruns the horizon still
/// yields a truncated best-effort plan with `required_horizon` set.
pub fn plan(spec: &MissionSpec, options: &PlanOptions) -> Result<Plan, PlanError> {
    crate::pool::install_with(options.threads.or_else(crate::pool::thread_cap), || {
        plan_inner(spec, options)
    })
}

fn plan_inner(spec: &MissionSpec, options: &PlanOptions) -> Result<Plan, PlanError> {
    options.optimizer.validate()?;
    let model = build_model(spec)?;
    let solution = solve(&model, options.budget);
    if !solution.status.has_routes() {
        return Err(PlanError::NoRoutes {
            status: solution.status,
        });
    }
    let (schedule, required_horizon) = match extract_tours(&solution, spec) {
        Ok(s) => (s, None),
        Err(RoutingError::ScheduleOverflow {
            required_horizon,
            schedule,
            ..
        }) => (*schedule, Some(required_horizon)),
        Err(e) => return Err(e.into()),
    };
    let mission = compile_with_last_targets(spec, &solution.last_targets(&model))?;
    let warm = warm_start(&schedule, spec)?;
    let optimized = optimize(&mission, spec, &warm, &options.optimizer)?;
    Ok(Plan {
        model,
        solution,
        schedule,
        required_horizon,
        mission,
        warm,
        optimized,
    })
}
