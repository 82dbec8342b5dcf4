use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use stlfleet::io::{self, MissionDocument};
use stlfleet::mission::{compile_with_last_targets, MissionSpec};
use stlfleet::plan::{plan, Plan, PlanError, PlanOptions};
use stlfleet::replan::{replan, simulate, FailureEvent, HorizonShortfall, ReplanOutcome};
use stlfleet::routing::{
    build_model, extract_tours, solve, verify_solution, Budget, RouteSolution, RoutingError,
    RoutingModel, Schedule, Vertex,
};
use stlfleet::trajectory::{
    certify, last_serviced, read_csv, write_csv, CertifyReport, ClauseRobustness, OptimizerParams,
    StartSummary, Trajectory,
};

const CERTIFIED: u8 = 0;
const INPUT_ERROR: u8 = 1;
const BEST_EFFORT: u8 = 2;

/// Plan fleet trajectories that maximise STL robustness.
///
/// Exit status: 0 certified, 2 best effort (plan written but not
/// certified), 1 input error.
#[derive(Parser)]
#[command(name = "stlfleet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Route, warm start, optimise and certify a mission.
    Plan {
        mission: PathBuf,
        #[command(flatten)]
        flags: Flags,
    },
    /// Plan, inject failure events, and replan the rest of the mission.
    Replay {
        mission: PathBuf,
        /// Event script (`step,vehicle,mode`); defaults to the mission's `events`.
        #[arg(long)]
        events: Option<PathBuf>,
        #[command(flatten)]
        flags: Flags,
    },
    /// Certify an existing trajectory CSV against the mission formula.
    Monitor {
        mission: PathBuf,
        trajectory: PathBuf,
        #[command(flatten)]
        flags: Flags,
    },
    /// Solve the routing problem only.
    Route {
        mission: PathBuf,
        #[command(flatten)]
        flags: Flags,
    },
}

#[derive(Args, Clone, Debug)]
struct Flags {
    /// Seed for the perturbed optimizer starts.
    #[arg(long)]
    seed: Option<u64>,
    /// Soft min/max temperature.
    #[arg(long)]
    beta: Option<f64>,
    /// Required exact robustness (defaults to the mission's margin).
    #[arg(long)]
    epsilon: Option<f64>,
    /// Sampling period in seconds, overriding the mission file.
    #[arg(long)]
    dt: Option<f64>,
    /// Number of optimizer starts.
    #[arg(long)]
    starts: Option<usize>,
    /// Branch-and-bound node limit.
    #[arg(long)]
    node_limit: Option<usize>,
    /// Branch-and-bound time limit in seconds.
    #[arg(long)]
    time_limit: Option<f64>,
    /// Directory for output artifacts.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

/// Input problems exit with status 1; everything else is a best-effort failure.
#[derive(Debug)]
struct InputError(anyhow::Error);

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:#}", self.0)
    }
}

impl std::error::Error for InputError {}

fn input<T>(r: Result<T>) -> Result<T> {
    r.map_err(|e| InputError(e).into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) if e.is::<InputError>() => {
            eprintln!("error: {e}");
            ExitCode::from(INPUT_ERROR)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(BEST_EFFORT)
        }
    }
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Plan { mission, flags } => {
            let doc = load(&mission, &flags)?;
            cmd_plan(&doc, &flags)
        }
        Command::Replay {
            mission,
            events,
            flags,
        } => {
            let mut doc = load(&mission, &flags)?;
            if let Some(path) = events {
                let text = input(
                    fs::read_to_string(&path).with_context(|| format!("reading {}", path.display())),
                )?;
                doc.events = input(io::read_events_csv(&text).map_err(Into::into))?;
                if let Err(errs) = io::check_events(&doc.events, &doc.spec) {
                    return Err(InputError(anyhow::anyhow!("events: {}", errs.join("; "))).into());
                }
            }
            cmd_replay(&doc, &flags)
        }
        Command::Monitor {
            mission,
            trajectory,
            flags,
        } => {
            let doc = load(&mission, &flags)?;
            cmd_monitor(&doc, &trajectory, &flags)
        }
        Command::Route { mission, flags } => {
            let doc = load(&mission, &flags)?;
            cmd_route(&doc, &flags)
        }
    }
}

fn load(path: &Path, flags: &Flags) -> Result<MissionDocument> {
    let text = input(fs::read_to_string(path).with_context(|| format!("reading {}", path.display())))?;
    let mut doc = input(io::parse_mission(&text).map_err(Into::into))?;
    if let Some(dt) = flags.dt {
        doc.spec.sampling_period = dt;
        input(doc.spec.validate().map_err(Into::into))?;
        if let Err(errs) = io::check_events(&doc.events, &doc.spec) {
            return Err(InputError(anyhow::anyhow!("events: {}", errs.join("; "))).into());
        }
    }
    let params = optimizer_params(&doc, flags);
    input(params.validate().map_err(Into::into))?;
    if let Some(t) = flags.time_limit {
        if !(t > 0.0 && t.is_finite()) {
            return Err(InputError(anyhow::anyhow!("--time-limit must be positive")).into());
        }
    }
    Ok(doc)
}

fn optimizer_params(doc: &MissionDocument, flags: &Flags) -> OptimizerParams {
    let mut p = doc.optimizer.clone().unwrap_or_default();
    if let Some(s) = flags.seed {
        p.seed = s;
    }
    if let Some(b) = flags.beta {
        p.beta = b;
    }
    if let Some(e) = flags.epsilon {
        p.epsilon = Some(e);
    }
    if let Some(n) = flags.starts {
        p.starts = n;
    }
    p
}

fn options(doc: &MissionDocument, flags: &Flags) -> PlanOptions {
    let mut budget = Budget::default();
    if let Some(n) = flags.node_limit {
        budget.node_limit = n;
    }
    if let Some(t) = flags.time_limit {
        budget.time_limit = Duration::from_secs_f64(t);
    }
    PlanOptions {
        budget,
        optimizer: optimizer_params(doc, flags),
        threads: None,
    }
}

fn out_dir(flags: &Flags) -> Result<&Path> {
    fs::create_dir_all(&flags.out_dir)
        .with_context(|| format!("creating {}", flags.out_dir.display()))?;
    Ok(&flags.out_dir)
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    write(dir, name, &io::to_json(value)?)
}

fn write_traj(dir: &Path, name: &str, traj: &Trajectory) -> Result<()> {
    let mut buf = Vec::new();
    write_csv(traj, &mut buf)?;
    write(dir, name, std::str::from_utf8(&buf)?)
}

#[derive(Serialize)]
struct RouteDocument<'a> {
    #[serde(flatten)]
    solution: &'a RouteSolution,
    vertices: &'a [Vertex],
    nodes: usize,
    lp_solves: usize,
    root_bound: f64,
    cuts: usize,
    warnings: &'a [String],
    #[serde(skip_serializing_if = "Option::is_none")]
    schedule: Option<&'a Schedule>,
    #[serde(skip_serializing_if = "Option::is_none")]
    required_horizon: Option<f64>,
}

fn route_document<'a>(
    model: &'a RoutingModel,
    solution: &'a RouteSolution,
    schedule: Option<&'a Schedule>,
    required_horizon: Option<f64>,
) -> RouteDocument<'a> {
    RouteDocument {
        solution,
        vertices: &model.vertices,
        nodes: solution.stats.nodes,
        lp_solves: solution.stats.lp_solves,
        root_bound: solution.stats.root_bound,
        cuts: solution.stats.cuts.len(),
        warnings: &model.warnings,
        schedule,
        required_horizon,
    }
}

#[derive(Serialize)]
struct Robustness<'a> {
    exact: f64,
    smooth: f64,
    beta: f64,
    epsilon: f64,
    satisfied: bool,
    binding: Option<&'a str>,
    clauses: &'a [ClauseRobustness],
}

impl<'a> From<&'a CertifyReport> for Robustness<'a> {
    fn from(r: &'a CertifyReport) -> Self {
        Self {
            exact: r.exact,
            smooth: r.smooth,
            beta: r.beta,
            epsilon: r.epsilon,
            satisfied: r.satisfied,
            binding: r.binding.as_deref(),
            clauses: &r.clauses,
        }
    }
}

#[derive(Serialize)]
struct Checks {
    dynamics_residual: f64,
    accelerations_within_bounds: bool,
    velocity_excess: f64,
    min_separation: f64,
}

fn checks(traj: &Trajectory, spec: &MissionSpec) -> Checks {
    Checks {
        dynamics_residual: traj.dynamics_residual(),
        accelerations_within_bounds: traj.accelerations_within(spec),
        velocity_excess: traj.velocity_violation(spec),
        min_separation: traj
            .min_separation()
            .into_iter()
            .fold(f64::INFINITY, f64::min),
    }
}

#[derive(Serialize)]
struct PlanReport<'a> {
    certified: bool,
    routing_status: &'static str,
    objective: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    required_horizon: Option<f64>,
    robustness: Robustness<'a>,
    warm_start_exact: f64,
    winning_start: usize,
    starts: &'a [StartSummary],
    checks: Checks,
}

fn plan_report<'a>(p: &'a Plan, spec: &MissionSpec) -> PlanReport<'a> {
    PlanReport {
        certified: p.certified(),
        routing_status: p.solution.status.name(),
        objective: p.solution.objective,
        required_horizon: p.required_horizon,
        robustness: p.report().into(),
        warm_start_exact: p.optimized.warm_exact,
        winning_start: p.optimized.start,
        starts: &p.optimized.starts,
        checks: checks(p.trajectory(), spec),
    }
}

/// Human summary on stdout; the binding clause is named whenever the plan
/// is not certified.
fn summarize(what: &str, report: &CertifyReport, certified: bool, shortfall: Option<String>) {
    println!(
        "{what}: exact robustness {:.6} (smooth {:.6}, margin {})",
        report.exact, report.smooth, report.epsilon
    );
    if let Some(s) = shortfall {
        println!("{what}: {s}");
    }
    if certified {
        println!("{what}: certified");
    } else if let Some(c) = report.binding_clause() {
        println!("{what}: best effort; binding clause {} (exact {:.6})", c.label, c.exact);
    } else {
        println!("{what}: best effort");
    }
}

/// Write all plan artifacts; returns the exit status.
fn emit_plan(dir: &Path, p: &Plan, spec: &MissionSpec) -> Result<u8> {
    write_json(
        dir,
        "route.json",
        &route_document(&p.model, &p.solution, Some(&p.schedule), p.required_horizon),
    )?;
    write_traj(dir, "trajectory.csv", p.trajectory())?;
    write_json(dir, "report.json", &plan_report(p, spec))?;
    write(dir, "plot.dat", &io::plot_data(p.trajectory(), Some(p.report())))?;
    let shortfall = p.required_horizon.map(|h| {
        format!(
            "schedule needs a horizon of {h} s, mission allows {} s",
            spec.horizon
        )
    });
    summarize("plan", p.report(), p.certified(), shortfall);
    Ok(if p.certified() { CERTIFIED } else { BEST_EFFORT })
}

/// Routing failures still leave a route.json describing the solver status.
fn plan_or_report(doc: &MissionDocument, flags: &Flags, dir: &Path) -> Result<Option<Plan>> {
    match plan(&doc.spec, &options(doc, flags)) {
        Ok(p) => Ok(Some(p)),
        Err(PlanError::NoRoutes { status }) => {
            let model = build_model(&doc.spec)?;
            let solution = solve(&model, options(doc, flags).budget);
            write_json(dir, "route.json", &route_document(&model, &solution, None, None))?;
            eprintln!("routing produced no routes: {}", PlanError::NoRoutes { status });
            Ok(None)
        }
        Err(e) => Err(e.into()),
    }
}

fn cmd_plan(doc: &MissionDocument, flags: &Flags) -> Result<u8> {
    let dir = out_dir(flags)?;
    match plan_or_report(doc, flags, dir)? {
        Some(p) => emit_plan(dir, &p, &doc.spec),
        None => Ok(BEST_EFFORT),
    }
}

#[derive(Serialize)]
struct ReplanRecord<'a> {
    step: usize,
    failed: Vec<usize>,
    completed_targets: Vec<usize>,
    survivors: &'a [usize],
    remaining_targets: &'a [usize],
    certified: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    shortfall: Option<HorizonShortfall>,
    robustness: Robustness<'a>,
    #[serde(skip_serializing_if = "Option::is_none")]
    routes: Option<&'a RouteSolution>,
}

#[derive(Serialize)]
struct ReplayReport<'a> {
    certified: bool,
    original: PlanReport<'a>,
    replans: Vec<ReplanRecord<'a>>,
    merged_checks: Checks,
}

fn cmd_replay(doc: &MissionDocument, flags: &Flags) -> Result<u8> {
    let dir = out_dir(flags)?;
    let Some(p) = plan_or_report(doc, flags, dir)? else {
        return Ok(BEST_EFFORT);
    };
    let spec = &doc.spec;
    let opts = options(doc, flags);
    let plan_code = emit_plan(dir, &p, spec)?;

    let mut events: Vec<FailureEvent> = doc.events.clone();
    events.sort();
    let mut steps: Vec<usize> = events.iter().map(|e| e.step).collect();
    steps.dedup();

    let mut current = p.trajectory().clone();
    let mut outcomes: Vec<(usize, Vec<usize>, Vec<usize>, ReplanOutcome)> = Vec::new();
    let mut log = Vec::new();
    for &k in &steps {
        let group: Vec<FailureEvent> = events.iter().copied().filter(|e| e.step == k).collect();
        let trace = simulate(&current, spec, &group)?;
        log.extend(trace.log.iter().filter(|e| e.step == k && !e.message.starts_with("installed")).cloned());
        let failed = group.iter().map(|e| e.vehicle).collect();
        let completed = trace.completed.iter().copied().collect();
        let out = replan(&trace, spec, &current, &opts)?;
        current = out.merged.clone();
        outcomes.push((k, failed, completed, out));
    }

    // installs come from the finished trace so each is listed once
    let full = simulate(&current, spec, &[])?;
    log.extend(full.log.into_iter().filter(|e| e.message.starts_with("installed")));
    log.sort_by(|a, b| (a.step, a.vehicle).cmp(&(b.step, b.vehicle)));
    let mut log_csv = String::from("step,vehicle,event\n");
    for e in &log {
        log_csv.push_str(&format!("{},{},{}\n", e.step, e.vehicle, e.message));
    }

    write_traj(dir, "trace.csv", &current)?;
    write(dir, "event_log.csv", &log_csv)?;
    if let Some((_, _, _, last)) = outcomes.last() {
        write_traj(dir, "replanned.csv", &last.suffix)?;
        write(dir, "replanned_plot.dat", &io::plot_data(&current, Some(&last.report)))?;
    }

    let mut certified = plan_code == CERTIFIED;
    let mut replans = Vec::new();
    for (k, failed, completed, out) in &outcomes {
        certified &= out.certified();
        let shortfall = out.shortfall_error().map(|e| e.to_string());
        summarize(&format!("replan at step {k}"), &out.report, out.certified(), shortfall);
        replans.push(ReplanRecord {
            step: *k,
            failed: failed.clone(),
            completed_targets: completed.clone(),
            survivors: &out.residual.vehicles,
            remaining_targets: &out.residual.targets,
            certified: out.certified(),
            shortfall: out.shortfall,
            robustness: (&out.report).into(),
            routes: out.plan.as_ref().map(|p| &p.solution),
        });
    }
    write_json(
        dir,
        "replay_report.json",
        &ReplayReport {
            certified,
            original: plan_report(&p, spec),
            replans,
            merged_checks: checks(&current, spec),
        },
    )?;
    Ok(if certified { CERTIFIED } else { BEST_EFFORT })
}

#[derive(Serialize)]
struct MonitorReport<'a> {
    certified: bool,
    robustness: Robustness<'a>,
    checks: Checks,
}

fn cmd_monitor(doc: &MissionDocument, path: &Path, flags: &Flags) -> Result<u8> {
    let spec = &doc.spec;
    let file = input(fs::File::open(path).with_context(|| format!("opening {}", path.display())))?;
    let traj = input(read_csv(file, spec.sampling_period).map_err(Into::into))?;
    if traj.vehicles.len() != spec.vehicles.len() {
        return Err(InputError(anyhow::anyhow!(
            "trajectory has {} vehicles, mission has {}",
            traj.vehicles.len(),
            spec.vehicles.len()
        ))
        .into());
    }
    let params = optimizer_params(doc, flags);
    let epsilon = params.epsilon.unwrap_or(spec.robustness_margin);
    let mission = compile_with_last_targets(spec, &last_serviced(spec, &traj))?;
    let report = input(certify(&mission, &traj, params.beta, epsilon).map_err(Into::into))?;
    let dir = out_dir(flags)?;
    write_json(
        dir,
        "monitor_report.json",
        &MonitorReport {
            certified: report.satisfied,
            robustness: (&report).into(),
            checks: checks(&traj, spec),
        },
    )?;
    summarize("monitor", &report, report.satisfied, None);
    Ok(if report.satisfied { CERTIFIED } else { BEST_EFFORT })
}

fn cmd_route(doc: &MissionDocument, flags: &Flags) -> Result<u8> {
    let spec = &doc.spec;
    let model = build_model(spec)?;
    let solution = solve(&model, options(doc, flags).budget);
    let dir = out_dir(flags)?;
    let (schedule, required) = if solution.status.has_routes() {
        match extract_tours(&solution, spec) {
            Ok(s) => (Some(s), None),
            Err(RoutingError::ScheduleOverflow {
                required_horizon,
                schedule,
                ..
            }) => (Some(*schedule), Some(required_horizon)),
            Err(e) => return Err(e.into()),
        }
    } else {
        (None, None)
    };
    write_json(
        dir,
        "route.json",
        &route_document(&model, &solution, schedule.as_ref(), required),
    )?;
    println!(
        "route: {} objective {} m (bound {} m)",
        solution.status.name(),
        solution.objective,
        solution.bound
    );
    let verified = !solution.status.has_routes() || verify_solution(&model, &solution).is_ok();
    if !verified {
        println!("route: solution failed the constraint check");
    }
    let exact = matches!(solution.status, stlfleet::routing::SolveStatus::Optimal);
    Ok(if exact && verified && required.is_none() {
        CERTIFIED
    } else {
        BEST_EFFORT
    })
}
