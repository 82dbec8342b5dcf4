use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{certify, derive_capacity, rollout, CertifyReport, Trajectory, TrajectoryError, VehicleTrack};
use crate::mission::{position_channels, velocity_channels, CompiledMission, MissionSpec};
use crate::stl::Evaluator;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerParams {
    /// Soft min/max temperature.
    pub beta: f64,
    /// First step, as a fraction of the tightest acceleration bound.
    pub initial_step: f64,
    pub max_iterations: usize,
    /// Weight of the squared velocity-bound excess.
    pub velocity_penalty: f64,
    /// Weight of the optional acceleration-energy regulariser.
    pub energy_weight: f64,
    pub starts: usize,
    pub seed: u64,
    /// Required exact robustness; the mission's margin when unset.
    pub epsilon: Option<f64>,
}

impl Default for OptimizerParams {
    fn default() -> Self {
        Self {
            beta: 10.0,
            initial_step: 0.05,
            max_iterations: 150,
            velocity_penalty: 10.0,
            energy_weight: 0.0,
            starts: 4,
            seed: 0,
            epsilon: None,
        }
    }
}

impl OptimizerParams {
    pub fn validate(&self) -> Result<(), TrajectoryError> {
        let mut bad = Vec::new();
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            bad.push(format!("beta must be positive, got {}", self.beta));
        }
        if !(self.initial_step > 0.0 && self.initial_step.is_finite()) {
            bad.push(format!("initial_step must be positive, got {}", self.initial_step));
        }
        if self.max_iterations == 0 {
            bad.push("max_iterations must be at least 1".into());
        }
        if self.starts == 0 {
            bad.push("starts must be at least 1".into());
        }
        if self.velocity_penalty < 0.0 || self.energy_weight < 0.0 {
            bad.push("penalty weights must be nonnegative".into());
        }
        if let Some(e) = self.epsilon {
            if !(e >= 0.0 && e.is_finite()) {
                bad.push(format!("epsilon must be nonnegative, got {e}"));
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(TrajectoryError::Params(bad.join("; ")))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StartSummary {
    pub start: usize,
    pub exact: f64,
    pub feasible: bool,
    pub iterations: usize,
}

#[derive(Clone, Debug)]
pub struct OptimizeResult {
    pub trajectory: Trajectory,
    pub report: CertifyReport,
    /// Exact robustness reached the margin.
    pub success: bool,
    /// Index of the winning start (0 is the unperturbed warm start).
    pub start: usize,
    pub warm_exact: f64,
    pub starts: Vec<StartSummary>,
}

const VELOCITY_TOL: f64 = 1e-9;

struct Problem<'a> {
    spec: &'a MissionSpec,
    eval: Evaluator,
    params: &'a OptimizerParams,
    /// Channel ids per vehicle: position, velocity.
    layout: Vec<([usize; 3], [usize; 3])>,
}

struct Candidate {
    traj: Trajectory,
    exact: f64,
    feasible: bool,
}

impl Problem<'_> {
    fn build(&self, accel: &[Vec<[f64; 3]>]) -> Trajectory {
        let dt = self.spec.sampling_period;
        let vehicles = accel
            .iter()
            .enumerate()
            .map(|(d, a)| {
                let (position, velocity) = rollout(
                    self.spec.initial_position(d),
                    self.spec.initial_velocity(d),
                    a,
                    dt,
                );
                let capacity = derive_capacity(self.spec, &position, self.spec.initial_capacity(d));
                VehicleTrack {
                    position,
                    velocity,
                    acceleration: a.clone(),
                    capacity,
                }
            })
            .collect();
        Trajectory { dt, vehicles }
    }

    fn velocity_excess(&self, d: usize, j: usize, v: f64) -> f64 {
        let spec = &self.spec.vehicles[d];
        if v > spec.velocity_max[j] {
            v - spec.velocity_max[j]
        } else if v < spec.velocity_min[j] {
            v - spec.velocity_min[j]
        } else {
            0.0
        }
    }

    fn candidate(&self, traj: Trajectory) -> Result<Candidate, TrajectoryError> {
        let signal = traj.to_signal()?;
        let exact = self.eval.exact(&signal, 0)?;
        let feasible = traj.velocity_violation(self.spec) <= VELOCITY_TOL;
        Ok(Candidate {
            traj,
            exact,
            feasible,
        })
    }

    fn objective(&self, traj: &Trajectory) -> Result<f64, TrajectoryError> {
        let signal = traj.to_signal()?;
        let mut j = self.eval.smooth(&signal, 0, self.params.beta)?;
        j -= self.penalties(traj);
        Ok(j)
    }

    fn penalties(&self, traj: &Trajectory) -> f64 {
        let mut total = 0.0;
        for (d, track) in traj.vehicles.iter().enumerate() {
            for v in &track.velocity {
                for (j, &x) in v.iter().enumerate() {
                    let e = self.velocity_excess(d, j, x);
                    total += self.params.velocity_penalty * e * e;
                }
            }
            if self.params.energy_weight > 0.0 {
                for a in &track.acceleration {
                    total += self.params.energy_weight * a.iter().map(|x| x * x).sum::<f64>();
                }
            }
        }
        total
    }

    /// Objective value and its gradient with respect to every acceleration.
    fn gradient(&self, traj: &Trajectory) -> Result<(f64, Vec<Vec<[f64; 3]>>), TrajectoryError> {
        let signal = traj.to_signal()?;
        let (rho, g) = self.eval.gradient(&signal, 0, self.params.beta)?;
        let value = rho - self.penalties(traj);
        let dt = traj.dt;
        let mut out = Vec::with_capacity(traj.vehicles.len());
        for (d, track) in traj.vehicles.iter().enumerate() {
            let (pc, vc) = self.layout[d];
            let n = track.acceleration.len();
            let mut grad = vec![[0.0; 3]; n];
            for j in 0..3 {
                let gp = &g[pc[j]];
                let gv: Vec<f64> = (0..=n)
                    .map(|k| {
                        let e = self.velocity_excess(d, j, track.velocity[k][j]);
                        g[vc[j]][k] - 2.0 * self.params.velocity_penalty * e
                    })
                    .collect();
                // p_k depends on a_i (i < k) with weight dt^2 (k - i - 1/2),
                // v_k with weight dt.
                let (mut s0, mut s1, mut sv) = (0.0, 0.0, 0.0);
                for i in (0..n).rev() {
                    let k = i + 1;
                    s0 += gp[k];
                    s1 += k as f64 * gp[k];
                    sv += gv[k];
                    grad[i][j] = dt * dt * (s1 - (i as f64 + 0.5) * s0) + dt * sv
                        - 2.0 * self.params.energy_weight * track.acceleration[i][j];
                }
            }
            out.push(grad);
        }
        Ok((value, out))
    }

    fn project(&self, accel: &mut [Vec<[f64; 3]>]) {
        for (d, track) in accel.iter_mut().enumerate() {
            let v = &self.spec.vehicles[d];
            for a in track.iter_mut() {
                for j in 0..3 {
                    a[j] = a[j].clamp(v.acceleration_min[j], v.acceleration_max[j]);
                }
            }
        }
    }

    fn accel_scale(&self) -> f64 {
        let mut s = f64::INFINITY;
        for v in &self.spec.vehicles {
            for j in 0..3 {
                s = s.min(v.acceleration_max[j].min(-v.acceleration_min[j]));
            }
        }
        if s.is_finite() && s > 0.0 {
            s
        } else {
            1.0
        }
    }

    /// Projected gradient ascent from `accel`; returns the best iterate by
    /// (velocity feasibility, exact robustness).
    fn ascend(&self, mut accel: Vec<Vec<[f64; 3]>>) -> Result<(Candidate, usize), TrajectoryError> {
        self.project(&mut accel);
        let scale = self.accel_scale();
        let mut traj = self.build(&accel);
        let (mut value, mut grad) = self.gradient(&traj)?;
        let mut best = self.candidate(traj.clone())?;
        let mut eta = self.params.initial_step * scale;
        let mut iterations = 0;
        for _ in 0..self.params.max_iterations {
            iterations += 1;
            let gmax = grad
                .iter()
                .flatten()
                .flat_map(|a| a.iter())
                .fold(0.0f64, |m, x| m.max(x.abs()));
            if gmax == 0.0 || eta < 1e-9 * scale {
                break;
            }
            let mut trial = accel.clone();
            for (t, g) in trial.iter_mut().zip(&grad) {
                for (a, ga) in t.iter_mut().zip(g) {
                    for j in 0..3 {
                        a[j] += eta * ga[j] / gmax;
                    }
                }
            }
            self.project(&mut trial);
            let trial_traj = self.build(&trial);
            let trial_value = self.objective(&trial_traj)?;
            if trial_value > value {
                accel = trial;
                traj = trial_traj;
                (value, grad) = self.gradient(&traj)?;
                eta = (eta * 1.5).min(scale);
                let c = self.candidate(traj.clone())?;
                if better(&c, &best) {
                    best = c;
                }
            } else {
                eta *= 0.5;
            }
        }
        Ok((best, iterations))
    }
}

fn better(a: &Candidate, b: &Candidate) -> bool {
    match (a.feasible, b.feasible) {
        (true, false) => true,
        (false, true) => false,
        _ => a.exact > b.exact,
    }
}

/// Maximise the smooth robustness of `mission` starting from `warm`.
pub fn optimize(
    mission: &CompiledMission,
    spec: &MissionSpec,
    warm: &Trajectory,
    params: &OptimizerParams,
) -> Result<OptimizeResult, TrajectoryError> {
    params.validate()?;
    let epsilon = params.epsilon.unwrap_or(spec.robustness_margin);
    if warm.vehicles.len() != spec.vehicles.len() {
        return Err(TrajectoryError::Shape(format!(
            "warm start has {} vehicles, mission has {}",
            warm.vehicles.len(),
            spec.vehicles.len()
        )));
    }
    let signal = warm.to_signal()?;
    let eval = Evaluator::for_signal(&mission.formula, &signal)?;
    eval.check(0, signal.len())?;
    let index = |n: &str| signal.channel_index(n).expect("trajectory signal has every channel");
    let layout = (0..spec.vehicles.len())
        .map(|d| {
            (
                position_channels(d).map(|n| index(&n)),
                velocity_channels(d).map(|n| index(&n)),
            )
        })
        .collect();
    let problem = Problem {
        spec,
        eval,
        params,
        layout,
    };

    let base: Vec<Vec<[f64; 3]>> = warm.vehicles.iter().map(|t| t.acceleration.clone()).collect();
    let warm_candidate = problem.candidate(problem.build(&base))?;
    let warm_exact = warm_candidate.exact;

    let seeds: Vec<usize> = (0..params.starts).collect();
    let runs: Vec<Result<(Candidate, usize), TrajectoryError>> = crate::pool::install(|| {
        seeds
            .par_iter()
            .map(|&i| {
                let mut accel = base.clone();
                if i > 0 {
                    let mut rng = ChaCha8Rng::seed_from_u64(params.seed.wrapping_add(i as u64));
                    for (d, track) in accel.iter_mut().enumerate() {
                        let v = &spec.vehicles[d];
                        let sigma: Vec<f64> = (0..3)
                            .map(|j| {
                                let a = v.acceleration_max[j].min(-v.acceleration_min[j]);
                                if a.is_finite() { 0.1 * a } else { 0.1 }
                            })
                            .collect();
                        for a in track.iter_mut() {
                            for j in 0..3 {
                                let noise = Normal::new(0.0, sigma[j]).unwrap();
                                a[j] += noise.sample(&mut rng);
                            }
                        }
                    }
                }
                problem.ascend(accel)
            })
            .collect()
    });

    let mut best = warm_candidate;
    let mut best_start = 0;
    let mut starts = Vec::with_capacity(runs.len());
    for (i, run) in runs.into_iter().enumerate() {
        let (c, iterations) = run?;
        starts.push(StartSummary {
            start: i,
            exact: c.exact,
            feasible: c.feasible,
            iterations,
        });
        if better(&c, &best) {
            best = c;
            best_start = i;
        }
    }

    let beta = params.beta;
    let report = certify(mission, &best.traj, beta, epsilon)?;
    Ok(OptimizeResult {
        success: report.exact >= epsilon,
        trajectory: best.traj,
        report,
        start: best_start,
        warm_exact,
        starts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mission::fixtures::*;
    use crate::mission::{compile, Box3};
    use crate::routing::{build_model, extract_tours, solve, Budget};
    use crate::trajectory::{propagate, warm_start};

    fn finite_difference(p: &Problem, accel: &[Vec<[f64; 3]>], d: usize, i: usize, j: usize) -> f64 {
        let h = 1e-6;
        let mut up = accel.to_vec();
        up[d][i][j] += h;
        let mut dn = accel.to_vec();
        dn[d][i][j] -= h;
        (p.objective(&p.build(&up)).unwrap() - p.objective(&p.build(&dn)).unwrap()) / (2.0 * h)
    }

    #[test]
    fn chain_rule_matches_finite_differences() {
        let mut spec = line_spec();
        spec.vehicles[0].velocity_max = [0.3; 3];
        let mission = compile(&spec).unwrap();
        let n = spec.steps();
        let accel = vec![(0..n)
            .map(|k| [0.05 * (k as f64 * 0.7).sin(), 0.03 * (k as f64).cos(), -0.02])
            .collect::<Vec<_>>()];
        let warm = propagate(&spec, accel.clone()).unwrap();
        let signal = warm.to_signal().unwrap();
        let params = OptimizerParams::default();
        let problem = Problem {
            spec: &spec,
            eval: Evaluator::for_signal(&mission.formula, &signal).unwrap(),
            params: &params,
            layout: vec![([0, 1, 2], [3, 4, 5])],
        };
        let (_, grad) = problem.gradient(&warm).unwrap();
        for &(i, j) in &[(0, 0), (3, 1), (7, 2), (n - 2, 0)] {
            let fd = finite_difference(&problem, &accel, 0, i, j);
            assert!((fd - grad[0][i][j]).abs() < 1e-5 * (1.0 + fd.abs()), "{i},{j}: {fd} vs {}", grad[0][i][j]);
        }
    }

    #[test]
    fn never_worse_than_warm_start_and_deterministic() {
        let spec = line_spec();
        let model = build_model(&spec).unwrap();
        let sol = solve(&model, Budget::default());
        let sched = extract_tours(&sol, &spec).unwrap();
        let mission = crate::mission::compile_with_last_targets(&spec, &sol.last_targets(&model)).unwrap();
        let warm = warm_start(&sched, &spec).unwrap();
        let params = OptimizerParams {
            max_iterations: 30,
            ..Default::default()
        };
        let a = optimize(&mission, &spec, &warm, &params).unwrap();
        let b = optimize(&mission, &spec, &warm, &params).unwrap();
        assert!(a.report.exact >= a.warm_exact);
        assert_eq!(a.trajectory, b.trajectory);
        assert!(a.trajectory.accelerations_within(&spec));
        assert!(a.trajectory.dynamics_residual() < 1e-12);
        assert_eq!(a.success, a.report.exact >= spec.robustness_margin);
    }

    #[test]
    fn separation_gradient_pushes_vehicles_apart() {
        let mut spec = line_spec();
        spec.targets.clear();
        spec.separation = 3.0;
        spec.depots.push(Box3::around([2.0, 0.0, 5.0], 0.25));
        spec.vehicles.push(vehicle(1, 2));
        spec.vehicles[0].home = Some(spec.workspace);
        spec.vehicles[1].home = Some(spec.workspace);
        let mission = compile(&spec).unwrap();
        // converging: vehicle 0 moves +x, vehicle 1 moves -x
        let n = spec.steps();
        let mut a0 = vec![[0.0; 3]; n];
        let mut a1 = vec![[0.0; 3]; n];
        a0[0] = [0.02, 0.0, 0.0];
        a1[0] = [-0.02, 0.0, 0.0];
        let traj = propagate(&spec, vec![a0, a1]).unwrap();
        let signal = traj.to_signal().unwrap();
        let params = OptimizerParams::default();
        let problem = Problem {
            spec: &spec,
            eval: Evaluator::for_signal(&mission.formula, &signal).unwrap(),
            params: &params,
            layout: vec![([0, 1, 2], [3, 4, 5]), ([7, 8, 9], [10, 11, 12])],
        };
        let (_, grad) = problem.gradient(&traj).unwrap();
        assert!(grad[0][0][0] < 0.0, "{:?}", grad[0][0]);
        assert!(grad[1][0][0] > 0.0, "{:?}", grad[1][0]);
        let step: Vec<Vec<[f64; 3]>> = traj
            .vehicles
            .iter()
            .zip(&grad)
            .map(|(t, g)| {
                t.acceleration
                    .iter()
                    .zip(g)
                    .map(|(a, g)| [a[0] + 1e-3 * g[0], a[1] + 1e-3 * g[1], a[2] + 1e-3 * g[2]])
                    .collect()
            })
            .collect();
        let moved = problem.build(&step);
        let sep = |t: &Trajectory| t.min_separation().into_iter().fold(f64::INFINITY, f64::min);
        assert!(sep(&moved) > sep(&traj));
    }
}
