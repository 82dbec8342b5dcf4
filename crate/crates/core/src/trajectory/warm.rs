use super::{derive_capacity, step, Trajectory, TrajectoryError, VehicleTrack};
use crate::mission::{distance, MissionSpec, VehicleSpec};
use crate::routing::{Schedule, VehicleSchedule};
use crate::routing::{directional_limits, profile_split};

fn clamp(a: [f64; 3], v: &VehicleSpec) -> [f64; 3] {
    let mut out = a;
    for j in 0..3 {
        out[j] = out[j].clamp(v.acceleration_min[j], v.acceleration_max[j]);
    }
    out
}

/// Acceleration sequence for one vehicle following its schedule. Legs are
/// flown rest to rest with an accelerate/coast/decelerate profile; when the
/// schedule runs past the horizon the tail is cut off.
fn vehicle_accelerations(
    sched: &VehicleSchedule,
    spec: &VehicleSpec,
    dt: f64,
    steps: usize,
) -> Vec<[f64; 3]> {
    let mut accel = vec![[0.0; 3]; steps];
    let mut p = sched.start;
    let mut v = sched.start_velocity;
    let mut k = 0usize;
    let mut apply = |a: [f64; 3], k: &mut usize, p: &mut [f64; 3], v: &mut [f64; 3]| {
        if *k < steps {
            let a = clamp(a, spec);
            accel[*k] = a;
            (*p, *v) = step(p, v, &a, dt);
            *k += 1;
        }
    };

    if sched.brake_steps > 0 {
        let m = sched.brake_steps as f64;
        let a0 = sched.start_velocity.map(|vj| -vj / (m * dt));
        for _ in 0..sched.brake_steps {
            apply(a0, &mut k, &mut p, &mut v);
        }
    }

    for w in &sched.waypoints {
        let n = w.arrival_step.saturating_sub(k);
        let target = w.position;
        let length = distance(&p, &target);
        let split = if length > 0.0 && n >= 2 {
            let u = [
                (target[0] - p[0]) / length,
                (target[1] - p[1]) / length,
                (target[2] - p[2]) / length,
            ];
            let (vmax, amax) = directional_limits(&u, spec);
            let (m, alpha) = profile_split(length, n, dt, vmax, amax)
                .unwrap_or_else(|| {
                    let m = n / 2;
                    (m, length / (m as f64 * dt * dt * (n - m) as f64))
                });
            Some((m, u.map(|uj| alpha * uj)))
        } else {
            None
        };
        for i in 0..n {
            let a = match split {
                Some((m, a)) if i < m => a,
                Some((m, a)) if i >= n - m => a.map(|x| -x),
                _ => [0.0; 3],
            };
            apply(a, &mut k, &mut p, &mut v);
        }
        for _ in 0..w.dwell_steps {
            apply([0.0; 3], &mut k, &mut p, &mut v);
        }
    }
    accel
}

/// Trajectory realising `schedule`, holding still once the route is done.
pub fn warm_start(schedule: &Schedule, spec: &MissionSpec) -> Result<Trajectory, TrajectoryError> {
    let dt = spec.sampling_period;
    let steps = spec.steps();
    if schedule.vehicles.len() != spec.vehicles.len() {
        return Err(TrajectoryError::Shape(format!(
            "schedule covers {} vehicles, mission has {}",
            schedule.vehicles.len(),
            spec.vehicles.len()
        )));
    }
    let vehicles = schedule
        .vehicles
        .iter()
        .enumerate()
        .map(|(d, sched)| {
            let acceleration = vehicle_accelerations(sched, &spec.vehicles[d], dt, steps);
            let (position, velocity) = super::rollout(sched.start, sched.start_velocity, &acceleration, dt);
            let capacity = derive_capacity(spec, &position, spec.initial_capacity(d));
            VehicleTrack {
                position,
                velocity,
                acceleration,
                capacity,
            }
        })
        .collect();
    Ok(Trajectory { dt, vehicles })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mission::fixtures::*;
    use crate::routing::{build_model, extract_tours, solve, trapezoid_time, Budget};

    #[test]
    fn four_metre_leg_takes_four_seconds() {
        // rest to rest over 4 m at 2 m/s, 1 m/s^2: ramps of 2 s each, no cruise
        assert!((trapezoid_time(4.0, 2.0, 1.0) - 4.0).abs() < 1e-12);
        let v = vehicle(0, 1);
        let dt = 0.01;
        let n = crate::routing::leg_steps(&[0.0; 3], &[4.0, 0.0, 0.0], &v, dt);
        assert!((n as f64 * dt - 4.0).abs() < 0.05, "{n}");
    }

    #[test]
    fn warm_start_reaches_every_waypoint() {
        let spec = line_spec();
        let model = build_model(&spec).unwrap();
        let sol = solve(&model, Budget::default());
        let sched = extract_tours(&sol, &spec).unwrap();
        let traj = warm_start(&sched, &spec).unwrap();
        let track = &traj.vehicles[0];
        for w in &sched.vehicles[0].waypoints {
            for k in w.arrival_step..=w.departure_step() {
                assert!(distance(&track.position[k], &w.position) < 1e-9);
                assert!(track.velocity[k].iter().all(|x| x.abs() < 1e-9));
            }
        }
        assert!(traj.accelerations_within(&spec));
        assert!(traj.velocity_violation(&spec) <= 1e-12);
        assert_eq!(traj.dynamics_residual(), 0.0);
        // both installs happen, then parking in the station refills
        assert_eq!(track.capacity.iter().min(), Some(&0));
        assert_eq!(*track.capacity.last().unwrap(), 2);
    }

    #[test]
    fn zero_length_leg_is_a_pure_hold() {
        let mut spec = line_spec();
        spec.targets.truncate(1);
        spec.vehicles[0].initial_position = Some(spec.targets[0].centroid());
        let model = build_model(&spec).unwrap();
        let sol = solve(&model, Budget::default());
        let sched = extract_tours(&sol, &spec).unwrap();
        assert_eq!(sched.vehicles[0].waypoints[0].arrival_step, 0);
        let traj = warm_start(&sched, &spec).unwrap();
        let hold = sched.vehicles[0].waypoints[0].dwell_steps;
        assert!(traj.vehicles[0].acceleration[..hold].iter().all(|a| *a == [0.0; 3]));
    }

    #[test]
    fn braking_segment_stops_the_vehicle() {
        let mut spec = line_spec();
        spec.vehicles[0].initial_velocity = Some([1.5, -0.5, 0.0]);
        let model = build_model(&spec).unwrap();
        let sol = solve(&model, Budget::default());
        let sched = extract_tours(&sol, &spec).unwrap();
        let traj = warm_start(&sched, &spec).unwrap();
        let b = sched.vehicles[0].brake_steps;
        assert!(traj.vehicles[0].velocity[b].iter().all(|x| x.abs() < 1e-12));
        assert!(traj.accelerations_within(&spec));
    }
}
