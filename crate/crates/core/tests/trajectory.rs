mod common;

use proptest::prelude::*;
use stlfleet::mission::{distance, Box3};
use stlfleet::routing::{build_model, detour, extract_tours, solve, Budget};
use stlfleet::trajectory::{read_csv, warm_start, write_csv};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn warm_start_is_feasible_and_meets_its_schedule(
        seed in 0..1000u64,
        targets in 1..=4usize,
        vehicles in 1..=2usize,
        capacity in 1..=3u32,
    ) {
        let spec = common::random_instance(seed, targets, vehicles, capacity);
        let sol = solve(&build_model(&spec).unwrap(), Budget::default());
        let sched = extract_tours(&sol, &spec).unwrap();
        let traj = warm_start(&sched, &spec).unwrap();
        prop_assert!(traj.accelerations_within(&spec));
        prop_assert!(traj.velocity_violation(&spec) < 1e-9);
        prop_assert!(traj.dynamics_residual() < 1e-9);
        for (d, vs) in sched.vehicles.iter().enumerate() {
            for w in &vs.waypoints {
                let p = traj.vehicles[d].position[w.arrival_step];
                prop_assert!(distance(&p, &w.position) < 1e-6, "{p:?} vs {:?}", w.position);
                let v = traj.vehicles[d].velocity[w.arrival_step];
                prop_assert!(v.iter().all(|x| x.abs() < 1e-9));
            }
        }

        let mut buf = Vec::new();
        write_csv(&traj, &mut buf).unwrap();
        prop_assert_eq!(read_csv(buf.as_slice(), spec.sampling_period).unwrap(), traj);
    }

    #[test]
    fn detour_legs_clear_the_obstacle(
        a in prop::array::uniform3(-8.0..8.0f64),
        b in prop::array::uniform3(-8.0..8.0f64),
        centre in prop::array::uniform2(-4.0..4.0f64),
        half in 0.5..2.0f64,
        top in 1.0..7.0f64,
    ) {
        let mut spec = common::random_instance(0, 1, 1, 1);
        let tower = Box3::new([centre[0] - half, centre[1] - half, 0.0], [centre[0] + half, centre[1] + half, top]);
        let grown = Box3::new(tower.lower.map(|x| x - spec.robustness_margin), tower.upper.map(|x| x + spec.robustness_margin));
        prop_assume!(!grown.contains(&a) && !grown.contains(&b));
        spec.obstacles.push(tower);
        let vias = detour(&a, &b, &spec);
        let mut path = vec![a];
        path.extend(vias.iter().copied());
        path.push(b);
        if !vias.is_empty() {
            prop_assert_eq!(vias.len(), 2);
            for leg in path.windows(2) {
                // sampled check of the grown box along each leg
                for i in 0..=200 {
                    let t = i as f64 / 200.0;
                    let p = [0, 1, 2].map(|j| leg[0][j] + t * (leg[1][j] - leg[0][j]));
                    prop_assert!(!grown.contains(&p), "{p:?} on {leg:?}");
                }
            }
        }
    }
}
