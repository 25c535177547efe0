mod common;

use proptest::prelude::*;
use relex::mdp::{MdpSpec, Policy};
use relex::rng::EpisodeStreams;

fn small_spec() -> impl Strategy<Value = MdpSpec> {
    (any::<u64>(), 1usize..=3, 1usize..=2, 1usize..=4)
        .prop_map(|(seed, s, a, h)| common::random_spec(seed, s, a, h))
}

fn policy_for(spec: &MdpSpec, code: u64) -> Policy {
    let mut code = code;
    let actions = (0..spec.horizon)
        .map(|_| {
            (0..spec.num_states)
                .map(|_| {
                    let a = (code % spec.num_actions as u64) as usize;
                    code = (code / spec.num_actions as u64) ^ code.rotate_left(17);
                    a
                })
                .collect()
        })
        .collect();
    Policy { actions }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn solve_optimal_matches_enumeration(spec in small_spec()) {
        let sol = spec.solve_optimal().unwrap();
        let oracle = common::enumerate_optimal(&spec);
        for h in 0..spec.horizon {
            prop_assert!(common::max_abs_diff(&sol.v_star[h], &oracle.v_star[h]) <= 1e-10);
            for s in 0..spec.num_states {
                prop_assert!(common::max_abs_diff(&sol.q_star[h][s], &oracle.q_star[h][s]) <= 1e-10);
            }
        }
    }

    #[test]
    fn no_policy_beats_the_optimum(spec in small_spec(), code in any::<u64>()) {
        let sol = spec.solve_optimal().unwrap();
        let pv = spec.evaluate_policy(&policy_for(&spec, code)).unwrap();
        for h in 0..spec.horizon {
            for s in 0..spec.num_states {
                prop_assert!(pv.v[h][s] <= sol.v_star[h][s] + 1e-9);
            }
        }
    }

    #[test]
    fn gap_table_is_consistent(spec in small_spec()) {
        let sol = spec.solve_optimal().unwrap();
        let mut min_nonzero = f64::INFINITY;
        for h in 0..spec.horizon {
            for s in 0..spec.num_states {
                let best = sol.q_star[h][s].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                prop_assert_eq!(sol.v_star[h][s], best);
                prop_assert_eq!(sol.gaps[h][s][sol.pi_star.actions[h][s]], 0.0);
                for a in 0..spec.num_actions {
                    let g = sol.gaps[h][s][a];
                    prop_assert!(g >= 0.0);
                    let q = sol.q_star[h][s][a];
                    prop_assert!(q >= 0.0 && q <= (spec.horizon - h) as f64 + 1e-12);
                    if g > 0.0 {
                        min_nonzero = min_nonzero.min(g);
                    }
                }
            }
        }
        prop_assert_eq!(sol.gap_min, min_nonzero);
    }

    #[test]
    fn optimal_policy_evaluates_to_v_star(spec in small_spec()) {
        let sol = spec.solve_optimal().unwrap();
        let pv = spec.evaluate_policy(&sol.pi_star).unwrap();
        for h in 0..spec.horizon {
            prop_assert!(common::max_abs_diff(&pv.v[h], &sol.v_star[h]) <= 1e-12);
        }
    }

    #[test]
    fn occupancy_is_a_distribution_per_step(spec in small_spec(), code in any::<u64>()) {
        let occ = spec.occupancy(&policy_for(&spec, code)).unwrap();
        prop_assert_eq!(&occ.dist[0], &spec.init_dist);
        for d in &occ.dist {
            prop_assert!((d.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn trajectories_chain_and_have_length_h(spec in small_spec(), seed in any::<u64>(), code in any::<u64>()) {
        let policy = policy_for(&spec, code);
        let mut streams = EpisodeStreams::new(seed);
        let t = spec.sample_episode(3, &policy, &mut streams);
        prop_assert_eq!(t.episode, 3);
        prop_assert_eq!(t.steps.len(), spec.horizon);
        for (h, w) in t.steps.iter().enumerate() {
            prop_assert_eq!(w.h, h);
            prop_assert_eq!(w.action, policy.action(h, w.state));
        }
        for w in t.steps.windows(2) {
            prop_assert_eq!(w[0].next_state, w[1].state);
        }
    }

    #[test]
    fn spec_json_round_trips_exactly(spec in small_spec()) {
        let text = serde_json::to_string(&spec).unwrap();
        let back: MdpSpec = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, spec);
    }
}

#[test]
fn occupancy_matches_monte_carlo() {
    let spec = common::random_spec(11, 3, 2, 4);
    let policy = spec.solve_optimal().unwrap().pi_star;
    let occ = spec.occupancy(&policy).unwrap();
    let n = 100_000;
    let mut counts = vec![vec![0usize; spec.num_states]; spec.horizon];
    let mut streams = EpisodeStreams::new(5);
    for k in 0..n {
        for step in spec.sample_episode(k + 1, &policy, &mut streams).steps {
            counts[step.h][step.state] += 1;
        }
    }
    for h in 0..spec.horizon {
        for s in 0..spec.num_states {
            let p = occ.dist[h][s];
            let freq = counts[h][s] as f64 / n as f64;
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((freq - p).abs() <= 5.0 * se + 1e-12, "h={h} s={s}: {freq} vs {p}");
        }
    }
}

#[test]
fn stay_or_leave_values_match_enumeration() {
    let spec = MdpSpec::stay_or_leave();
    let oracle = common::enumerate_optimal(&spec);
    assert_eq!(oracle.v_star[0][0], 2.0);
    assert_eq!(oracle.q_star[0][0][1], 0.0);
    let sol = spec.solve_optimal().unwrap();
    assert_eq!(sol.v_star, oracle.v_star);
    assert_eq!(sol.gap_min, 1.0);
}

#[test]
fn deterministic_mdp_trajectory_ignores_seed() {
    let spec = MdpSpec::stay_or_leave();
    let policy = Policy::constant(2, 2, 1);
    let a = spec.sample_episode(1, &policy, &mut EpisodeStreams::new(1));
    let b = spec.sample_episode(1, &policy, &mut EpisodeStreams::new(999));
    assert_eq!(a, b);
}
