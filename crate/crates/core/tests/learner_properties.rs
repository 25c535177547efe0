use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use relex::learner::{bonus, q_backward_pass, BetaRule, BetaSchedule, LearnerState, PreparedClass};
use relex::linalg;
use relex::mdp::{EpsilonGreedy, MdpSpec, Policy};
use relex::representation::{gen_cluster_lowrank, gen_tabular, ClusterParams, RepresentationClass};
use relex::rng::EpisodeStreams;

struct Setup {
    spec: MdpSpec,
    class: RepresentationClass,
    prepared: PreparedClass,
    schedule: BetaSchedule,
}

fn setup(spec: MdpSpec, class: RepresentationClass, rule: BetaRule) -> Setup {
    let prepared = PreparedClass::new(&class, &spec).unwrap();
    let schedule = BetaSchedule::new(rule, class.constants().unwrap(), spec.horizon).unwrap();
    Setup { spec, class, prepared, schedule }
}

fn cluster_setup(seed: u64) -> Setup {
    let (spec, class) = gen_cluster_lowrank(&ClusterParams { seed, ..ClusterParams::default() }).unwrap();
    setup(spec, class, BetaRule::Theorem { c: 0.5, delta: 0.1 })
}

#[test]
fn maintained_inverse_matches_fresh_solves() {
    let s = cluster_setup(7);
    let mut state = LearnerState::init(&s.class, s.spec.horizon);
    let mut streams = EpisodeStreams::new(4);
    for k in 1..=500 {
        let plan = q_backward_pass(&state, &s.spec, &s.prepared, &s.schedule, k).unwrap();
        let t = s.spec.sample_episode(k, &plan, &mut streams);
        state.update(&s.prepared, &t).unwrap();
        if k % 100 != 0 {
            continue;
        }
        for per_h in &state.stats {
            for st in per_h {
                let d = st.cov.nrows();
                let fresh = st.cov.clone().try_inverse().unwrap();
                assert!((&fresh - &st.cov_inv).norm() <= 1e-7);
                assert!((&st.cov - st.cov.transpose()).amax() == 0.0);
                assert!(linalg::min_eigenvalue(&st.cov) >= 1.0 - 1e-8);
                assert!((&st.cov * &st.cov_inv - DMatrix::identity(d, d)).amax() <= 1e-7);
                let solved = st.solve_estimate().unwrap();
                assert!((&solved - &st.estimate).amax() <= 1e-8);
            }
        }
    }
}

#[test]
fn repeated_feature_shrinks_bonus_in_closed_form() {
    let phi = DVector::from_vec(vec![0.6, -0.3, 0.9]);
    let norm = phi.norm_squared();
    let mut cov = DMatrix::identity(3, 3);
    let mut cov_inv = DMatrix::identity(3, 3);
    for n in 1..=50 {
        linalg::sherman_morrison_update(&mut cov, &mut cov_inv, &phi);
        let expected = norm / (1.0 + n as f64 * norm);
        let direct = (phi.transpose() * cov.clone().try_inverse().unwrap() * &phi)[(0, 0)];
        assert!((linalg::quad_form(&cov_inv, &phi) - expected).abs() <= 1e-12);
        assert!((direct - expected).abs() <= 1e-12);
        let g = bonus(&phi, &cov_inv, 4.0, 1.0, 2).unwrap();
        assert!((g - 2.0 * (4.0 * expected).sqrt()).abs() <= 1e-12);
    }
    assert_eq!(bonus(&DVector::zeros(3), &cov_inv, 4.0, 1.0, 2).unwrap(), 0.0);
}

#[test]
fn tabular_rows_converge_under_heavy_sampling() {
    // Pair (s0, a0) at step 1 of the stay-or-leave chain, 10^4 samples.
    let spec = MdpSpec::stay_or_leave();
    let s = setup(spec.clone(), gen_tabular(&spec).unwrap(), BetaRule::Constant(1.0));
    let mut state = LearnerState::init(&s.class, spec.horizon);
    let policy = Policy::constant(2, 2, 0);
    let mut streams = EpisodeStreams::new(0);
    for k in 1..=10_000 {
        let t = spec.sample_episode(k, &policy, &mut streams);
        state.update(&s.prepared, &t).unwrap();
    }
    let m = &state.stats[0][0].estimate;
    let row: Vec<f64> = (0..2).map(|j| m[(0, j)]).collect();
    let err = ((row[0] - 1.0).powi(2) + row[1].powi(2)).sqrt();
    assert!(err <= 0.05, "{row:?}");
    assert!((row[0] - 10_000.0 / 10_001.0).abs() < 1e-12);
}

#[test]
fn optimal_play_grows_the_visited_diagonal_by_one() {
    let spec = MdpSpec::stay_or_leave();
    let s = setup(spec.clone(), gen_tabular(&spec).unwrap(), BetaRule::Constant(1.0));
    let pi = spec.solve_optimal().unwrap().pi_star;
    let mut state = LearnerState::init(&s.class, spec.horizon);
    let mut streams = EpisodeStreams::new(2);
    for k in 1..=30 {
        let t = spec.sample_episode(k, &pi, &mut streams);
        state.update(&s.prepared, &t).unwrap();
        for h in 0..2 {
            assert_eq!(state.stats[0][h].cov[(0, 0)], 1.0 + k as f64);
            assert_eq!(state.stats[0][h].cov[(1, 1)], 1.0);
        }
    }
}

#[test]
fn epsilon_greedy_visits_every_action() {
    let spec = MdpSpec::stay_or_leave();
    let pi = spec.solve_optimal().unwrap().pi_star;
    let actor = EpsilonGreedy { base: &pi, epsilon: 0.3, num_actions: 2 };
    let mut streams = EpisodeStreams::new(8);
    let leaves = (1..=2000)
        .filter(|&k| spec.sample_episode(k, &actor, &mut streams).steps[0].action == 1)
        .count();
    // P(a1 at step 1) = 0.15.
    let se = (0.15f64 * 0.85 / 2000.0).sqrt();
    assert!((leaves as f64 / 2000.0 - 0.15).abs() < 5.0 * se);
}

#[test]
fn huge_bonus_at_first_episode_is_optimistic() {
    let (spec, class) = gen_cluster_lowrank(&ClusterParams::default()).unwrap();
    let s = setup(spec, class, BetaRule::Constant(1e6));
    let sol = s.spec.solve_optimal().unwrap();
    let state = LearnerState::init(&s.class, s.spec.horizon);
    let plan = q_backward_pass(&state, &s.spec, &s.prepared, &s.schedule, 1).unwrap();
    for h in 0..s.spec.horizon {
        for st in 0..s.spec.num_states {
            for a in 0..s.spec.num_actions {
                assert!(plan.q[h][st][a] >= sol.q_star[h][st][a] - 1e-8);
            }
        }
    }
}

#[test]
fn singleton_class_minimum_is_the_identity() {
    let s = cluster_setup(7);
    let single = s.class.restrict(&[2]).unwrap();
    let one = setup(s.spec.clone(), single, BetaRule::Theorem { c: 0.5, delta: 0.1 });
    let state = LearnerState::init(&one.class, one.spec.horizon);
    let plan = q_backward_pass(&state, &one.spec, &one.prepared, &one.schedule, 5).unwrap();
    assert_eq!(plan.q, plan.rep_q[0]);
    assert!(plan.chosen_rep.iter().flatten().flatten().all(|&i| i == 0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn values_are_clamped_and_combination_is_monotone(seed in any::<u64>(), episodes in 1usize..60) {
        let s = cluster_setup(seed % 20);
        let horizon = s.spec.horizon as f64;
        let mut state = LearnerState::init(&s.class, s.spec.horizon);
        let mut streams = EpisodeStreams::new(seed);
        for k in 1..=episodes {
            let plan = q_backward_pass(&state, &s.spec, &s.prepared, &s.schedule, k).unwrap();
            for h in 0..s.spec.horizon {
                for st in 0..s.spec.num_states {
                    let max_q = plan.q[h][st].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    prop_assert!(plan.v[h][st] <= horizon);
                    if max_q <= horizon {
                        prop_assert_eq!(plan.v[h][st], max_q);
                    }
                    for a in 0..s.spec.num_actions {
                        for per_map in &plan.rep_q {
                            prop_assert!(plan.q[h][st][a] <= per_map[h][st][a]);
                        }
                    }
                }
            }
            let t = s.spec.sample_episode(k, &plan, &mut streams);
            state.update(&s.prepared, &t).unwrap();
        }
    }

    #[test]
    fn beta_is_positive_and_nondecreasing(c in 1e-3f64..10.0, delta in 0.01f64..0.99, k in 1usize..100_000) {
        let s = cluster_setup(1);
        let sched = BetaSchedule::new(BetaRule::Theorem { c, delta }, s.class.constants().unwrap(), 3).unwrap();
        for map in 0..s.class.len() {
            prop_assert!(sched.beta(k, map) > 0.0);
            prop_assert!(sched.beta(k + 1, map) >= sched.beta(k, map));
        }
    }
}
