//! Reference computations written without the library's solvers.
#![allow(dead_code)]

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use relex::mdp::MdpSpec;

pub fn random_spec(seed: u64, num_states: usize, num_actions: usize, horizon: usize) -> MdpSpec {
    let mut rng = StdRng::seed_from_u64(seed);
    let row = |rng: &mut StdRng, n: usize| -> Vec<f64> {
        // Sparse rows now and then, so ties and unreachable states show up.
        let w: Vec<f64> = (0..n)
            .map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random::<f64>() })
            .collect();
        let total: f64 = w.iter().sum();
        if total == 0.0 {
            let mut one = vec![0.0; n];
            one[rng.random_range(0..n)] = 1.0;
            return one;
        }
        w.iter().map(|x| x / total).collect()
    };
    let rewards = (0..horizon)
        .map(|_| {
            (0..num_states)
                .map(|_| (0..num_actions).map(|_| rng.random::<f64>()).collect())
                .collect()
        })
        .collect();
    let transitions = (0..horizon)
        .map(|_| {
            (0..num_states)
                .map(|_| (0..num_actions).map(|_| row(&mut rng, num_states)).collect())
                .collect()
        })
        .collect();
    let init_dist = row(&mut rng, num_states);
    MdpSpec {
        num_states,
        num_actions,
        horizon,
        rewards,
        transitions,
        init_dist,
    }
}

/// Every deterministic policy `[h][s]`.
pub fn all_policies(spec: &MdpSpec) -> Vec<Vec<Vec<usize>>> {
    let cells = spec.horizon * spec.num_states;
    let total = spec.num_actions.pow(cells as u32);
    (0..total)
        .map(|mut code| {
            let mut pi = vec![vec![0; spec.num_states]; spec.horizon];
            for h in 0..spec.horizon {
                for s in 0..spec.num_states {
                    pi[h][s] = code % spec.num_actions;
                    code /= spec.num_actions;
                }
            }
            pi
        })
        .collect()
}

/// Expected return from `(h, s)` taking `a` first, then following `pi`,
/// by expanding every path.
pub fn path_value(spec: &MdpSpec, pi: &[Vec<usize>], h: usize, s: usize, a: usize) -> f64 {
    let mut total = spec.rewards[h][s][a];
    if h + 1 < spec.horizon {
        for (next, &p) in spec.transitions[h][s][a].iter().enumerate() {
            if p > 0.0 {
                total += p * path_value(spec, pi, h + 1, next, pi[h + 1][next]);
            }
        }
    }
    total
}

pub struct Enumerated {
    pub q_star: Vec<Vec<Vec<f64>>>,
    pub v_star: Vec<Vec<f64>>,
}

/// `Q*_h(s,a) = max_π [r + E V^π_{h+1}]` and `V*_h(s) = max_π V^π_h(s)`
/// over all deterministic policies.
pub fn enumerate_optimal(spec: &MdpSpec) -> Enumerated {
    let policies = all_policies(spec);
    let mut q_star = vec![vec![vec![f64::NEG_INFINITY; spec.num_actions]; spec.num_states]; spec.horizon];
    for pi in &policies {
        for h in 0..spec.horizon {
            for s in 0..spec.num_states {
                for a in 0..spec.num_actions {
                    let q = path_value(spec, pi, h, s, a);
                    if q > q_star[h][s][a] {
                        q_star[h][s][a] = q;
                    }
                }
            }
        }
    }
    let v_star = q_star
        .iter()
        .map(|qh| qh.iter().map(|qs| qs.iter().cloned().fold(f64::NEG_INFINITY, f64::max)).collect())
        .collect();
    Enumerated { q_star, v_star }
}

/// Largest `|φ(s,a)ᵀ M_h ψ(s') − P_h(s'|s,a)|` computed with plain loops.
pub fn kernel_error(
    spec: &MdpSpec,
    table: &[Vec<f64>],
    models: &[Vec<Vec<f64>>],
    psi: &[Vec<f64>],
) -> f64 {
    let mut worst: f64 = 0.0;
    for h in 0..spec.horizon {
        for s in 0..spec.num_states {
            for a in 0..spec.num_actions {
                let phi = &table[s * spec.num_actions + a];
                for (next, psi_row) in psi.iter().enumerate() {
                    let mut p = 0.0;
                    for (i, &x) in phi.iter().enumerate() {
                        for (j, &y) in psi_row.iter().enumerate() {
                            p += x * models[h][i][j] * y;
                        }
                    }
                    worst = worst.max((p - spec.transitions[h][s][a][next]).abs());
                }
            }
        }
    }
    worst
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
