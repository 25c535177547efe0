use nalgebra::DVector;
use rand::RngCore;

use super::{BetaSchedule, LearnerState};
use crate::error::{Error, Result};
use crate::linalg;
use crate::mdp::{argmax_lowest, Actor, MdpSpec, Policy};
use crate::representation::{RepresentationClass, StateFeatureMap};

/// Feature vectors and `ψ` quantities precomputed once per run.
#[derive(Debug, Clone)]
pub struct PreparedClass {
    pub psi: StateFeatureMap,
    /// `features[map][pair]`
    pub features: Vec<Vec<DVector<f64>>>,
    pub num_actions: usize,
    pub c_psi: f64,
}

impl PreparedClass {
    pub fn new(class: &RepresentationClass, spec: &MdpSpec) -> Result<Self> {
        class.check_shapes(spec)?;
        Ok(Self {
            psi: class.state_features()?,
            features: class.feature_maps.iter().map(|f| f.vectors()).collect(),
            num_actions: spec.num_actions,
            c_psi: class.constants()?.c_psi,
        })
    }

    pub fn num_maps(&self) -> usize {
        self.features.len()
    }
}

/// Optimistic tables for one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodePlan {
    /// `Q^k_h(s,a) = min_φ Q^k_{h,φ}(s,a)`, indexed `[h][s][a]`.
    pub q: Vec<Vec<Vec<f64>>>,
    /// `V^k_h(s) = min{max_a Q^k_h(s,a), H}`, indexed `[h][s]`.
    pub v: Vec<Vec<f64>>,
    /// Index of the map attaining the minimum, `[h][s][a]`.
    pub chosen_rep: Vec<Vec<Vec<usize>>>,
    pub policy: Policy,
    /// Per-map estimates `Q^k_{h,φ}`, `[map][h][s][a]`.
    pub rep_q: Vec<Vec<Vec<Vec<f64>>>>,
    /// Per-map bonuses `Γ^k_{h,φ}`, `[map][h][s][a]`.
    pub rep_bonus: Vec<Vec<Vec<Vec<f64>>>>,
}

impl EpisodePlan {
    /// `max_{h,s,a} min_φ Γ^k_{h,φ}(s,a)`
    pub fn max_min_bonus(&self) -> f64 {
        let nh = self.q.len();
        let mut worst: f64 = 0.0;
        for h in 0..nh {
            for s in 0..self.q[h].len() {
                for a in 0..self.q[h][s].len() {
                    let min = self
                        .rep_bonus
                        .iter()
                        .map(|b| b[h][s][a])
                        .fold(f64::INFINITY, f64::min);
                    worst = worst.max(min);
                }
            }
        }
        worst
    }
}

impl Actor for EpisodePlan {
    fn act(&self, h: usize, s: usize, _rng: &mut dyn RngCore) -> usize {
        self.policy.action(h, s)
    }
}

/// Backward pass for episode `k` (1-based): per-map optimistic Q, minimum
/// across maps with lowest-index ties, value clamped at `H`, greedy policy.
pub fn q_backward_pass(
    state: &LearnerState,
    spec: &MdpSpec,
    prepared: &PreparedClass,
    schedule: &BetaSchedule,
    k: usize,
) -> Result<EpisodePlan> {
    let (ns, na, nh) = (spec.num_states, spec.num_actions, spec.horizon);
    let nmaps = prepared.num_maps();
    if state.num_maps() != nmaps || state.horizon() != nh || schedule.maps.len() != nmaps {
        return Err(Error::Dimension(
            "learner state, schedule and class disagree on maps or horizon".into(),
        ));
    }
    let horizon = nh as f64;
    let mut q = vec![vec![vec![0.0; na]; ns]; nh];
    let mut v = vec![vec![0.0; ns]; nh];
    let mut chosen = vec![vec![vec![0usize; na]; ns]; nh];
    let mut pi = vec![vec![0usize; ns]; nh];
    let mut rep_q = vec![vec![vec![vec![0.0; na]; ns]; nh]; nmaps];
    let mut rep_bonus = vec![vec![vec![vec![0.0; na]; ns]; nh]; nmaps];
    let betas: Vec<f64> = (0..nmaps).map(|i| schedule.beta(k, i)).collect();
    let mut v_next = vec![0.0; ns];

    for h in (0..nh).rev() {
        // Ψᵀ v_{h+1} is shared by every map.
        let w = prepared.psi.aggregate(&v_next);
        for i in 0..nmaps {
            let st = &state.stats[i][h];
            let mw = &st.estimate * &w;
            for s in 0..ns {
                for a in 0..na {
                    let x = &prepared.features[i][s * na + a];
                    let quad = linalg::quad_form(&st.cov_inv, x);
                    if quad < -1e-10 {
                        return Err(Error::Numerical(format!(
                            "negative quadratic form {quad:.3e} (map {i}, step {h})"
                        )));
                    }
                    let gamma = prepared.c_psi * horizon * (betas[i] * quad.max(0.0)).sqrt();
                    rep_bonus[i][h][s][a] = gamma;
                    rep_q[i][h][s][a] = spec.rewards[h][s][a] + x.dot(&mw) + gamma;
                }
            }
        }
        for s in 0..ns {
            for a in 0..na {
                let mut best = 0;
                for i in 1..nmaps {
                    if rep_q[i][h][s][a] < rep_q[best][h][s][a] {
                        best = i;
                    }
                }
                q[h][s][a] = rep_q[best][h][s][a];
                chosen[h][s][a] = best;
            }
            let greedy = argmax_lowest(&q[h][s]);
            pi[h][s] = greedy;
            v[h][s] = q[h][s][greedy].min(horizon);
        }
        v_next.clone_from(&v[h]);
    }
    Ok(EpisodePlan {
        q,
        v,
        chosen_rep: chosen,
        policy: Policy { actions: pi },
        rep_q,
        rep_bonus,
    })
}
