//! Finite episodic MDPs and their exact dynamic-programming oracle.
//!
//! Steps are indexed `0..horizon` internally; user-facing artifacts print
//! them 1-based.

use std::fmt;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::EpisodeStreams;

/// Absolute tolerance for every probability check.
pub const PROB_TOL: f64 = 1e-9;
/// Tolerance for declaring two action values tied.
pub const TIE_TOL: f64 = 1e-9;

/// Exact tabular episodic MDP with time-inhomogeneous rewards and kernels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpSpec {
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    /// `rewards[h][s][a]`
    pub rewards: Vec<Vec<Vec<f64>>>,
    /// `transitions[h][s][a][s']`
    pub transitions: Vec<Vec<Vec<Vec<f64>>>>,
    pub init_dist: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    Shape { detail: String },
    NonFinite { detail: String },
    RewardRange { h: usize, s: usize, a: usize, value: f64 },
    NegativeProbability { h: usize, s: usize, a: usize, next: usize, value: f64 },
    TransitionRowSum { h: usize, s: usize, a: usize, defect: f64 },
    NegativeInitProbability { s: usize, value: f64 },
    InitDistSum { defect: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Shape { detail } => write!(f, "shape: {detail}"),
            Violation::NonFinite { detail } => write!(f, "non-finite value: {detail}"),
            Violation::RewardRange { h, s, a, value } => {
                write!(f, "reward r[{h}][{s}][{a}] = {value} outside [0, 1]")
            }
            Violation::NegativeProbability { h, s, a, next, value } => {
                write!(f, "P[{h}][{s}][{a}][{next}] = {value} < 0")
            }
            Violation::TransitionRowSum { h, s, a, defect } => {
                write!(f, "transition row (h={h}, s={s}, a={a}) misses unit mass by {defect:.3e}")
            }
            Violation::NegativeInitProbability { s, value } => {
                write!(f, "initial probability of state {s} is {value} < 0")
            }
            Violation::InitDistSum { defect } => {
                write!(f, "initial distribution misses unit mass by {defect:.3e}")
            }
        }
    }
}

/// Every invariant violation found by [`MdpSpec::validate`]; empty when valid.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "no violations");
        }
        let parts: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        write!(f, "{}", parts.join("; "))
    }
}

/// Deterministic, step-dependent policy: `actions[h][s]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Policy {
    pub actions: Vec<Vec<usize>>,
}

impl Policy {
    pub fn constant(horizon: usize, num_states: usize, action: usize) -> Self {
        Self {
            actions: vec![vec![action; num_states]; horizon],
        }
    }

    pub fn action(&self, h: usize, s: usize) -> usize {
        self.actions[h][s]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalSolution {
    /// `q_star[h][s][a]`
    pub q_star: Vec<Vec<Vec<f64>>>,
    /// `v_star[h][s]` for `h < horizon`; the terminal value is zero.
    pub v_star: Vec<Vec<f64>>,
    pub pi_star: Policy,
    pub gaps: Vec<Vec<Vec<f64>>>,
    /// Smallest nonzero gap, `+inf` when every gap is zero.
    #[serde(with = "inf_as_null")]
    pub gap_min: f64,
    pub unique_optimal: bool,
}

mod inf_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_some(x)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// Exact values of a deterministic policy.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyValue {
    pub v: Vec<Vec<f64>>,
    pub q: Vec<Vec<Vec<f64>>>,
}

/// State distribution `d_h(s)` of a policy started from `init_dist`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyMeasure {
    pub dist: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub h: usize,
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub episode: usize,
    pub steps: Vec<Step>,
}

impl Trajectory {
    pub fn initial_state(&self) -> usize {
        self.steps[0].state
    }

    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }
}

/// Chooses the action at `(h, s)`. Deterministic actors ignore `rng`.
pub trait Actor {
    fn act(&self, h: usize, s: usize, rng: &mut dyn RngCore) -> usize;
}

impl Actor for Policy {
    fn act(&self, h: usize, s: usize, _rng: &mut dyn RngCore) -> usize {
        self.action(h, s)
    }
}

/// Plays `base` with probability `1 - epsilon`, otherwise a uniform action.
#[derive(Debug, Clone)]
pub struct EpsilonGreedy<'a> {
    pub base: &'a Policy,
    pub epsilon: f64,
    pub num_actions: usize,
}

impl Actor for EpsilonGreedy<'_> {
    fn act(&self, h: usize, s: usize, rng: &mut dyn RngCore) -> usize {
        if rng.random::<f64>() < self.epsilon {
            rng.random_range(0..self.num_actions)
        } else {
            self.base.action(h, s)
        }
    }
}

/// Index of the largest entry, lowest index on ties within [`TIE_TOL`].
pub fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] + TIE_TOL {
            best = i;
        }
    }
    best
}

/// Draws an index from a probability vector with one uniform variate.
pub fn sample_categorical(probs: &[f64], rng: &mut dyn RngCore) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_positive = i;
            acc += p;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

impl MdpSpec {
    /// Two states, two actions, two steps. From state 0, action 0 stays with
    /// reward 1 and action 1 moves to the absorbing zero-reward state 1.
    pub fn stay_or_leave() -> Self {
        let rewards = vec![vec![vec![1.0, 0.0], vec![0.0, 0.0]]; 2];
        let step = vec![
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![vec![0.0, 1.0], vec![0.0, 1.0]],
        ];
        Self {
            num_states: 2,
            num_actions: 2,
            horizon: 2,
            rewards,
            transitions: vec![step.clone(), step],
            init_dist: vec![1.0, 0.0],
        }
    }

    pub fn num_pairs(&self) -> usize {
        self.num_states * self.num_actions
    }

    pub fn pair_index(&self, s: usize, a: usize) -> usize {
        s * self.num_actions + a
    }

    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        let (ns, na, nh) = (self.num_states, self.num_actions, self.horizon);
        for (name, value) in [("num_states", ns), ("num_actions", na), ("horizon", nh)] {
            if value == 0 {
                violations.push(Violation::Shape {
                    detail: format!("{name} must be positive"),
                });
            }
        }
        if self.init_dist.len() != ns {
            violations.push(Violation::Shape {
                detail: format!("init_dist has {} entries, expected {ns}", self.init_dist.len()),
            });
        }
        let rewards_ok = self.rewards.len() == nh
            && self
                .rewards
                .iter()
                .all(|rh| rh.len() == ns && rh.iter().all(|rs| rs.len() == na));
        if !rewards_ok {
            violations.push(Violation::Shape {
                detail: format!("rewards must be {nh}x{ns}x{na}"),
            });
        }
        let transitions_ok = self.transitions.len() == nh
            && self.transitions.iter().all(|ph| {
                ph.len() == ns
                    && ph
                        .iter()
                        .all(|ps| ps.len() == na && ps.iter().all(|row| row.len() == ns))
            });
        if !transitions_ok {
            violations.push(Violation::Shape {
                detail: format!("transitions must be {nh}x{ns}x{na}x{ns}"),
            });
        }
        if !violations.is_empty() {
            return ValidationReport { violations };
        }

        for h in 0..nh {
            for s in 0..ns {
                for a in 0..na {
                    let r = self.rewards[h][s][a];
                    if !r.is_finite() {
                        violations.push(Violation::NonFinite {
                            detail: format!("reward r[{h}][{s}][{a}]"),
                        });
                    } else if !(0.0..=1.0).contains(&r) {
                        violations.push(Violation::RewardRange { h, s, a, value: r });
                    }
                    let row = &self.transitions[h][s][a];
                    let mut sum = 0.0;
                    let mut finite = true;
                    for (next, &p) in row.iter().enumerate() {
                        if !p.is_finite() {
                            finite = false;
                            violations.push(Violation::NonFinite {
                                detail: format!("P[{h}][{s}][{a}][{next}]"),
                            });
                        } else if p < 0.0 {
                            violations.push(Violation::NegativeProbability {
                                h,
                                s,
                                a,
                                next,
                                value: p,
                            });
                        }
                        sum += p;
                    }
                    if finite && (sum - 1.0).abs() > PROB_TOL {
                        violations.push(Violation::TransitionRowSum {
                            h,
                            s,
                            a,
                            defect: 1.0 - sum,
                        });
                    }
                }
            }
        }
        let mut sum = 0.0;
        for (s, &p) in self.init_dist.iter().enumerate() {
            if !p.is_finite() {
                violations.push(Violation::NonFinite {
                    detail: format!("init_dist[{s}]"),
                });
            } else if p < 0.0 {
                violations.push(Violation::NegativeInitProbability { s, value: p });
            }
            sum += p;
        }
        if sum.is_finite() && (sum - 1.0).abs() > PROB_TOL {
            violations.push(Violation::InitDistSum { defect: 1.0 - sum });
        }
        ValidationReport { violations }
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let report = self.validate();
        if report.is_ok() {
            Ok(())
        } else {
            Err(Error::InvalidSpec(report))
        }
    }

    /// `Σ_{s'} P_h(s'|s,a) v(s')`
    pub fn expected_next(&self, h: usize, s: usize, a: usize, v: &[f64]) -> f64 {
        self.transitions[h][s][a]
            .iter()
            .zip(v)
            .map(|(p, x)| p * x)
            .sum()
    }

    /// Backward induction on the Bellman optimality equation.
    pub fn solve_optimal(&self) -> Result<OptimalSolution> {
        self.ensure_valid()?;
        let (ns, na, nh) = (self.num_states, self.num_actions, self.horizon);
        let mut q_star = vec![vec![vec![0.0; na]; ns]; nh];
        let mut v_star = vec![vec![0.0; ns]; nh];
        let mut pi = vec![vec![0usize; ns]; nh];
        let mut unique = true;
        let mut v_next = vec![0.0; ns];
        for h in (0..nh).rev() {
            for s in 0..ns {
                for a in 0..na {
                    q_star[h][s][a] = self.rewards[h][s][a] + self.expected_next(h, s, a, &v_next);
                }
                let best = argmax_lowest(&q_star[h][s]);
                let best_value = q_star[h][s][best];
                let ties = q_star[h][s]
                    .iter()
                    .filter(|&&q| (q - best_value).abs() <= TIE_TOL)
                    .count();
                if ties > 1 {
                    unique = false;
                }
                pi[h][s] = best;
                v_star[h][s] = best_value;
            }
            v_next.clone_from(&v_star[h]);
        }
        let mut gaps = vec![vec![vec![0.0; na]; ns]; nh];
        let mut gap_min = f64::INFINITY;
        for h in 0..nh {
            for s in 0..ns {
                for a in 0..na {
                    // Values within the tie tolerance count as exactly optimal.
                    let raw = v_star[h][s] - q_star[h][s][a];
                    let gap = if raw <= TIE_TOL { 0.0 } else { raw };
                    gaps[h][s][a] = gap;
                    if gap > 0.0 {
                        gap_min = gap_min.min(gap);
                    }
                }
            }
        }
        Ok(OptimalSolution {
            q_star,
            v_star,
            pi_star: Policy { actions: pi },
            gaps,
            gap_min,
            unique_optimal: unique,
        })
    }

    fn check_policy(&self, policy: &Policy) -> Result<()> {
        if policy.actions.len() != self.horizon
            || policy.actions.iter().any(|row| row.len() != self.num_states)
        {
            return Err(Error::Dimension(format!(
                "policy must be {}x{}",
                self.horizon, self.num_states
            )));
        }
        for (h, row) in policy.actions.iter().enumerate() {
            for (s, &action) in row.iter().enumerate() {
                if action >= self.num_actions {
                    return Err(Error::ActionOutOfRange { h, s, action });
                }
            }
        }
        Ok(())
    }

    /// Exact backward recursion for a deterministic policy.
    pub fn evaluate_policy(&self, policy: &Policy) -> Result<PolicyValue> {
        self.check_policy(policy)?;
        let (ns, na, nh) = (self.num_states, self.num_actions, self.horizon);
        let mut q = vec![vec![vec![0.0; na]; ns]; nh];
        let mut v = vec![vec![0.0; ns]; nh];
        let mut v_next = vec![0.0; ns];
        for h in (0..nh).rev() {
            for s in 0..ns {
                for a in 0..na {
                    q[h][s][a] = self.rewards[h][s][a] + self.expected_next(h, s, a, &v_next);
                }
                v[h][s] = q[h][s][policy.action(h, s)];
            }
            v_next.clone_from(&v[h]);
        }
        Ok(PolicyValue { v, q })
    }

    /// Value of the policy at step 0 for each initial state, without Q tables.
    pub fn initial_values(&self, policy: &Policy) -> Vec<f64> {
        let ns = self.num_states;
        let mut v_next = vec![0.0; ns];
        let mut v = vec![0.0; ns];
        for h in (0..self.horizon).rev() {
            for (s, vs) in v.iter_mut().enumerate() {
                let a = policy.action(h, s);
                *vs = self.rewards[h][s][a] + self.expected_next(h, s, a, &v_next);
            }
            std::mem::swap(&mut v, &mut v_next);
        }
        v_next
    }

    /// Forward recursion `d_{h+1}(s') = Σ_s d_h(s) P_h(s'|s, π_h(s))`.
    pub fn occupancy(&self, policy: &Policy) -> Result<OccupancyMeasure> {
        self.check_policy(policy)?;
        let ns = self.num_states;
        let mut dist = Vec::with_capacity(self.horizon);
        dist.push(self.init_dist.clone());
        for h in 0..self.horizon - 1 {
            let mut next = vec![0.0; ns];
            for s in 0..ns {
                let mass = dist[h][s];
                if mass == 0.0 {
                    continue;
                }
                let row = &self.transitions[h][s][policy.action(h, s)];
                for (t, p) in row.iter().enumerate() {
                    next[t] += mass * p;
                }
            }
            dist.push(next);
        }
        Ok(OccupancyMeasure { dist })
    }

    /// Rolls out one episode: `s_1 ~ ρ` from the init stream, actions from
    /// `actor` (policy stream), next states from the transition stream.
    pub fn sample_episode(
        &self,
        episode: usize,
        actor: &dyn Actor,
        streams: &mut EpisodeStreams,
    ) -> Trajectory {
        let mut state = sample_categorical(&self.init_dist, &mut streams.init_state);
        let mut steps = Vec::with_capacity(self.horizon);
        for h in 0..self.horizon {
            let action = actor.act(h, state, &mut streams.policy);
            let next_state =
                sample_categorical(&self.transitions[h][state][action], &mut streams.transition);
            steps.push(Step {
                h,
                state,
                action,
                reward: self.rewards[h][state][action],
                next_state,
            });
            state = next_state;
        }
        Trajectory { episode, steps }
    }
}
