//! Executable checks of the learner's structural properties: optimism,
//! covariance growth on the diversity subspace, bonus decay, and the
//! regret-vs-gap inequality.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::learner::{EpisodePlan, LearnerState};
use crate::linalg;
use crate::mdp::{sample_categorical, MdpSpec, OptimalSolution, Policy};
use crate::representation::CoverageReport;

/// Cells with `Q^k < Q* − OPTIMISM_TOL` count as violations.
pub const OPTIMISM_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AuditToggles {
    pub optimism: bool,
    pub covariance_growth: bool,
    pub bonus_decay: bool,
    pub regret_gap: bool,
    /// Replays per Monte Carlo regret spot check; 0 disables the check.
    pub mc_replays: usize,
}

impl Default for AuditToggles {
    fn default() -> Self {
        Self {
            optimism: true,
            covariance_growth: true,
            bonus_decay: true,
            regret_gap: true,
            mc_replays: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OptimismAudit {
    pub cells_checked: u64,
    pub violations: u64,
    pub episodes_with_violation: u64,
    pub first_violation_episode: Option<usize>,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthEntry {
    pub episode: usize,
    /// 1-based step.
    pub step: usize,
    pub map: usize,
    /// Smallest eigenvalue of `Bᵀ U B` for an orthonormal basis `B` of the
    /// retained eigenspace of `Λ_{h,φ}`.
    pub projected_min_eig: f64,
    /// `0.5 σ_φ (k − 1)`
    pub reference: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BonusPoint {
    pub episode: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloCheck {
    pub episode: usize,
    pub init_state: usize,
    pub exact_regret: f64,
    pub mc_regret: f64,
    pub std_err: f64,
    pub within_5se: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretGapCheck {
    pub cum_regret: f64,
    pub gap_sum: f64,
    pub bound: f64,
    /// A single failing run is flagged, never treated as an error.
    pub holds: bool,
}

/// Accumulators carried through a run (and its snapshots).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditState {
    pub optimism: OptimismAudit,
    pub growth: Vec<GrowthEntry>,
    pub bonus_trace: Vec<BonusPoint>,
    pub mc_checks: Vec<MonteCarloCheck>,
    pub warnings: Vec<String>,
}

impl AuditState {
    pub fn record_optimism(&mut self, k: usize, plan: &EpisodePlan, solution: &OptimalSolution) {
        let mut violations = 0u64;
        let mut cells = 0u64;
        for (qh, qsh) in plan.q.iter().zip(&solution.q_star) {
            for (qs, qss) in qh.iter().zip(qsh) {
                for (&q, &qstar) in qs.iter().zip(qss) {
                    cells += 1;
                    if q < qstar - OPTIMISM_TOL {
                        violations += 1;
                    }
                }
            }
        }
        let o = &mut self.optimism;
        o.cells_checked += cells;
        o.violations += violations;
        if violations > 0 {
            o.episodes_with_violation += 1;
            o.first_violation_episode.get_or_insert(k);
        }
    }

    /// Projects every `U^k_{h,φ}` onto the retained eigenspace of `Λ_{h,φ}`.
    pub fn record_growth(&mut self, k: usize, state: &LearnerState, coverage: &CoverageReport) {
        for (map, (per_h, cov)) in state.stats.iter().zip(&coverage.maps).enumerate() {
            let Some(sigma) = cov.sigma else { continue };
            for (h, st) in per_h.iter().enumerate() {
                let basis = cov.basis(h);
                if basis.ncols() == 0 {
                    continue;
                }
                let projected = basis.transpose() * &st.cov * &basis;
                let min_eig = linalg::min_eigenvalue(&projected);
                let reference = 0.5 * sigma * (k as f64 - 1.0);
                self.growth.push(GrowthEntry {
                    episode: k,
                    step: h + 1,
                    map,
                    projected_min_eig: min_eig,
                    reference,
                    pass: min_eig >= reference,
                });
            }
        }
    }

    pub fn record_bonus(&mut self, k: usize, plan: &EpisodePlan) {
        self.bonus_trace.push(BonusPoint {
            episode: k,
            value: plan.max_min_bonus(),
        });
    }

    pub fn finish(
        &self,
        toggles: &AuditToggles,
        episodes: usize,
        burn_in_fraction: f64,
        regret_gap: Option<RegretGapCheck>,
    ) -> AuditReport {
        let mut optimism = self.optimism.clone();
        optimism.fraction = if optimism.cells_checked == 0 {
            0.0
        } else {
            optimism.violations as f64 / optimism.cells_checked as f64
        };
        let burn_in = (burn_in_fraction * episodes as f64).ceil() as usize;
        let late: Vec<&GrowthEntry> = self.growth.iter().filter(|g| g.episode >= burn_in).collect();
        let growth_pass_fraction = (!late.is_empty())
            .then(|| late.iter().filter(|g| g.pass).count() as f64 / late.len() as f64);
        let half = episodes as f64 / 2.0;
        let second_half: Vec<(f64, f64)> = self
            .bonus_trace
            .iter()
            .filter(|p| p.episode as f64 >= half && p.value > 0.0)
            .map(|p| (p.episode as f64, p.value))
            .collect();
        AuditReport {
            optimism: toggles.optimism.then_some(optimism),
            covariance_growth: self.growth.clone(),
            growth_burn_in: burn_in,
            growth_pass_fraction,
            bonus_trace: self.bonus_trace.clone(),
            bonus_slope: fit_loglog_slope(&second_half),
            regret_gap,
            mc_checks: self.mc_checks.clone(),
            warnings: self.warnings.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub optimism: Option<OptimismAudit>,
    pub covariance_growth: Vec<GrowthEntry>,
    pub growth_burn_in: usize,
    /// Share of growth entries with `k >= growth_burn_in` that pass.
    pub growth_pass_fraction: Option<f64>,
    pub bonus_trace: Vec<BonusPoint>,
    /// Least-squares slope of `log Γ` against `log k` over the second half.
    pub bonus_slope: Option<f64>,
    pub regret_gap: Option<RegretGapCheck>,
    pub mc_checks: Vec<MonteCarloCheck>,
    pub warnings: Vec<String>,
}

/// Slope of the least-squares line through `(log x, log y)`.
pub fn fit_loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// `2 Σ gaps + (16 H² / 3) ln((1 + ln(HK)) K² / δ) + 2`
pub fn regret_gap_bound(gap_sum: f64, horizon: usize, episodes: usize, delta: f64) -> f64 {
    let h = horizon as f64;
    let k = episodes as f64;
    2.0 * gap_sum + 16.0 * h * h / 3.0 * ((1.0 + (h * k).ln()) * k * k / delta).ln() + 2.0
}

/// Mean and standard error of the return of `policy` started at `start`.
pub fn monte_carlo_value(
    spec: &MdpSpec,
    policy: &Policy,
    start: usize,
    replays: usize,
    rng: &mut dyn RngCore,
) -> (f64, f64) {
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..replays {
        let mut state = start;
        let mut ret = 0.0;
        for h in 0..spec.horizon {
            let a = policy.action(h, state);
            ret += spec.rewards[h][state][a];
            state = sample_categorical(&spec.transitions[h][state][a], rng);
        }
        sum += ret;
        sum_sq += ret * ret;
    }
    let n = replays.max(1) as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0);
    (mean, (var / n).sqrt())
}
