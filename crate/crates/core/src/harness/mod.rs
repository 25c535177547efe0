//! End-to-end experiments: exact regret accounting, phase detection,
//! baseline comparison and empirical audits of the learner's behaviour.

mod audit;
mod compare;
mod phase;
mod run;

pub use audit::{
    fit_loglog_slope, monte_carlo_value, regret_gap_bound, AuditReport, AuditState, AuditToggles,
    GrowthEntry, MonteCarloCheck, OptimismAudit, RegretGapCheck,
};
pub use compare::{compare_baselines, median, AlgorithmSummary, ComparisonTable};
pub use phase::{detect_phase, PhaseReport, REGRET_ZERO_TOL};
pub use run::{run_experiment, EpisodeRecord, RunOutput, RunSnapshot, Runner};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{MdpSpec, OptimalSolution};
use crate::representation::{coverage_check, CoverageReport, RepresentationClass};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Relex,
    /// The same learner restricted to one feature map.
    Single(usize),
    /// Plays the optimal policy every episode.
    Oracle,
    /// Draws a uniformly random deterministic policy every episode.
    UniformRandom,
}

impl Algorithm {
    pub fn label(&self) -> String {
        match self {
            Algorithm::Relex => "relex".into(),
            Algorithm::Single(i) => format!("single{i}"),
            Algorithm::Oracle => "oracle".into(),
            Algorithm::UniformRandom => "uniform_random".into(),
        }
    }

    pub fn is_learner(&self) -> bool {
        matches!(self, Algorithm::Relex | Algorithm::Single(_))
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

pub const DEFAULT_C: f64 = 0.5;
pub const DEFAULT_DELTA: f64 = 0.1;
pub const DEFAULT_RANK_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub episodes: usize,
    pub seed: u64,
    pub c: f64,
    pub delta: f64,
    /// Covariance and bonus audits are sampled every `audit_stride` episodes.
    pub audit_stride: usize,
    pub audits: AuditToggles,
    /// Covariance-growth pass/fail only counts episodes `k >= fraction * K`.
    pub burn_in_fraction: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Relex,
            episodes: 1000,
            seed: 0,
            c: DEFAULT_C,
            delta: DEFAULT_DELTA,
            audit_stride: 100,
            audits: AuditToggles::default(),
            burn_in_fraction: 0.25,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(Error::InvalidParameter("episodes must be at least 1".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "delta must lie in (0, 1), got {}",
                self.delta
            )));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::InvalidParameter(format!("c must be positive, got {}", self.c)));
        }
        if self.audit_stride == 0 {
            return Err(Error::InvalidParameter("audit_stride must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.burn_in_fraction) {
            return Err(Error::InvalidParameter("burn_in_fraction must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// A validated MDP with its representation class, optimal solution and
/// coverage diagnostics.
#[derive(Debug, Clone)]
pub struct Instance {
    pub spec: MdpSpec,
    pub class: RepresentationClass,
    pub solution: OptimalSolution,
    pub coverage: CoverageReport,
    pub rank_tol: f64,
}

impl Instance {
    pub fn new(spec: MdpSpec, class: RepresentationClass, rank_tol: f64) -> Result<Self> {
        let solution = spec.solve_optimal()?;
        class.check_shapes(&spec)?;
        class.constants()?;
        let coverage = coverage_check(&class, &spec, &solution, rank_tol)?;
        Ok(Self {
            spec,
            class,
            solution,
            coverage,
            rank_tol,
        })
    }

    /// The same MDP with only the listed feature maps.
    pub fn restrict(&self, maps: &[usize]) -> Result<Self> {
        let class = self.class.restrict(maps)?;
        let coverage = coverage_check(&class, &self.spec, &self.solution, self.rank_tol)?;
        Ok(Self {
            spec: self.spec.clone(),
            class,
            solution: self.solution.clone(),
            coverage,
            rank_tol: self.rank_tol,
        })
    }
}
