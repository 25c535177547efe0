use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::PreparedClass;
use crate::error::{Error, Result};
use crate::linalg;
use crate::mdp::Trajectory;
use crate::representation::RepresentationClass;

/// Ridge-regression statistics for one (feature map, step).
#[derive(Debug, Clone, PartialEq)]
pub struct RepStats {
    /// `U = I + Σ φ φᵀ`
    pub cov: DMatrix<f64>,
    pub cov_inv: DMatrix<f64>,
    /// `B = Σ φ (K_ψ⁻¹ ψ(s'))ᵀ`
    pub cross: DMatrix<f64>,
    /// `M = U⁻¹ B`
    pub estimate: DMatrix<f64>,
    pub count: u64,
}

impl RepStats {
    fn new(d: usize, psi_dim: usize) -> Self {
        Self {
            cov: DMatrix::identity(d, d),
            cov_inv: DMatrix::identity(d, d),
            cross: DMatrix::zeros(d, psi_dim),
            estimate: DMatrix::zeros(d, psi_dim),
            count: 0,
        }
    }

    /// `M` from a fresh linear solve of `U X = B`.
    pub fn solve_estimate(&self) -> Result<DMatrix<f64>> {
        self.cov
            .clone()
            .cholesky()
            .map(|c| c.solve(&self.cross))
            .ok_or_else(|| Error::Singular("covariance is not positive definite".into()))
    }
}

/// Statistics for every map and step, indexed `stats[map][h]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerState {
    pub stats: Vec<Vec<RepStats>>,
}

impl LearnerState {
    /// `U = I`, `B = 0`, `M = 0` everywhere.
    pub fn init(class: &RepresentationClass, horizon: usize) -> Self {
        let psi_dim = class.psi_dim();
        let stats = class
            .feature_maps
            .iter()
            .map(|phi| (0..horizon).map(|_| RepStats::new(phi.d, psi_dim)).collect())
            .collect();
        Self { stats }
    }

    /// Identity covariance with the true `M*` substituted for the estimate.
    pub fn with_true_models(class: &RepresentationClass, horizon: usize) -> Result<Self> {
        let mut state = Self::init(class, horizon);
        for (i, per_h) in state.stats.iter_mut().enumerate() {
            for (h, st) in per_h.iter_mut().enumerate() {
                st.estimate = class.model(i, h)?;
            }
        }
        Ok(state)
    }

    pub fn num_maps(&self) -> usize {
        self.stats.len()
    }

    pub fn horizon(&self) -> usize {
        self.stats.first().map_or(0, Vec::len)
    }

    /// Adds one episode's transitions to every regression, maintaining
    /// `U⁻¹` by rank-one updates and recomputing `M = U⁻¹ B`.
    pub fn update(&mut self, prepared: &PreparedClass, trajectory: &Trajectory) -> Result<()> {
        if trajectory.steps.len() != self.horizon() {
            return Err(Error::Dimension(format!(
                "trajectory has {} steps, learner expects {}",
                trajectory.steps.len(),
                self.horizon()
            )));
        }
        if prepared.features.len() != self.num_maps() {
            return Err(Error::Dimension("prepared class does not match learner state".into()));
        }
        for (i, per_h) in self.stats.iter_mut().enumerate() {
            for (step, st) in trajectory.steps.iter().zip(per_h.iter_mut()) {
                let pair = step.state * prepared.num_actions + step.action;
                let x = prepared.features[i].get(pair).ok_or_else(|| {
                    Error::Dimension(format!("pair {pair} outside feature table"))
                })?;
                let y = prepared.psi.targets.get(step.next_state).ok_or_else(|| {
                    Error::Dimension(format!("state {} outside psi", step.next_state))
                })?;
                if x.len() != st.cov.nrows() || y.len() != st.cross.ncols() {
                    return Err(Error::Dimension(
                        "feature dimension disagrees with learner state".into(),
                    ));
                }
                linalg::sherman_morrison_update(&mut st.cov, &mut st.cov_inv, x);
                st.cross.ger(1.0, x, y, 1.0);
                st.cov_inv.mul_to(&st.cross, &mut st.estimate);
                st.count += 1;
            }
        }
        Ok(())
    }

    pub fn snapshot(&self) -> LearnerSnapshot {
        LearnerSnapshot {
            stats: self
                .stats
                .iter()
                .map(|per_h| {
                    per_h
                        .iter()
                        .map(|st| StatsSnapshot {
                            cov: linalg::matrix_to_rows(&st.cov),
                            cov_inv: linalg::matrix_to_rows(&st.cov_inv),
                            cross: linalg::matrix_to_rows(&st.cross),
                            estimate: linalg::matrix_to_rows(&st.estimate),
                            count: st.count,
                        })
                        .collect()
                })
                .collect(),
        }
    }

    pub fn restore(snapshot: &LearnerSnapshot) -> Result<Self> {
        let square = |rows: &Vec<Vec<f64>>| linalg::matrix_from_rows(rows, rows.len());
        let rect = |rows: &Vec<Vec<f64>>| {
            let cols = rows.first().map_or(0, Vec::len);
            linalg::matrix_from_rows(rows, cols)
        };
        let mut stats = Vec::with_capacity(snapshot.stats.len());
        for per_h in &snapshot.stats {
            let mut restored = Vec::with_capacity(per_h.len());
            for st in per_h {
                let cov = square(&st.cov)?;
                let cov_inv = square(&st.cov_inv)?;
                let cross = rect(&st.cross)?;
                let estimate = rect(&st.estimate)?;
                let d = cov.nrows();
                if cov_inv.nrows() != d
                    || cross.nrows() != d
                    || estimate.shape() != cross.shape()
                {
                    return Err(Error::Dimension("inconsistent learner snapshot".into()));
                }
                restored.push(RepStats {
                    cov,
                    cov_inv,
                    cross,
                    estimate,
                    count: st.count,
                });
            }
            stats.push(restored);
        }
        Ok(Self { stats })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsSnapshot {
    pub cov: Vec<Vec<f64>>,
    pub cov_inv: Vec<Vec<f64>>,
    pub cross: Vec<Vec<f64>>,
    pub estimate: Vec<Vec<f64>>,
    pub count: u64,
}

/// Serializable learner state, `stats[map][h]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerSnapshot {
    pub stats: Vec<Vec<StatsSnapshot>>,
}
