//! Feature maps and exact bilinear factorizations `P_h(s'|s,a) = φ(s,a)ᵀ M_h ψ(s')`.

mod constants;
mod coverage;
mod generators;

pub use constants::{compute_constants, ConstantsReport, MapConstants, EXACT_C_PSI_MAX_STATES};
pub use coverage::{coverage_check, lambda_matrices, lambda_matrix, CoverageReport, MapCoverage};
pub use generators::{
    gen_cluster_lowrank, gen_rotated, gen_rotated_with, gen_tabular, one_hot_rows, ClusterParams,
    MAX_ROTATION_CONDITION,
};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::mdp::MdpSpec;

/// Residual above which a representation is rejected outright.
pub const FIT_TOLERANCE: f64 = 1e-6;
/// Residual every generated class must reach.
pub const EXACT_TOLERANCE: f64 = 1e-9;

/// Shared next-state features `ψ` with their Gram matrix and its inverse.
#[derive(Debug, Clone)]
pub struct StateFeatureMap {
    /// `Ψ`, one row per state.
    pub stacked: DMatrix<f64>,
    pub gram: DMatrix<f64>,
    pub gram_inv: DMatrix<f64>,
    /// Regression targets `K_ψ⁻¹ ψ(s')`, one per state.
    pub targets: Vec<DVector<f64>>,
}

impl StateFeatureMap {
    pub fn new(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || dim == 0 {
            return Err(Error::Dimension("psi must have at least one state and one column".into()));
        }
        let stacked = linalg::matrix_from_rows(rows, dim)?;
        let gram = stacked.transpose() * &stacked;
        let min_eig = linalg::min_eigenvalue(&gram);
        if !(min_eig > 1e-8) {
            return Err(Error::Singular(format!(
                "K_psi has minimum eigenvalue {min_eig:.3e}"
            )));
        }
        let gram_inv = linalg::invert(&gram, "K_psi")?;
        if linalg::identity_error(&gram, &gram_inv) > 1e-8 {
            return Err(Error::Numerical("K_psi inverse is inaccurate".into()));
        }
        let targets = (0..stacked.nrows())
            .map(|s| &gram_inv * stacked.row(s).transpose())
            .collect();
        Ok(Self {
            stacked,
            gram,
            gram_inv,
            targets,
        })
    }

    pub fn dim(&self) -> usize {
        self.stacked.ncols()
    }

    pub fn num_states(&self) -> usize {
        self.stacked.nrows()
    }

    /// `Ψᵀ v = Σ_{s'} ψ(s') v(s')`
    pub fn aggregate(&self, v: &[f64]) -> DVector<f64> {
        self.stacked.tr_mul(&DVector::from_column_slice(v))
    }
}

/// A state-action feature map `φ(s,a)`, shared across steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    pub name: String,
    pub d: usize,
    /// One row per pair, indexed `s * num_actions + a`.
    pub table: Vec<Vec<f64>>,
}

impl FeatureMap {
    pub fn stacked(&self) -> Result<DMatrix<f64>> {
        linalg::matrix_from_rows(&self.table, self.d)
    }

    pub fn vectors(&self) -> Vec<DVector<f64>> {
        self.table
            .iter()
            .map(|row| DVector::from_column_slice(row))
            .collect()
    }
}

/// True parameters of one feature map: `M*_h` for every step.
#[derive(Debug, Clone)]
pub struct BilinearModel {
    pub matrices: Vec<DMatrix<f64>>,
    pub residual: f64,
    /// `(h, s, a, s')` of the largest residual.
    pub worst: (usize, usize, usize, usize),
}

/// Least-squares fit of `M*_h = Φ⁺ P_h Ψ K_ψ⁻¹` for every step, rejecting
/// maps whose reconstruction misses the kernel by more than [`FIT_TOLERANCE`].
pub fn fit_true_model(
    spec: &MdpSpec,
    phi: &FeatureMap,
    psi: &StateFeatureMap,
) -> Result<BilinearModel> {
    spec.ensure_valid()?;
    if phi.table.len() != spec.num_pairs() {
        return Err(Error::Dimension(format!(
            "feature map '{}' has {} rows, expected {}",
            phi.name,
            phi.table.len(),
            spec.num_pairs()
        )));
    }
    if psi.num_states() != spec.num_states {
        return Err(Error::Dimension(format!(
            "psi has {} rows, expected {}",
            psi.num_states(),
            spec.num_states
        )));
    }
    let stacked = phi.stacked()?;
    let phi_pinv = linalg::pseudo_inverse(&stacked)?;
    let right = &psi.stacked * &psi.gram_inv;
    let matrices: Vec<DMatrix<f64>> = (0..spec.horizon)
        .map(|h| {
            let kernel = kernel_matrix(spec, h);
            &phi_pinv * kernel * &right
        })
        .collect();
    let (residual, worst) = reconstruction_residual(spec, &stacked, &matrices, &psi.stacked);
    if residual > FIT_TOLERANCE {
        let (h, s, a, next) = worst;
        return Err(Error::Factorization {
            h,
            s,
            a,
            next,
            residual,
        });
    }
    Ok(BilinearModel {
        matrices,
        residual,
        worst,
    })
}

/// `P_h` as an `|S||A| × |S|` matrix.
pub fn kernel_matrix(spec: &MdpSpec, h: usize) -> DMatrix<f64> {
    let na = spec.num_actions;
    DMatrix::from_fn(spec.num_pairs(), spec.num_states, |pair, next| {
        spec.transitions[h][pair / na][pair % na][next]
    })
}

/// Largest `|φᵀ M_h ψ(s') − P_h(s'|s,a)|` and where it occurs.
pub fn reconstruction_residual(
    spec: &MdpSpec,
    phi_stacked: &DMatrix<f64>,
    matrices: &[DMatrix<f64>],
    psi_stacked: &DMatrix<f64>,
) -> (f64, (usize, usize, usize, usize)) {
    let na = spec.num_actions;
    let mut worst = (0.0, (0, 0, 0, 0));
    for (h, m) in matrices.iter().enumerate() {
        let recon = phi_stacked * m * psi_stacked.transpose();
        for pair in 0..spec.num_pairs() {
            for next in 0..spec.num_states {
                let err = (recon[(pair, next)] - spec.transitions[h][pair / na][pair % na][next]).abs();
                if err > worst.0 || err.is_nan() {
                    worst = (err, (h, pair / na, pair % na, next));
                }
            }
        }
    }
    worst
}

/// Shared `ψ` plus a finite set of feature maps, each with its true `M*_h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepresentationClass {
    pub psi: Vec<Vec<f64>>,
    pub feature_maps: Vec<FeatureMap>,
    /// `models[map][h]` is a `d × d'` matrix stored row-major as nested rows.
    pub models: Vec<Vec<Vec<Vec<f64>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constants: Option<ConstantsReport>,
}

impl RepresentationClass {
    /// Fits every map against `spec` and computes the norm constants.
    pub fn fit(spec: &MdpSpec, psi: Vec<Vec<f64>>, feature_maps: Vec<FeatureMap>) -> Result<Self> {
        let state_features = StateFeatureMap::new(&psi)?;
        let mut models = Vec::with_capacity(feature_maps.len());
        for phi in &feature_maps {
            let model = fit_true_model(spec, phi, &state_features)?;
            models.push(model.matrices.iter().map(linalg::matrix_to_rows).collect());
        }
        let mut class = Self {
            psi,
            feature_maps,
            models,
            constants: None,
        };
        class.constants = Some(compute_constants(&class)?);
        Ok(class)
    }

    pub fn len(&self) -> usize {
        self.feature_maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.feature_maps.is_empty()
    }

    pub fn psi_dim(&self) -> usize {
        self.psi.first().map_or(0, Vec::len)
    }

    pub fn state_features(&self) -> Result<StateFeatureMap> {
        StateFeatureMap::new(&self.psi)
    }

    pub fn model(&self, map: usize, h: usize) -> Result<DMatrix<f64>> {
        linalg::matrix_from_rows(&self.models[map][h], self.psi_dim())
    }

    pub fn model_matrices(&self, map: usize) -> Result<Vec<DMatrix<f64>>> {
        (0..self.models[map].len())
            .map(|h| self.model(map, h))
            .collect()
    }

    pub fn constants(&self) -> Result<&ConstantsReport> {
        self.constants.as_ref().ok_or(Error::MissingConstants)
    }

    /// Structural agreement with `spec`: row counts, dimensions, model shapes.
    pub fn check_shapes(&self, spec: &MdpSpec) -> Result<()> {
        if self.feature_maps.is_empty() {
            return Err(Error::Dimension("representation class is empty".into()));
        }
        if self.psi.len() != spec.num_states {
            return Err(Error::Dimension(format!(
                "psi has {} rows, expected {}",
                self.psi.len(),
                spec.num_states
            )));
        }
        let dp = self.psi_dim();
        if self.psi.iter().any(|r| r.len() != dp) {
            return Err(Error::Dimension("psi rows have unequal length".into()));
        }
        if self.models.len() != self.feature_maps.len() {
            return Err(Error::Dimension("one model per feature map is required".into()));
        }
        for (phi, model) in self.feature_maps.iter().zip(&self.models) {
            if phi.d == 0 {
                return Err(Error::Dimension(format!("feature map '{}' has d = 0", phi.name)));
            }
            if phi.table.len() != spec.num_pairs() || phi.table.iter().any(|r| r.len() != phi.d) {
                return Err(Error::Dimension(format!(
                    "feature map '{}' must be {}x{}",
                    phi.name,
                    spec.num_pairs(),
                    phi.d
                )));
            }
            if model.len() != spec.horizon
                || model
                    .iter()
                    .any(|m| m.len() != phi.d || m.iter().any(|r| r.len() != dp))
            {
                return Err(Error::Dimension(format!(
                    "model for '{}' must be {}x{}x{}",
                    phi.name, spec.horizon, phi.d, dp
                )));
            }
        }
        Ok(())
    }

    /// Largest reconstruction residual over all maps, with the offending map.
    pub fn residual(&self, spec: &MdpSpec) -> Result<(f64, usize, (usize, usize, usize, usize))> {
        self.check_shapes(spec)?;
        let psi = linalg::matrix_from_rows(&self.psi, self.psi_dim())?;
        let mut worst = (0.0, 0, (0, 0, 0, 0));
        for (i, phi) in self.feature_maps.iter().enumerate() {
            let (r, at) =
                reconstruction_residual(spec, &phi.stacked()?, &self.model_matrices(i)?, &psi);
            if r > worst.0 || r.is_nan() {
                worst = (r, i, at);
            }
        }
        Ok(worst)
    }

    /// Keeps only the listed maps, in the given order.
    pub fn restrict(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InvalidParameter("cannot restrict to an empty class".into()));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::InvalidParameter(format!("no feature map with index {bad}")));
        }
        let constants = self.constants.as_ref().map(|c| ConstantsReport {
            maps: indices.iter().map(|&i| c.maps[i].clone()).collect(),
            ..c.clone()
        });
        Ok(Self {
            psi: self.psi.clone(),
            feature_maps: indices.iter().map(|&i| self.feature_maps[i].clone()).collect(),
            models: indices.iter().map(|&i| self.models[i].clone()).collect(),
            constants,
        })
    }

    /// Replaces every model with an explicit `M_h` (used by tests that
    /// deliberately corrupt a class).
    pub fn with_models(mut self, models: Vec<Vec<DMatrix<f64>>>) -> Self {
        self.models = models
            .iter()
            .map(|per_h| per_h.iter().map(linalg::matrix_to_rows).collect())
            .collect();
        self
    }
}
