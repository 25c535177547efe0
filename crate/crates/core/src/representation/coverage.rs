//! Diversity matrices `Λ_{h,φ}` under the optimal policy and the coverage
//! sets they induce.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{FeatureMap, RepresentationClass};
use crate::error::{Error, Result};
use crate::linalg;
use crate::mdp::{MdpSpec, OccupancyMeasure, OptimalSolution};

fn optimal_occupancy(spec: &MdpSpec, solution: &OptimalSolution) -> Result<OccupancyMeasure> {
    spec.occupancy(&solution.pi_star)
}

fn lambda_from_occupancy(
    spec: &MdpSpec,
    solution: &OptimalSolution,
    phi: &FeatureMap,
    occupancy: &OccupancyMeasure,
    h: usize,
) -> DMatrix<f64> {
    let mut lambda = DMatrix::zeros(phi.d, phi.d);
    for (s, &mass) in occupancy.dist[h].iter().enumerate() {
        if mass == 0.0 {
            continue;
        }
        let a = solution.pi_star.action(h, s);
        let x = DVector::from_column_slice(&phi.table[spec.pair_index(s, a)]);
        lambda.ger(mass, &x, &x, 1.0);
    }
    lambda
}

/// `Λ_{h,φ} = Σ_s d_h(s) φ(s, π*_h(s)) φ(s, π*_h(s))ᵀ`
pub fn lambda_matrix(
    spec: &MdpSpec,
    solution: &OptimalSolution,
    phi: &FeatureMap,
    h: usize,
) -> Result<DMatrix<f64>> {
    if h >= spec.horizon {
        return Err(Error::InvalidParameter(format!("step {h} beyond horizon")));
    }
    let occ = optimal_occupancy(spec, solution)?;
    Ok(lambda_from_occupancy(spec, solution, phi, &occ, h))
}

pub fn lambda_matrices(
    spec: &MdpSpec,
    solution: &OptimalSolution,
    phi: &FeatureMap,
) -> Result<Vec<DMatrix<f64>>> {
    let occ = optimal_occupancy(spec, solution)?;
    Ok((0..spec.horizon)
        .map(|h| lambda_from_occupancy(spec, solution, phi, &occ, h))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapCoverage {
    pub name: String,
    /// `Λ_{h,φ}` per step.
    pub lambdas: Vec<Vec<Vec<f64>>>,
    /// Eigenvalues above the rank tolerance, per step, decreasing.
    pub retained_eigenvalues: Vec<Vec<f64>>,
    /// Orthonormal basis of the retained eigenspace per step (`d × r`, rows).
    pub bases: Vec<Vec<Vec<f64>>>,
    /// Smallest retained eigenvalue over non-degenerate steps.
    pub sigma: Option<f64>,
    /// Steps whose `Λ` has no retained eigenvalue at all (0-based).
    pub degenerate_steps: Vec<usize>,
    /// `covered[h][pair]`: membership in `Z_{h,φ}`.
    pub covered: Vec<Vec<bool>>,
}

impl MapCoverage {
    pub fn basis(&self, h: usize) -> DMatrix<f64> {
        let rows = &self.bases[h];
        let d = rows.len();
        let r = rows.first().map_or(0, Vec::len);
        DMatrix::from_fn(d, r, |i, j| rows[i][j])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairAtStep {
    pub h: usize,
    pub s: usize,
    pub a: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub rank_tol: f64,
    pub maps: Vec<MapCoverage>,
    pub union_covered: Vec<bool>,
    pub uncovered: Vec<PairAtStep>,
    pub assumption3_holds: bool,
}

impl CoverageReport {
    /// Pairs covered by some map at some step, as a flat `[h][pair]` mask.
    pub fn union_mask(&self) -> Vec<Vec<bool>> {
        let nh = self.union_covered.len();
        let np = self.maps.first().map_or(0, |m| m.covered[0].len());
        (0..nh)
            .map(|h| {
                (0..np)
                    .map(|p| self.maps.iter().any(|m| m.covered[h][p]))
                    .collect()
            })
            .collect()
    }
}

/// Eigendecomposes every `Λ_{h,φ}` and tests each `φ(s,a)` for membership
/// in the retained eigenspace (relative tolerance `rank_tol`).
pub fn coverage_check(
    class: &RepresentationClass,
    spec: &MdpSpec,
    solution: &OptimalSolution,
    rank_tol: f64,
) -> Result<CoverageReport> {
    if !(rank_tol > 0.0 && rank_tol < 1.0) {
        return Err(Error::InvalidParameter(format!("rank_tol {rank_tol} not in (0, 1)")));
    }
    class.check_shapes(spec)?;
    let occ = optimal_occupancy(spec, solution)?;
    let mut maps = Vec::with_capacity(class.len());
    for phi in &class.feature_maps {
        let vectors = phi.vectors();
        let mut lambdas = Vec::with_capacity(spec.horizon);
        let mut retained = Vec::with_capacity(spec.horizon);
        let mut bases = Vec::with_capacity(spec.horizon);
        let mut covered = Vec::with_capacity(spec.horizon);
        let mut degenerate = Vec::new();
        let mut sigma: Option<f64> = None;
        for h in 0..spec.horizon {
            let lambda = lambda_from_occupancy(spec, solution, phi, &occ, h);
            let (values, basis) = linalg::retained_eigenspace(&lambda, rank_tol);
            match values.last() {
                Some(&smallest) => sigma = Some(sigma.map_or(smallest, |s| s.min(smallest))),
                None => degenerate.push(h),
            }
            let mask = vectors
                .iter()
                .map(|x| {
                    let projected = &basis * basis.tr_mul(x);
                    (x - projected).norm() <= rank_tol * x.norm()
                })
                .collect();
            lambdas.push(linalg::matrix_to_rows(&lambda));
            retained.push(values);
            bases.push(linalg::matrix_to_rows(&basis));
            covered.push(mask);
        }
        maps.push(MapCoverage {
            name: phi.name.clone(),
            lambdas,
            retained_eigenvalues: retained,
            bases,
            sigma,
            degenerate_steps: degenerate,
            covered,
        });
    }
    let mut union_covered = vec![true; spec.horizon];
    let mut uncovered = Vec::new();
    for (h, union) in union_covered.iter_mut().enumerate() {
        for s in 0..spec.num_states {
            for a in 0..spec.num_actions {
                let pair = spec.pair_index(s, a);
                if !maps.iter().any(|m| m.covered[h][pair]) {
                    *union = false;
                    uncovered.push(PairAtStep { h, s, a });
                }
            }
        }
    }
    let assumption3_holds = uncovered.is_empty();
    Ok(CoverageReport {
        rank_tol,
        maps,
        union_covered,
        uncovered,
        assumption3_holds,
    })
}
