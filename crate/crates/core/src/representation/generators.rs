//! Instance generators whose representations factor the kernel exactly.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{compute_constants, coverage_check, FeatureMap, RepresentationClass};
use crate::error::{Error, Result};
use crate::linalg;
use crate::mdp::MdpSpec;
use crate::rng;

/// Rotations with a larger 2-norm condition number are rejected.
pub const MAX_ROTATION_CONDITION: f64 = 1e6;

pub fn one_hot_rows(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

/// One-hot `ψ` over states and one-hot `φ` over state-action pairs.
pub fn gen_tabular(spec: &MdpSpec) -> Result<RepresentationClass> {
    let phi = FeatureMap {
        name: "tabular".into(),
        d: spec.num_pairs(),
        table: one_hot_rows(spec.num_pairs()),
    };
    RepresentationClass::fit(spec, one_hot_rows(spec.num_states), vec![phi])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterParams {
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    pub num_clusters: usize,
    pub seed: u64,
    /// Instances whose smallest nonzero gap falls below this are redrawn.
    pub min_gap: f64,
    pub max_attempts: usize,
}

impl Default for ClusterParams {
    fn default() -> Self {
        Self {
            num_states: 6,
            num_actions: 2,
            horizon: 3,
            num_clusters: 2,
            seed: 7,
            min_gap: 0.25,
            max_attempts: 10_000,
        }
    }
}

fn normalized_weights(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Draws an MDP whose kernel `P_h(·|s,a)` depends only on a cluster label
/// `c(s,a)`, together with three exact representations:
///
/// - `pair_onehot`: one-hot over state-action pairs (`d = |S||A|`),
/// - `cluster_action_onehot`: one-hot over `(c(s,a), a)` (`d = C|A|`),
/// - `cluster_onehot`: one-hot over clusters (`d = C`).
///
/// Draws are repeated until the optimal policy is unique, the smallest
/// nonzero gap is at least `min_gap`, and the cluster map covers every pair
/// at every step.
pub fn gen_cluster_lowrank(params: &ClusterParams) -> Result<(MdpSpec, RepresentationClass)> {
    let ClusterParams {
        num_states: ns,
        num_actions: na,
        horizon: nh,
        num_clusters: nc,
        ..
    } = *params;
    if ns == 0 || na == 0 || nh == 0 {
        return Err(Error::InvalidParameter("states, actions and horizon must be positive".into()));
    }
    if nc == 0 || nc > ns * na {
        return Err(Error::InvalidParameter(format!(
            "num_clusters must lie in 1..={}",
            ns * na
        )));
    }
    let mut rng = rng::stream(params.seed, rng::GENERATOR);
    for _ in 0..params.max_attempts {
        let mut pairs: Vec<usize> = (0..ns * na).collect();
        pairs.shuffle(&mut rng);
        let mut cluster = vec![0usize; ns * na];
        for (i, &pair) in pairs.iter().enumerate() {
            cluster[pair] = if i < nc { i } else { rng.random_range(0..nc) };
        }
        let rows: Vec<Vec<Vec<f64>>> = (0..nh)
            .map(|_| (0..nc).map(|_| normalized_weights(&mut rng, ns)).collect())
            .collect();
        let mut rewards = vec![vec![vec![0.0; na]; ns]; nh];
        for rh in rewards.iter_mut() {
            for rs in rh.iter_mut() {
                let good = rng.random_range(0..na);
                for (a, r) in rs.iter_mut().enumerate() {
                    *r = if a == good {
                        rng.random_range(0.6..=1.0)
                    } else {
                        rng.random_range(0.0..=0.4)
                    };
                }
            }
        }
        let transitions = (0..nh)
            .map(|h| {
                (0..ns)
                    .map(|s| (0..na).map(|a| rows[h][cluster[s * na + a]].clone()).collect())
                    .collect()
            })
            .collect();
        let init_dist = normalized_weights(&mut rng, ns);
        let spec = MdpSpec {
            num_states: ns,
            num_actions: na,
            horizon: nh,
            rewards,
            transitions,
            init_dist,
        };
        let solution = spec.solve_optimal()?;
        if !solution.unique_optimal || solution.gap_min < params.min_gap {
            continue;
        }
        let one_hot = |d: usize, idx: usize| -> Vec<f64> {
            let mut v = vec![0.0; d];
            v[idx] = 1.0;
            v
        };
        let maps = vec![
            FeatureMap {
                name: "pair_onehot".into(),
                d: ns * na,
                table: one_hot_rows(ns * na),
            },
            FeatureMap {
                name: "cluster_action_onehot".into(),
                d: nc * na,
                table: (0..ns * na)
                    .map(|p| one_hot(nc * na, cluster[p] * na + p % na))
                    .collect(),
            },
            FeatureMap {
                name: "cluster_onehot".into(),
                d: nc,
                table: (0..ns * na).map(|p| one_hot(nc, cluster[p])).collect(),
            },
        ];
        let class = RepresentationClass::fit(&spec, one_hot_rows(ns), maps)?;
        let coarse = class.restrict(&[2])?;
        if !coverage_check(&coarse, &spec, &solution, 1e-7)?.assumption3_holds {
            continue;
        }
        return Ok((spec, class));
    }
    Err(Error::GeneratorExhausted(params.max_attempts))
}

/// Applies one random invertible map per feature map, drawn from `seed`.
pub fn gen_rotated(class: &RepresentationClass, seed: u64) -> Result<RepresentationClass> {
    let mut rng = rng::stream(seed, rng::GENERATOR);
    let rotations: Vec<DMatrix<f64>> = class
        .feature_maps
        .iter()
        .map(|phi| {
            DMatrix::from_fn(phi.d, phi.d, |i, j| {
                let base = if i == j { 1.0 } else { 0.0 };
                base + 0.5 * rng.random_range(-1.0..1.0)
            })
        })
        .collect();
    gen_rotated_with(class, &rotations)
}

/// `φ' = R φ`, `M'_h = R⁻ᵀ M_h`, so `φ'ᵀ M'_h ψ = φᵀ M_h ψ`.
pub fn gen_rotated_with(
    class: &RepresentationClass,
    rotations: &[DMatrix<f64>],
) -> Result<RepresentationClass> {
    if rotations.len() != class.len() {
        return Err(Error::Dimension(format!(
            "{} rotations for {} feature maps",
            rotations.len(),
            class.len()
        )));
    }
    let mut out = class.clone();
    for (i, r) in rotations.iter().enumerate() {
        let phi = &class.feature_maps[i];
        if r.nrows() != phi.d || r.ncols() != phi.d {
            return Err(Error::Dimension(format!(
                "rotation {i} must be {0}x{0}",
                phi.d
            )));
        }
        let cond = linalg::condition_number(r);
        if !(cond <= MAX_ROTATION_CONDITION) {
            return Err(Error::Singular(format!(
                "rotation {i} has condition number {cond:.3e}"
            )));
        }
        let inv_t = linalg::invert(r, "rotation")?.transpose();
        let stacked = phi.stacked()?;
        let rotated = stacked * r.transpose();
        out.feature_maps[i].table = linalg::matrix_to_rows(&rotated);
        out.models[i] = class
            .model_matrices(i)?
            .iter()
            .map(|m| linalg::matrix_to_rows(&(&inv_t * m)))
            .collect();
    }
    out.constants = Some(compute_constants(&out)?);
    Ok(out)
}
