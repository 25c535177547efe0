use serde::{Deserialize, Serialize};

use super::RepresentationClass;
use crate::error::Result;

/// Above this many states `C_ψ` falls back to an upper bound.
pub const EXACT_C_PSI_MAX_STATES: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapConstants {
    pub name: String,
    pub d: usize,
    /// `max ‖φ(s,a)‖² / d`
    pub c_phi: f64,
    /// Pair index `s * |A| + a` attaining `c_phi`.
    pub c_phi_witness: usize,
    /// `max_h ‖M*_h‖_F² / d`
    pub c_m: f64,
    /// Step attaining `c_m` (0-based).
    pub c_m_witness: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantsReport {
    pub maps: Vec<MapConstants>,
    /// `sup_{‖v‖_∞ = 1} ‖Ψᵀ v‖₂` (or an upper bound, see `c_psi_exact`).
    pub c_psi: f64,
    pub c_psi_exact: bool,
    /// Maximising sign vector when `c_psi_exact`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_psi_witness: Option<Vec<i8>>,
    /// Largest row 2-norm of `Ψ K_ψ⁻¹`.
    pub c_psi_prime: f64,
    pub c_psi_prime_witness: usize,
}

/// Smallest constants satisfying the bilinear-MDP norm bounds for `class`.
pub fn compute_constants(class: &RepresentationClass) -> Result<ConstantsReport> {
    let psi = class.state_features()?;
    let mut maps = Vec::with_capacity(class.len());
    for (i, phi) in class.feature_maps.iter().enumerate() {
        let d = phi.d as f64;
        let (c_phi_witness, max_sq) = phi
            .table
            .iter()
            .map(|row| row.iter().map(|x| x * x).sum::<f64>())
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (j, v)| if v > best.1 { (j, v) } else { best });
        let (c_m_witness, max_fro) = class
            .model_matrices(i)?
            .iter()
            .map(|m| m.norm_squared())
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (h, v)| if v > best.1 { (h, v) } else { best });
        maps.push(MapConstants {
            name: phi.name.clone(),
            d: phi.d,
            c_phi: max_sq.max(0.0) / d,
            c_phi_witness,
            c_m: max_fro.max(0.0) / d,
            c_m_witness,
        });
    }

    let stacked = &psi.stacked;
    let (c_psi, c_psi_witness) = if stacked.nrows() <= EXACT_C_PSI_MAX_STATES {
        let (value, signs) = sup_norm_to_two_norm(stacked);
        (value, Some(signs))
    } else {
        let bound = (0..stacked.ncols())
            .map(|j| stacked.column(j).iter().map(|x| x.abs()).sum::<f64>().powi(2))
            .sum::<f64>()
            .sqrt();
        (bound, None)
    };

    let scaled = stacked * &psi.gram_inv;
    let (c_psi_prime_witness, c_psi_prime) = (0..scaled.nrows())
        .map(|s| scaled.row(s).norm())
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (s, v)| if v > best.1 { (s, v) } else { best });

    Ok(ConstantsReport {
        maps,
        c_psi,
        c_psi_exact: c_psi_witness.is_some(),
        c_psi_witness,
        c_psi_prime,
        c_psi_prime_witness,
    })
}

/// Exact `max_{v ∈ {±1}^n} ‖Ψᵀ v‖₂`, walking sign vectors in Gray-code
/// order with the first sign pinned to `+1` (the norm is even in `v`).
fn sup_norm_to_two_norm(psi: &nalgebra::DMatrix<f64>) -> (f64, Vec<i8>) {
    let n = psi.nrows();
    let mut signs = vec![1i8; n];
    let mut w: Vec<f64> = (0..psi.ncols()).map(|j| psi.column(j).sum()).collect();
    let mut best = (w.iter().map(|x| x * x).sum::<f64>(), signs.clone());
    let free = n.saturating_sub(1);
    for step in 1u64..(1u64 << free) {
        // Flip the sign at the position of the lowest set bit.
        let i = 1 + step.trailing_zeros() as usize;
        let delta = -2.0 * f64::from(signs[i]);
        for (j, wj) in w.iter_mut().enumerate() {
            *wj += delta * psi[(i, j)];
        }
        signs[i] = -signs[i];
        let norm_sq: f64 = w.iter().map(|x| x * x).sum();
        if norm_sq > best.0 {
            best = (norm_sq, signs.clone());
        }
    }
    (best.0.sqrt(), best.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::MdpSpec;
    use crate::representation::gen_tabular;

    fn brute_force_c_psi(psi: &nalgebra::DMatrix<f64>) -> f64 {
        let n = psi.nrows();
        (0u32..(1 << n))
            .map(|mask| {
                let v = nalgebra::DVector::from_fn(n, |i, _| if mask >> i & 1 == 1 { -1.0 } else { 1.0 });
                (psi.transpose() * v).norm()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn stay_or_leave_tabular_constants() {
        let spec = MdpSpec::stay_or_leave();
        let c = compute_constants(&gen_tabular(&spec).unwrap()).unwrap();
        assert_eq!(c.c_psi_prime, 1.0);
        assert!((c.c_psi - 2f64.sqrt()).abs() < 1e-15);
        let m = &c.maps[0];
        assert!((m.c_phi * m.d as f64 - 1.0).abs() < 1e-15);
        // Every row of P is a one-hot vector: four unit rows per step.
        assert!((m.c_m * m.d as f64 - 4.0).abs() < 1e-12);
        assert!(c.c_psi_exact);
    }

    #[test]
    fn scaling_psi_scales_constants() {
        let spec = MdpSpec::stay_or_leave();
        let base = gen_tabular(&spec).unwrap();
        let mut scaled = base.clone();
        for row in &mut scaled.psi {
            for x in row.iter_mut() {
                *x *= 2.0;
            }
        }
        let a = compute_constants(&base).unwrap();
        let b = compute_constants(&scaled).unwrap();
        assert!((b.c_psi - 2.0 * a.c_psi).abs() < 1e-12);
        assert!((b.c_psi_prime - 0.5 * a.c_psi_prime).abs() < 1e-12);
        let kb = scaled.state_features().unwrap().gram;
        assert!((kb[(0, 0)] - 4.0).abs() < 1e-15);
    }

    #[test]
    fn one_hot_psi_gives_sqrt_n() {
        for n in [1, 3, 6, 9] {
            let psi = nalgebra::DMatrix::<f64>::identity(n, n);
            let (v, signs) = sup_norm_to_two_norm(&psi);
            assert!((v - (n as f64).sqrt()).abs() < 1e-12);
            assert_eq!(signs.len(), n);
        }
    }

    #[test]
    fn gray_code_matches_brute_force() {
        let psi = nalgebra::DMatrix::from_row_slice(
            5,
            2,
            &[1.0, -0.3, 0.2, 0.9, -0.7, 0.4, 0.5, 0.5, 0.0, -1.2],
        );
        let (v, signs) = sup_norm_to_two_norm(&psi);
        assert!((v - brute_force_c_psi(&psi)).abs() < 1e-12);
        let sv = nalgebra::DVector::from_fn(5, |i, _| f64::from(signs[i]));
        assert!(((psi.transpose() * sv).norm() - v).abs() < 1e-12);
    }
}
