use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::representation::ConstantsReport;

/// Per-map quantities entering the confidence radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapScale {
    pub d: usize,
    pub c_m: f64,
    pub c_phi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaRule {
    /// `β_{k,φ} = c (C_M + C'_ψ²) d_φ log(k H C_φ |Φ| / δ)`
    Theorem { c: f64, delta: f64 },
    /// The same value for every episode and map.
    Constant(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaSchedule {
    pub rule: BetaRule,
    pub horizon: usize,
    /// `|Φ|` inside the logarithm.
    pub class_size: usize,
    pub c_psi_prime: f64,
    pub maps: Vec<MapScale>,
}

impl BetaSchedule {
    pub fn from_parts(
        rule: BetaRule,
        horizon: usize,
        class_size: usize,
        c_psi_prime: f64,
        maps: Vec<MapScale>,
    ) -> Result<Self> {
        match rule {
            BetaRule::Theorem { c, delta } => {
                if !(c > 0.0 && c.is_finite()) {
                    return Err(Error::InvalidParameter(format!("c must be positive, got {c}")));
                }
                if !(delta > 0.0 && delta < 1.0) {
                    return Err(Error::InvalidParameter(format!(
                        "delta must lie in (0, 1), got {delta}"
                    )));
                }
            }
            BetaRule::Constant(value) => {
                if !(value >= 0.0 && value.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "constant beta must be nonnegative, got {value}"
                    )));
                }
            }
        }
        if horizon == 0 || class_size == 0 {
            return Err(Error::InvalidParameter("horizon and class size must be positive".into()));
        }
        Ok(Self {
            rule,
            horizon,
            class_size,
            c_psi_prime,
            maps,
        })
    }

    pub fn new(rule: BetaRule, constants: &ConstantsReport, horizon: usize) -> Result<Self> {
        let maps = constants
            .maps
            .iter()
            .map(|m| MapScale {
                d: m.d,
                c_m: m.c_m,
                c_phi: m.c_phi,
            })
            .collect::<Vec<_>>();
        Self::from_parts(rule, horizon, maps.len(), constants.c_psi_prime, maps)
    }

    /// Confidence parameter for episode `k` (1-based) and map index `map`.
    /// The logarithm's argument is clamped below at `e`.
    pub fn beta(&self, k: usize, map: usize) -> f64 {
        match self.rule {
            BetaRule::Constant(value) => value,
            BetaRule::Theorem { c, delta } => {
                let m = &self.maps[map];
                let arg = k.max(1) as f64 * self.horizon as f64 * m.c_phi * self.class_size as f64
                    / delta;
                let log = arg.max(std::f64::consts::E).ln();
                c * (m.c_m + self.c_psi_prime * self.c_psi_prime) * m.d as f64 * log
            }
        }
    }
}

/// `Γ = C_ψ H sqrt(β φᵀ U⁻¹ φ)`.
pub fn bonus(
    phi: &DVector<f64>,
    cov_inv: &DMatrix<f64>,
    beta: f64,
    c_psi: f64,
    horizon: usize,
) -> Result<f64> {
    let quad = linalg::quad_form(cov_inv, phi);
    if quad < -1e-10 {
        return Err(Error::Numerical(format!(
            "negative quadratic form {quad:.3e}: covariance inverse is broken"
        )));
    }
    Ok(c_psi * horizon as f64 * (beta * quad.max(0.0)).sqrt())
}
