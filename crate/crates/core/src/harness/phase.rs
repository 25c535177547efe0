use serde::{Deserialize, Serialize};

use super::EpisodeRecord;

/// Per-episode regret at or below this is treated as zero.
pub const REGRET_ZERO_TOL: f64 = 1e-9;

/// Empirical counterpart of the constant-regret threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseReport {
    pub episodes: usize,
    /// Fewer than 10 episodes: window statistics are not meaningful.
    pub insufficient: bool,
    /// First episode after which every per-episode regret is zero; `None`
    /// when the final episode still has regret.
    pub k_hat: Option<usize>,
    pub early_mean: f64,
    pub late_mean: f64,
    /// `late_mean / early_mean`; `0/0` is reported as 0 and `x/0` as `+inf`.
    #[serde(with = "inf_as_string")]
    pub flatness_ratio: f64,
}

mod inf_as_string {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_infinite() {
            Repr::Text("inf".into()).serialize(s)
        } else {
            Repr::Num(*x).serialize(s)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(x),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("unexpected value {t}"))),
        }
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// `k̂* = 1 + last episode with nonzero regret`; flatness compares the mean
/// regret over the last 20% of episodes with the first 10%.
pub fn detect_phase(records: &[EpisodeRecord]) -> PhaseReport {
    let n = records.len();
    let regrets: Vec<f64> = records.iter().map(|r| r.ep_regret).collect();
    let last_nonzero = records
        .iter()
        .rev()
        .find(|r| r.ep_regret > REGRET_ZERO_TOL)
        .map(|r| r.episode);
    let k_hat = match last_nonzero {
        None => Some(1),
        Some(k) if Some(k) == records.last().map(|r| r.episode) => None,
        Some(k) => Some(k + 1),
    };
    let early_len = (n / 10).max(1).min(n);
    let late_len = (n / 5).max(1).min(n);
    let early_mean = mean(&regrets[..early_len]);
    let late_mean = mean(&regrets[n - late_len..]);
    let flatness_ratio = if early_mean > 0.0 {
        late_mean / early_mean
    } else if late_mean > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    PhaseReport {
        episodes: n,
        insufficient: n < 10,
        k_hat,
        early_mean,
        late_mean,
        flatness_ratio,
    }
}
